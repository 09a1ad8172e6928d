/**
 * Deterministic SVG assembly: fixed canvas, fixed number formatting, no
 * clocks or randomness anywhere. Identical inputs must give identical bytes.
 */

export interface Scale {
  domain: [number, number];
  range: [number, number];
}

export function makeScale(domain: [number, number], range: [number, number]): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    // degenerate domain: pad so the single value sits mid-range
    d0 -= 1;
    d1 += 1;
  }
  return { domain: [d0, d1], range };
}

export function scaleApply(s: Scale, x: number): number {
  const [d0, d1] = s.domain;
  const [r0, r1] = s.range;
  return r0 + ((x - d0) / (d1 - d0)) * (r1 - r0);
}

/** Coordinate formatting; collapses -0.00 to 0.00 so output is stable. */
export function fmt(x: number): string {
  const s = x.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

/** Round tick positions covering [lo, hi] with roughly `count` steps. */
export function niceTicks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= step0) {
      step = m * mag;
      break;
    }
  }
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    // snap away float crumbs so tick labels are stable
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5) return `${trimNum(v / 1000)}k`;
  if (a >= 1 && Number.isInteger(v)) return String(v);
  return trimNum(v);
}

function trimNum(v: number): string {
  return String(parseFloat(v.toPrecision(6)));
}

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Fixed qualitative palette, assigned by sorted key order. */
export const PALETTE = [
  "#4878d0", "#ee854a", "#6acc64", "#d65f5f",
  "#956cb4", "#8c613c", "#dc7ec0", "#797979",
];

export function colorFor(index: number): string {
  return PALETTE[index % PALETTE.length]!;
}

export class SvgDoc {
  readonly width: number;
  readonly height: number;
  private parts: string[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
  }

  push(fragment: string): void {
    this.parts.push(fragment);
  }

  line(x1: number, y1: number, x2: number, y2: number, attrs: string): void {
    this.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ${attrs}/>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, attrs: string): void {
    this.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" ${attrs}/>`,
    );
  }

  circle(cx: number, cy: number, r: number, attrs: string): void {
    this.push(`<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(r)}" ${attrs}/>`);
  }

  path(d: string, attrs: string): void {
    this.push(`<path d="${d}" ${attrs}/>`);
  }

  text(x: number, y: number, content: string, attrs: string): void {
    this.push(`<text x="${fmt(x)}" y="${fmt(y)}" ${attrs}>${esc(content)}</text>`);
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}" font-family="Helvetica, Arial, sans-serif">`,
      `<rect x="0" y="0" width="${this.width}" height="${this.height}" fill="#ffffff"/>`,
      ...this.parts,
      "</svg>",
    ].join("\n");
  }
}

export interface Frame {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

/** Axes, tick marks, tick labels, and optional axis titles. */
export function drawAxes(
  doc: SvgDoc,
  frame: Frame,
  xScale: Scale,
  yScale: Scale,
  xTicks: number[],
  yTicks: number[],
  xLabel: string,
  yLabel: string,
): void {
  const axis = 'stroke="#222222" stroke-width="1"';
  const grid = 'stroke="#dddddd" stroke-width="0.5"';
  const label = 'font-size="11" fill="#222222"';
  for (const t of yTicks) {
    const y = scaleApply(yScale, t);
    doc.line(frame.x0, y, frame.x1, y, grid);
    doc.line(frame.x0 - 4, y, frame.x0, y, axis);
    doc.text(frame.x0 - 7, y + 3.5, tickLabel(t), `${label} text-anchor="end"`);
  }
  for (const t of xTicks) {
    const x = scaleApply(xScale, t);
    doc.line(x, frame.y1, x, frame.y1 + 4, axis);
    doc.text(x, frame.y1 + 16, tickLabel(t), `${label} text-anchor="middle"`);
  }
  doc.line(frame.x0, frame.y0, frame.x0, frame.y1, axis);
  doc.line(frame.x0, frame.y1, frame.x1, frame.y1, axis);
  if (xLabel !== "") {
    doc.text((frame.x0 + frame.x1) / 2, frame.y1 + 34, xLabel, `${label} text-anchor="middle"`);
  }
  if (yLabel !== "") {
    const cx = frame.x0 - 42;
    const cy = (frame.y0 + frame.y1) / 2;
    doc.push(
      `<text x="${fmt(cx)}" y="${fmt(cy)}" font-size="11" fill="#222222" text-anchor="middle" transform="rotate(-90 ${fmt(cx)} ${fmt(cy)})">${esc(yLabel)}</text>`,
    );
  }
}
