import { describe, test, expect } from "vitest";
import { fileURLToPath } from "url";
import { readTable } from "../src/csv.js";
import {
  loadStatsCells, layoutBoxes, renderBoxes, DigestError, BoxCell,
} from "../src/boxes.js";
import { makeScale, scaleApply, fmt } from "../src/svg.js";

const fix = (name: string) =>
  fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));

function rawRows(path: string) {
  const t = readTable(path);
  return t.rows.map((r) => ({
    method: r.method!,
    attack: r.attack!,
    p25: Number(r.p25),
    p50: Number(r.p50),
    p75: Number(r.p75),
    whiskerLo: Number(r.whisker_lo),
    whiskerHi: Number(r.whisker_hi),
    outliers: r.outliers === "" ? [] : r.outliers!.split(";").map(Number),
  }));
}

describe("loadStatsCells", () => {
  test("quartiles, whiskers, and outliers are the table values verbatim", () => {
    const cells = loadStatsCells([fix("stats.csv")]);
    const want = rawRows(fix("stats.csv"));
    expect(cells).toHaveLength(want.length);
    for (const w of want) {
      const c = cells.find((c) => c.method === w.method && c.attack === w.attack)!;
      expect(c).toBeDefined();
      expect(c.p25).toBe(w.p25);
      expect(c.p50).toBe(w.p50);
      expect(c.p75).toBe(w.p75);
      expect(c.whiskerLo).toBe(w.whiskerLo);
      expect(c.whiskerHi).toBe(w.whiskerHi);
      expect(c.outliers).toEqual(w.outliers);
    }
  });

  test("fixture has planted outliers and their count survives loading", () => {
    const cells = loadStatsCells([fix("stats.csv")]);
    const total = cells.reduce((n, c) => n + c.outliers.length, 0);
    expect(total).toBeGreaterThanOrEqual(2);
  });

  test("one cell with one seed degenerates to a point box", () => {
    const cells = loadStatsCells([fix("stats_degenerate.csv")]);
    expect(cells).toHaveLength(1);
    const c = cells[0]!;
    expect(c.nSeeds).toBe(1);
    expect(c.p25).toBe(c.p50);
    expect(c.p75).toBe(c.p50);
    expect(c.whiskerLo).toBe(c.p50);
    expect(c.whiskerHi).toBe(c.p50);
    expect(c.outliers).toEqual([]);
  });

  test("same cell under different digests is refused", () => {
    expect(() =>
      loadStatsCells([fix("stats.csv"), fix("stats_conflict.csv")]),
    ).toThrow(DigestError);
    expect(() =>
      loadStatsCells([fix("stats.csv"), fix("stats_conflict.csv")]),
    ).toThrow(/different config digests/);
  });
});

describe("renderBoxes", () => {
  test("whisker line endpoints sit exactly at the table values", () => {
    const cells = loadStatsCells([fix("stats.csv")]);
    const layout = layoutBoxes(cells);
    const svg = renderBoxes(layout);
    const ys = makeScale(layout.yDomain, [layout.frame.y1, layout.frame.y0]);
    const capAt = (y: string) =>
      new RegExp(
        `<line [^>]*y1="${y.replace(".", "\\.")}" [^>]*y2="${y.replace(".", "\\.")}" [^>]*class="whisker-cap"`,
      );
    for (const b of layout.boxes) {
      // the cap line y must be the pixel position of the exact table value
      expect(svg).toMatch(capAt(fmt(scaleApply(ys, b.cell.whiskerHi))));
      expect(svg).toMatch(capAt(fmt(scaleApply(ys, b.cell.whiskerLo))));
    }
  });

  test("outliers are hollow circles, one per table entry", () => {
    const cells = loadStatsCells([fix("stats.csv")]);
    const total = cells.reduce((n, c) => n + c.outliers.length, 0);
    const svg = renderBoxes(layoutBoxes(cells));
    const circles = svg.match(/<circle [^>]*class="outlier"/g) ?? [];
    expect(circles).toHaveLength(total);
    for (const c of circles) {
      expect(c).toContain('fill="none"');
    }
  });

  test("is deterministic byte for byte", () => {
    const a = renderBoxes(layoutBoxes(loadStatsCells([fix("stats.csv")])));
    const b = renderBoxes(layoutBoxes(loadStatsCells([fix("stats.csv")])));
    expect(a).toBe(b);
  });

  test("degenerate box renders without outliers", () => {
    const svg = renderBoxes(layoutBoxes(loadStatsCells([fix("stats_degenerate.csv")])));
    expect(svg.match(/class="outlier"/g)).toBeNull();
    expect(svg.match(/class="iqr-box"/g)).toHaveLength(1);
  });

  test("grouping is method x attack with one box per cell", () => {
    const cells = loadStatsCells([fix("stats.csv")]);
    const layout = layoutBoxes(cells);
    expect(layout.boxes).toHaveLength(cells.length);
    expect(layout.attacks.length).toBeGreaterThanOrEqual(2);
    expect(layout.methods.length).toBeGreaterThanOrEqual(2);
    // every cell lands inside its attack group's x-slot
    const groupWidth = (layout.frame.x1 - layout.frame.x0) / layout.attacks.length;
    for (const b of layout.boxes) {
      const g = layout.attacks.indexOf(b.cell.attack);
      expect(b.cx).toBeGreaterThan(layout.frame.x0 + g * groupWidth);
      expect(b.cx).toBeLessThan(layout.frame.x0 + (g + 1) * groupWidth);
    }
  });
});
