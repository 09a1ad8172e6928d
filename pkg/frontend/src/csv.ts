import { readFileSync } from "fs";
import Papa from "papaparse";

/** Key=value metadata from the leading `# ...` comment line. */
export interface TableMeta {
  [key: string]: string;
}

export interface Table {
  path: string;
  meta: TableMeta;
  columns: string[];
  rows: Record<string, string>[];
}

export class SchemaError extends Error {}

/**
 * Read one experiment CSV: a `# k=v ...` comment line, a header row, then
 * data rows. Fields may be double-quoted (attack labels contain commas).
 */
export function readTable(path: string): Table {
  const raw = readFileSync(path, "utf8");
  const nl = raw.indexOf("\n");
  const first = nl === -1 ? raw : raw.slice(0, nl);
  if (!first.startsWith("#")) {
    throw new SchemaError(`${path}: missing metadata comment line`);
  }
  const meta: TableMeta = {};
  for (const item of first.slice(1).trim().split(/\s+/)) {
    if (item === "") continue;
    const eq = item.indexOf("=");
    if (eq <= 0) {
      throw new SchemaError(`${path}: bad metadata item ${JSON.stringify(item)}`);
    }
    meta[item.slice(0, eq)] = item.slice(eq + 1);
  }
  const body = nl === -1 ? "" : raw.slice(nl + 1);
  const parsed = Papa.parse<Record<string, string>>(body.trimEnd(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0]!;
    throw new SchemaError(`${path}: row ${e.row}: ${e.message}`);
  }
  const columns = parsed.meta.fields ?? [];
  return { path, meta, columns, rows: parsed.data };
}

/** Assert the table has every listed column, naming the first one missing. */
export function requireColumns(table: Table, needed: string[]): void {
  for (const col of needed) {
    if (!table.columns.includes(col)) {
      throw new SchemaError(`${table.path}: missing column ${JSON.stringify(col)}`);
    }
  }
}

export function numField(table: Table, row: Record<string, string>, col: string): number {
  const v = row[col];
  const x = Number(v);
  if (v === undefined || v === "" || !Number.isFinite(x)) {
    throw new SchemaError(
      `${table.path}: column ${JSON.stringify(col)} has non-numeric value ${JSON.stringify(v)}`,
    );
  }
  return x;
}
