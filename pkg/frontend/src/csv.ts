import { readFileSync } from "node:fs";

export const SCHEMA = "# roughmanifold-csv v1";

export interface Table {
  /** key/value pairs parsed from the `# key: value` comment lines */
  comments: Record<string, string>;
  columns: string[];
  /** row-major numeric data, one entry per data line */
  rows: number[][];
}

export class CsvError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CsvError";
  }
}

/** Parse one of the CLI's CSV outputs.  The first line must be the
 *  versioned schema header; subsequent `#` lines are comments of the
 *  form `key: value`; then a column header row and numeric rows. */
export function parseCsv(text: string, source = "<csv>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0 || lines[0].trim() !== SCHEMA) {
    throw new CsvError(`${source}: missing schema header "${SCHEMA}"`);
  }
  const comments: Record<string, string> = {};
  let i = 1;
  for (; i < lines.length && lines[i].startsWith("#"); i++) {
    const body = lines[i].slice(1).trim();
    const colon = body.indexOf(":");
    if (colon > 0) {
      comments[body.slice(0, colon).trim()] = body.slice(colon + 1).trim();
    }
  }
  if (i >= lines.length) {
    throw new CsvError(`${source}: no column header row`);
  }
  const columns = lines[i].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let j = i + 1; j < lines.length; j++) {
    const cells = lines[j].split(",");
    if (cells.length !== columns.length) {
      throw new CsvError(
        `${source}:${j + 1}: expected ${columns.length} cells, got ${cells.length}`,
      );
    }
    const row = cells.map((c) => Number(c));
    const bad = row.findIndex((v) => Number.isNaN(v));
    if (bad >= 0) {
      throw new CsvError(`${source}:${j + 1}: non-numeric cell "${cells[bad]}"`);
    }
    rows.push(row);
  }
  return { comments, columns, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(readFileSync(path, "utf-8"), path);
}

/** Column accessor; a missing column is a hard error, never a default. */
export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new CsvError(
      `missing column "${name}" (have: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((r) => r[idx]);
}

export function requireColumns(table: Table, names: string[]): void {
  for (const n of names) column(table, n);
}
