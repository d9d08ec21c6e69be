#!/usr/bin/env node
/** Batch figure renderer: `render <spec.json> -o out/`.
 *
 *  The spec lists figures to render from the CLI's CSV outputs:
 *    { "figures": [ { "kind": "fig-torsion", "input": "path.csv",
 *                     "name"?: "custom-output-stem" } ] }
 */

import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { basename, dirname, join, resolve } from "node:path";
import { readCsv } from "./csv.js";
import { renderFigure, FigureKind } from "./figures.js";

const KINDS: FigureKind[] = [
  "fig-bm-sphere", "fig-torsion", "fig-hormander", "einstein",
];

export interface FigureSpec {
  kind: FigureKind;
  input: string;
  name?: string;
}

export interface RenderSpec {
  figures: FigureSpec[];
}

export function loadSpec(path: string): RenderSpec {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf-8"));
  } catch (e) {
    throw new Error(`cannot read spec ${path}: ${(e as Error).message}`);
  }
  const spec = raw as RenderSpec;
  if (!Array.isArray(spec.figures) || spec.figures.length === 0) {
    throw new Error(`${path}: spec must contain a non-empty "figures" array`);
  }
  for (const f of spec.figures) {
    if (!KINDS.includes(f.kind)) {
      throw new Error(`${path}: unknown figure kind "${f.kind}" (have: ${KINDS.join(", ")})`);
    }
    if (typeof f.input !== "string") {
      throw new Error(`${path}: figure entry is missing "input"`);
    }
  }
  return spec;
}

/** Render every figure in the spec; returns the written file paths.
 *  Relative inputs resolve against the spec file's directory. */
export function renderSpec(specPath: string, outDir: string): string[] {
  const spec = loadSpec(specPath);
  const base = dirname(resolve(specPath));
  mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  for (const f of spec.figures) {
    const input = resolve(base, f.input);
    const table = readCsv(input);
    const svg = renderFigure(f.kind, table);
    const stem = f.name ?? basename(f.input).replace(/\.csv$/, "");
    const out = join(outDir, `${stem}.svg`);
    writeFileSync(out, svg);
    written.push(out);
  }
  return written;
}

function cliMain(argv: string[]): number {
  const args = argv.slice(2);
  let outDir = "out";
  const positional: string[] = [];
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "-o" || args[i] === "--out") {
      outDir = args[++i];
      if (outDir === undefined) {
        console.error("missing value for -o/--out");
        return 2;
      }
    } else {
      positional.push(args[i]);
    }
  }
  if (positional.length !== 1) {
    console.error("usage: render <spec.json> -o out/");
    return 2;
  }
  try {
    for (const p of renderSpec(positional[0], outDir)) {
      console.log(p);
    }
  } catch (e) {
    console.error((e as Error).message);
    return 1;
  }
  return 0;
}

const isMain = process.argv[1] !== undefined
  && import.meta.url === new URL(`file://${resolve(process.argv[1])}`).href;
if (isMain) {
  process.exit(cliMain(process.argv));
}
