import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { readCsv, parseCsv, SCHEMA } from "../src/csv.js";
import {
  renderBmSphere, renderTorsion, renderHormander, renderEinstein,
} from "../src/figures.js";
import { renderSpec, loadSpec } from "../src/render.js";

const sample = (name: string) =>
  readCsv(new URL(`../samples/${name}`, import.meta.url).pathname);

describe("figure renderers on the shipped samples", () => {
  it("renders the sphere development two-panel figure", () => {
    const svg = renderBmSphere(sample("fig-bm-sphere.csv"));
    expect(svg).toContain("<svg");
    expect(svg).toContain("planar driver");
    expect(svg).toContain("rolling frame");
    // both panels carry a path
    expect(svg.match(/<polyline/g)!.length).toBeGreaterThan(2);
  });

  it("renders the torsion comparison with the deviation annotation", () => {
    const svg = renderTorsion(sample("fig-torsion.csv"));
    expect(svg).toContain("development (torsion connection)");
    expect(svg).toContain("max deviation: 5.330");
  });

  it.each([1, 2, 3, 4])("renders the case %i point cloud", (c) => {
    const svg = renderHormander(sample(`fig-hormander-case${c}.csv`));
    expect(svg).toContain("PCA eigenvalues:");
    expect(svg.match(/<circle/g)!.length).toBeGreaterThan(100);
  });

  it("renders the decay figure with both reference curves", () => {
    const svg = renderEinstein(sample("einstein.csv"));
    expect(svg).toContain("lambda = 1");
    expect(svg).toContain("e^(-t/2)");
    expect(svg).toContain("e^(-t)");
  });

  it("is a pure function of the csv text", () => {
    const t = sample("fig-torsion.csv");
    expect(renderTorsion(t)).toBe(renderTorsion(t));
  });
});

describe("loud failures", () => {
  it("rejects a csv lacking the figure's columns", () => {
    const t = parseCsv(`${SCHEMA}\nt,a\n0,1`);
    expect(() => renderTorsion(t)).toThrow(/missing column/);
    expect(() => renderEinstein(t)).toThrow(/missing column/);
  });

  it("rejects a cloud csv without the PCA annotation", () => {
    const t = parseCsv(`${SCHEMA}\nseed,x,y,z\n0,1,2,3`);
    expect(() => renderHormander(t)).toThrow(/pca-eigenvalues/);
  });
});

describe("render spec batch entry point", () => {
  it("renders every figure listed in a spec into the out dir", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-"));
    const samples = new URL("../samples", import.meta.url).pathname;
    const spec = {
      figures: [
        { kind: "fig-torsion", input: join(samples, "fig-torsion.csv") },
        { kind: "fig-hormander", input: join(samples, "fig-hormander-case1.csv") },
        { kind: "einstein", input: join(samples, "einstein.csv") },
        { kind: "fig-bm-sphere", input: join(samples, "fig-bm-sphere.csv") },
      ],
    };
    const specPath = join(dir, "spec.json");
    writeFileSync(specPath, JSON.stringify(spec));
    const written = renderSpec(specPath, join(dir, "out"));
    expect(written).toHaveLength(4);
    for (const p of written) {
      expect(readFileSync(p, "utf-8")).toContain("</svg>");
    }
  });

  it("rejects malformed specs", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-"));
    const bad = join(dir, "bad.json");
    writeFileSync(bad, JSON.stringify({ figures: [{ kind: "nope", input: "x.csv" }] }));
    expect(() => loadSpec(bad)).toThrow(/unknown figure kind/);
    writeFileSync(bad, JSON.stringify({}));
    expect(() => loadSpec(bad)).toThrow(/non-empty/);
  });
});
