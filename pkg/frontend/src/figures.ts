import { Table, column, requireColumns, CsvError } from "./csv.js";
import {
  Scale, linearScale, logScale, extent, polyline, circle, line, text,
  axes, svgDocument, orthographic,
} from "./svg.js";

export type FigureKind =
  | "fig-bm-sphere"
  | "fig-torsion"
  | "fig-hormander"
  | "einstein";

const COLORS = {
  driver: "#1f77b4",
  developed: "#d62728",
  frame1: "#2ca02c",
  frame2: "#9467bd",
  cloud: "#1f77b4",
  theory: "#444",
};

interface Panel {
  xs: Scale;
  ys: Scale;
}

function panel(
  x: [number, number], y: [number, number],
  left: number, top: number, w: number, h: number,
): Panel {
  return {
    xs: linearScale(x, [left, left + w]),
    // page y grows downward
    ys: linearScale(y, [top + h, top]),
  };
}

function project3d(rows: Array<[number, number, number]>): Array<[number, number, number]> {
  return rows.map((p) => orthographic(p));
}

function squareDomains(pts: Array<[number, number, number]>): {
  x: [number, number];
  y: [number, number];
} {
  const ex = extent(pts.map((p) => p[0]));
  const ey = extent(pts.map((p) => p[1]));
  // equal aspect so spheres stay round
  const cx = (ex[0] + ex[1]) / 2;
  const cy = (ey[0] + ey[1]) / 2;
  const half = Math.max(ex[1] - ex[0], ey[1] - ey[0]) / 2;
  return { x: [cx - half, cx + half], y: [cy - half, cy + half] };
}

/** Two-panel figure: the planar driver and its development rolled onto
 *  the sphere, with the transported tangent frame drawn along the path. */
export function renderBmSphere(table: Table, width = 880, height = 460): string {
  requireColumns(table, [
    "t", "z_1", "z_2", "x", "y", "z",
    "e1_x", "e1_y", "e1_z", "e2_x", "e2_y", "e2_z",
  ]);
  const z1 = column(table, "z_1");
  const z2 = column(table, "z_2");
  const pos = table.rows.map((_, k): [number, number, number] => [
    column(table, "x")[k], column(table, "y")[k], column(table, "z")[k],
  ]);

  const body: string[] = [];
  const left = panel(extent(z1), extent(z2), 60, 40, 330, 330);
  body.push(axes(left.xs, left.ys, "z_1", "z_2"));
  body.push(polyline(z1.map((v, k) => [left.xs(v), left.ys(z2[k])]), COLORS.driver));
  body.push(text(225, 20, "planar driver", { anchor: "middle", size: 13 }));

  const proj = project3d(pos);
  const dom = squareDomains(proj.concat([[-1.1, -1.1, 0], [1.1, 1.1, 0]]));
  const right = panel(dom.x, dom.y, 480, 40, 330, 330);

  // sphere silhouette plus a sparse wireframe for depth cues
  const cx = right.xs(0);
  const cy = right.ys(0);
  const r = Math.abs(right.xs(1) - right.xs(0));
  body.push(`<circle cx="${cx}" cy="${cy}" r="${r}" fill="#f4f6fa" stroke="#aab" stroke-width="0.8"/>`);
  for (const lat of [-0.5, 0, 0.5]) {
    const ring: Array<[number, number]> = [];
    for (let i = 0; i <= 72; i++) {
      const th = (2 * Math.PI * i) / 72;
      const rad = Math.sqrt(1 - lat * lat);
      const q = orthographic([rad * Math.cos(th), rad * Math.sin(th), lat]);
      ring.push([right.xs(q[0]), right.ys(q[1])]);
    }
    body.push(polyline(ring, "#ccd", 0.6));
  }

  body.push(polyline(proj.map((q) => [right.xs(q[0]), right.ys(q[1])]), COLORS.developed, 1.4));

  // rolling frame arrows at a handful of grid points
  const e1 = table.rows.map((_, k): [number, number, number] => [
    column(table, "e1_x")[k], column(table, "e1_y")[k], column(table, "e1_z")[k],
  ]);
  const e2 = table.rows.map((_, k): [number, number, number] => [
    column(table, "e2_x")[k], column(table, "e2_y")[k], column(table, "e2_z")[k],
  ]);
  const stride = Math.max(1, Math.floor(table.rows.length / 14));
  for (let k = 0; k < table.rows.length; k += stride) {
    const base = orthographic(pos[k]);
    for (const [vec, color] of [
      [e1[k], COLORS.frame1],
      [e2[k], COLORS.frame2],
    ] as Array<[[number, number, number], string]>) {
      const tip = orthographic([
        pos[k][0] + 0.22 * vec[0],
        pos[k][1] + 0.22 * vec[1],
        pos[k][2] + 0.22 * vec[2],
      ]);
      body.push(line(right.xs(base[0]), right.ys(base[1]), right.xs(tip[0]), right.ys(tip[1]), color, 1.1));
    }
  }
  body.push(text(645, 20, "development onto the sphere with rolling frame", { anchor: "middle", size: 13 }));
  if (table.comments["status"]) {
    body.push(text(645, 395, `status: ${table.comments["status"]}`, { anchor: "middle", size: 10, fill: "#666" }));
  }
  return svgDocument(width, height, body);
}

/** Driver curve and its development under the torsion connection,
 *  superimposed in one 3-d projection. */
export function renderTorsion(table: Table, width = 620, height = 520): string {
  requireColumns(table, ["t", "z_1", "z_2", "z_3", "x_1", "x_2", "x_3"]);
  const zpts = table.rows.map((_, k): [number, number, number] => [
    column(table, "z_1")[k], column(table, "z_2")[k], column(table, "z_3")[k],
  ]);
  const xpts = table.rows.map((_, k): [number, number, number] => [
    column(table, "x_1")[k], column(table, "x_2")[k], column(table, "x_3")[k],
  ]);
  const pz = project3d(zpts);
  const px = project3d(xpts);
  const dom = squareDomains(pz.concat(px));
  const pan = panel(dom.x, dom.y, 70, 50, 480, 400);
  const body: string[] = [];
  body.push(axes(pan.xs, pan.ys, "", ""));
  body.push(polyline(pz.map((q) => [pan.xs(q[0]), pan.ys(q[1])]), COLORS.driver, 1.4));
  body.push(polyline(px.map((q) => [pan.xs(q[0]), pan.ys(q[1])]), COLORS.developed, 1.4, "5,3"));
  body.push(line(80, 26, 110, 26, COLORS.driver, 1.6));
  body.push(text(116, 30, "curve"));
  body.push(line(210, 26, 240, 26, COLORS.developed, 1.6));
  body.push(text(246, 30, "development (torsion connection)"));
  const dev = table.comments["max-deviation"];
  if (dev !== undefined) {
    body.push(text(310, height - 14, `max deviation: ${Number(dev).toPrecision(4)}`, { anchor: "middle", size: 11, fill: "#555" }));
  }
  return svgDocument(width, height, body);
}

/** Terminal point cloud of developments with the PCA spectrum read
 *  back from the CSV comments (never recomputed here). */
export function renderHormander(table: Table, width = 560, height = 560): string {
  requireColumns(table, ["seed", "x", "y", "z"]);
  const pts = table.rows.map((_, k): [number, number, number] => [
    column(table, "x")[k], column(table, "y")[k], column(table, "z")[k],
  ]);
  const proj = project3d(pts);
  const dom = squareDomains(proj);
  const pan = panel(dom.x, dom.y, 70, 50, 440, 440);
  const body: string[] = [];
  body.push(axes(pan.xs, pan.ys, "", ""));
  for (const q of proj) {
    body.push(circle(pan.xs(q[0]), pan.ys(q[1]), 1.6, COLORS.cloud, 0.55));
  }
  const pca = table.comments["pca-eigenvalues"];
  if (pca === undefined) {
    throw new CsvError("hormander csv is missing the pca-eigenvalues comment");
  }
  const eig = pca.split(/\s+/).map((v) => Number(v).toPrecision(3));
  body.push(text(width / 2, 26, `PCA eigenvalues: ${eig.join(", ")}`, { anchor: "middle", size: 12 }));
  if (table.comments["n-complete"]) {
    body.push(text(width / 2, height - 14, `${table.comments["n-complete"]} completed developments`, { anchor: "middle", size: 10, fill: "#666" }));
  }
  return svgDocument(width, height, body);
}

/** Semilog decay of the transport Gram diagonals against the
 *  exponential reference curves shipped in the CSV. */
export function renderEinstein(table: Table, width = 640, height = 440): string {
  requireColumns(table, [
    "t", "component", "cross_mean", "cross_sem", "self_mean", "self_sem",
    "cross_theory", "self_theory",
  ]);
  const t = column(table, "t");
  const comp = column(table, "component");
  const crossMean = column(table, "cross_mean");
  const crossSem = column(table, "cross_sem");
  const selfMean = column(table, "self_mean");
  const selfSem = column(table, "self_sem");
  const crossTheory = column(table, "cross_theory");
  const selfTheory = column(table, "self_theory");

  const ys = crossMean.concat(selfMean, crossTheory, selfTheory).filter((v) => v > 0);
  const ylo = Math.min(...ys) * 0.8;
  const yhi = Math.max(...ys) * 1.25;
  const xs = linearScale([0, Math.max(...t) * 1.05], [70, 70 + 480]);
  const yscale = logScale([ylo, yhi], [50 + 320, 50]);
  const pan: Panel = { xs, ys: yscale };
  const body: string[] = [];
  body.push(axes(pan.xs, pan.ys, "t", ""));

  const timesOf = (which: number[], sel: (k: number) => boolean) =>
    table.rows.map((_, k) => k).filter(sel);

  const uniqTimes = [...new Set(t)].sort((a, b) => a - b);
  const series = (vals: number[], c: number) =>
    uniqTimes.map((tt): [number, number] => {
      const k = table.rows.findIndex((_, i) => t[i] === tt && comp[i] === c);
      return [pan.xs(tt), pan.ys(vals[k])];
    });

  const comps = [...new Set(comp)];
  for (const c of comps) {
    body.push(polyline(series(crossMean, c), COLORS.driver, 1.3));
    body.push(polyline(series(selfMean, c), COLORS.developed, 1.3));
    for (const k of timesOf(t, (i) => comp[i] === c)) {
      for (const [mean, sem, color] of [
        [crossMean[k], crossSem[k], COLORS.driver],
        [selfMean[k], selfSem[k], COLORS.developed],
      ] as Array<[number, number, string]>) {
        const x = pan.xs(t[k]);
        body.push(line(x, pan.ys(mean - 3 * sem), x, pan.ys(mean + 3 * sem), color, 1));
        body.push(circle(x, pan.ys(mean), 2.2, color));
      }
    }
  }
  // theory references are columns of the CSV, drawn verbatim
  body.push(polyline(series(crossTheory, comps[0]), COLORS.theory, 1, "4,3"));
  body.push(polyline(series(selfTheory, comps[0]), COLORS.theory, 1, "1.5,3"));
  body.push(text(86, 28, "cross gram (markers) vs e^(-t/2) (dashed)", { size: 11, fill: COLORS.driver }));
  body.push(text(86, 44, "self gram (markers) vs e^(-t) (dotted)", { size: 11, fill: COLORS.developed }));
  if (table.comments["lambda"]) {
    body.push(text(width - 20, 28, `lambda = ${table.comments["lambda"]}`, { anchor: "end", size: 11, fill: "#555" }));
  }
  return svgDocument(width, height, body);
}

export function renderFigure(kind: FigureKind, table: Table): string {
  switch (kind) {
    case "fig-bm-sphere":
      return renderBmSphere(table);
    case "fig-torsion":
      return renderTorsion(table);
    case "fig-hormander":
      return renderHormander(table);
    case "einstein":
      return renderEinstein(table);
    default:
      throw new CsvError(`unknown figure kind "${kind as string}"`);
  }
}
