/** Minimal SVG scene building: linear scales, polylines, markers, axes.
 *  Everything renders to a plain SVG string so the output is a pure
 *  function of its inputs. */

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const lin = linearScale([Math.log(domain[0]), Math.log(domain[1])], range);
  const f = ((v: number) => lin(Math.log(v))) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

export function extent(values: number[], pad = 0.05): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) return [0, 1];
  const margin = (hi - lo || 1) * pad;
  return [lo - margin, hi + margin];
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

const num = (v: number) => (Math.round(v * 100) / 100).toString();

export function polyline(
  pts: Array<[number, number]>,
  stroke: string,
  width = 1.2,
  dash?: string,
): string {
  const d = pts.map((p) => `${num(p[0])},${num(p[1])}`).join(" ");
  const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
  return `<polyline points="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"${dashAttr}/>`;
}

export function circle(x: number, y: number, r: number, fill: string, opacity = 1): string {
  return `<circle cx="${num(x)}" cy="${num(y)}" r="${num(r)}" fill="${fill}" fill-opacity="${opacity}"/>`;
}

export function line(
  x1: number, y1: number, x2: number, y2: number,
  stroke: string, width = 1,
): string {
  return `<line x1="${num(x1)}" y1="${num(y1)}" x2="${num(x2)}" y2="${num(y2)}" stroke="${stroke}" stroke-width="${width}"/>`;
}

export function text(
  x: number, y: number, body: string,
  opts: { size?: number; anchor?: string; fill?: string } = {},
): string {
  const { size = 11, anchor = "start", fill = "#222" } = opts;
  return `<text x="${num(x)}" y="${num(y)}" font-size="${size}" text-anchor="${anchor}" fill="${fill}" font-family="sans-serif">${esc(body)}</text>`;
}

/** Simple box axes with a handful of tick labels. */
export function axes(
  xs: Scale, ys: Scale, xlabel: string, ylabel: string, nticks = 5,
): string {
  const [x0, x1] = xs.range;
  const [y0, y1] = ys.range;
  const parts = [
    `<rect x="${num(Math.min(x0, x1))}" y="${num(Math.min(y0, y1))}" width="${num(Math.abs(x1 - x0))}" height="${num(Math.abs(y1 - y0))}" fill="none" stroke="#888" stroke-width="0.8"/>`,
  ];
  for (let i = 0; i <= nticks; i++) {
    const fx = xs.domain[0] + ((xs.domain[1] - xs.domain[0]) * i) / nticks;
    const fy = ys.domain[0] + ((ys.domain[1] - ys.domain[0]) * i) / nticks;
    parts.push(text(xs(fx), Math.max(y0, y1) + 14, fx.toPrecision(3), { size: 9, anchor: "middle", fill: "#555" }));
    parts.push(text(Math.min(x0, x1) - 4, ys(fy) + 3, fy.toPrecision(3), { size: 9, anchor: "end", fill: "#555" }));
  }
  parts.push(text((x0 + x1) / 2, Math.max(y0, y1) + 30, xlabel, { anchor: "middle" }));
  parts.push(text(Math.min(x0, x1) - 38, (y0 + y1) / 2, ylabel, { anchor: "middle" }));
  return parts.join("\n");
}

export function svgDocument(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    ...body,
    "</svg>",
  ].join("\n");
}

/** Fixed-angle orthographic projection of 3-d points onto the page;
 *  returns page coordinates plus depth for paint ordering. */
export function orthographic(
  p: [number, number, number],
  elevation = 0.42,
  azimuth = 0.6,
): [number, number, number] {
  const [x, y, z] = p;
  const ca = Math.cos(azimuth);
  const sa = Math.sin(azimuth);
  const ce = Math.cos(elevation);
  const se = Math.sin(elevation);
  const rx = ca * x + sa * y;
  const ry = -sa * x + ca * y;
  return [rx, ce * z - se * ry, ce * ry + se * z];
}
