/**
 * Minimal hand-rolled SVG chart builder: line/scatter series on linear or
 * log axes, tick labels, legend, and verbatim annotation strings (slopes and
 * tolerances are passed through from the manifest, never recomputed).
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
  dashed?: boolean;
  markers?: boolean;
}

export interface ChartOpts {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logX?: boolean;
  logY?: boolean;
  annotations?: string[];
  width?: number;
  height?: number;
}

const PALETTE = ["#2166ac", "#b2182b", "#1b7837", "#762a83", "#e08214"];

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
  const range = hi - lo || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rough) ?? rough;
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12 * range; v += step) ticks.push(v);
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(lo); e <= Math.floor(hi); e++) ticks.push(e);
  if (ticks.length < 2) return niceTicks(lo, hi, 4);
  return ticks;
}

function fmt(v: number, log: boolean): string {
  if (log) return `1e${v}`;
  const a = Math.abs(v);
  if (a !== 0 && (a < 1e-3 || a >= 1e4)) return v.toExponential(1);
  return `${Math.round(v * 1e6) / 1e6}`;
}

export function buildChart(opts: ChartOpts): string {
  const W = opts.width ?? 720;
  const H = opts.height ?? 420;
  const ml = 74, mr = 24, mt = 40, mb = 56;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const tx = (v: number) => (opts.logX ? Math.log10(v) : v);
  const ty = (v: number) => (opts.logY ? Math.log10(v) : v);
  const xs = opts.series.flatMap((s) => s.x.map(tx)).filter(Number.isFinite);
  const ys = opts.series.flatMap((s) => s.y.map(ty)).filter(Number.isFinite);
  if (!xs.length || !ys.length) throw new Error(`no finite data for '${opts.title}'`);
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 - x0 < 1e-12) [x0, x1] = [x0 - 1, x1 + 1];
  if (y1 - y0 < 1e-12) [y0, y1] = [y0 - 1, y1 + 1];
  const padY = 0.06 * (y1 - y0);
  y0 -= padY; y1 += padY;
  const X = (v: number) => ml + ((tx(v) - x0) / (x1 - x0)) * pw;
  const Y = (v: number) => mt + ph - ((ty(v) - y0) / (y1 - y0)) * ph;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`);
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(`<text x="${W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15" font-weight="bold">${esc(opts.title)}</text>`);

  const xticks = opts.logX ? logTicks(x0, x1) : niceTicks(x0, x1);
  const yticks = opts.logY ? logTicks(y0, y1) : niceTicks(y0, y1);
  for (const v of xticks) {
    const px = ml + ((v - x0) / (x1 - x0)) * pw;
    parts.push(`<line x1="${px}" y1="${mt}" x2="${px}" y2="${mt + ph}" stroke="#ddd"/>`);
    parts.push(`<text x="${px}" y="${mt + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">${fmt(v, !!opts.logX)}</text>`);
  }
  for (const v of yticks) {
    const py = mt + ph - ((v - y0) / (y1 - y0)) * ph;
    parts.push(`<line x1="${ml}" y1="${py}" x2="${ml + pw}" y2="${py}" stroke="#ddd"/>`);
    parts.push(`<text x="${ml - 8}" y="${py + 4}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(v, !!opts.logY)}</text>`);
  }
  parts.push(`<rect x="${ml}" y="${mt}" width="${pw}" height="${ph}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${ml + pw / 2}" y="${H - 14}" text-anchor="middle" font-family="sans-serif" font-size="13">${esc(opts.xLabel)}</text>`);
  parts.push(`<text x="20" y="${mt + ph / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 20 ${mt + ph / 2})">${esc(opts.yLabel)}</text>`);

  opts.series.forEach((s, i) => {
    const color = s.color ?? PALETTE[i % PALETTE.length];
    const pts = s.x.map((xv, k) => [X(xv), Y(s.y[k])])
      .filter(([a, b]) => Number.isFinite(a) && Number.isFinite(b));
    if (pts.length > 1) {
      const d = pts.map(([a, b], k) => `${k ? "L" : "M"}${a.toFixed(2)},${b.toFixed(2)}`).join(" ");
      parts.push(`<path d="${d}" fill="none" stroke="${color}" stroke-width="1.8"${s.dashed ? ' stroke-dasharray="6 4"' : ""}/>`);
    }
    if (s.markers ?? true) {
      for (const [a, b] of pts) {
        parts.push(`<circle cx="${a.toFixed(2)}" cy="${b.toFixed(2)}" r="3" fill="${color}"/>`);
      }
    }
    parts.push(`<text x="${ml + 10}" y="${mt + 16 + 15 * i}" font-family="sans-serif" font-size="12" fill="${color}">${esc(s.label)}</text>`);
  });

  (opts.annotations ?? []).forEach((a, i) => {
    parts.push(`<text x="${ml + pw - 8}" y="${mt + 16 + 15 * i}" text-anchor="end" font-family="monospace" font-size="12" fill="#222">${esc(a)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}
