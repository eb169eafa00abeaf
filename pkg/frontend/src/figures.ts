/** The four figure kinds, each reducing verified inputs to a drawing.
 *
 * order        log-log error vs shallowness, fitted line, reference slope
 * conservation energy-drift and mass-drift magnitudes along a trajectory
 * dispersion   squared-frequency curves of the exact and model operators
 * margin       stability-margin minimum along a trajectory
 */

import { Table, column, readCsv, readJson, verifyInputs } from "./csv";
import { loglogFit } from "./fit";
import { Drawing, FigureSpec, ParseError, Prim } from "./types";

const W = 640;
const H = 440;
const ML = 86;
const MR = 24;
const MT = 40;
const MB = 58;

interface Scale {
  toPx(v: number): number;
  ticks: number[];
  label(v: number): string;
}

function linScale(lo: number, hi: number, pxLo: number, pxHi: number): Scale {
  if (hi <= lo) hi = lo + 1;
  const span = hi - lo;
  const step = niceStep(span / 5);
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) {
    ticks.push(v);
  }
  return {
    toPx: (v) => pxLo + ((v - lo) / span) * (pxHi - pxLo),
    ticks,
    label: (v) => fmtShort(v),
  };
}

function logScale(lo: number, hi: number, pxLo: number, pxHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const ticks: number[] = [];
  const stride = Math.max(1, Math.round((lhi - llo) / 6));
  for (let e = Math.ceil(llo); e <= Math.floor(lhi + 1e-9); e += stride) {
    ticks.push(Math.pow(10, e));
  }
  return {
    toPx: (v) => pxLo + ((Math.log10(v) - llo) / (lhi - llo)) * (pxHi - pxLo),
    ticks,
    label: (v) => `1e${Math.round(Math.log10(v))}`,
  };
}

function niceStep(raw: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2 * mag;
  if (r < 7.5) return 5 * mag;
  return 10 * mag;
}

function fmtShort(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0).replace("e", "e");
  return Number(v.toPrecision(4)).toString();
}

function frame(prims: Prim[], xs: Scale, ys: Scale, xlabel: string, ylabel: string,
               title: string) {
  prims.push({ kind: "line", x1: ML, y1: H - MB, x2: W - MR, y2: H - MB, color: "black", width: 1 });
  prims.push({ kind: "line", x1: ML, y1: MT, x2: ML, y2: H - MB, color: "black", width: 1 });
  for (const t of xs.ticks) {
    const x = xs.toPx(t);
    prims.push({ kind: "line", x1: x, y1: H - MB, x2: x, y2: H - MB + 5, color: "black", width: 1 });
    prims.push({ kind: "line", x1: x, y1: MT, x2: x, y2: H - MB, color: "lightgray", width: 1 });
    prims.push({ kind: "text", x, y: H - MB + 20, s: xs.label(t), color: "black", size: 11, anchor: "middle" });
  }
  for (const t of ys.ticks) {
    const y = ys.toPx(t);
    prims.push({ kind: "line", x1: ML - 5, y1: y, x2: ML, y2: y, color: "black", width: 1 });
    prims.push({ kind: "line", x1: ML, y1: y, x2: W - MR, y2: y, color: "lightgray", width: 1 });
    prims.push({ kind: "text", x: ML - 8, y: y + 4, s: ys.label(t), color: "black", size: 11, anchor: "end" });
  }
  prims.push({ kind: "text", x: (ML + W - MR) / 2, y: H - 14, s: xlabel, color: "black", size: 12, anchor: "middle" });
  prims.push({ kind: "text", x: ML, y: MT - 18, s: ylabel, color: "black", size: 12, anchor: "start" });
  prims.push({ kind: "text", x: (ML + W - MR) / 2, y: 20, s: title, color: "black", size: 13, anchor: "middle" });
}

function polyline(prims: Prim[], xs: number[], ys: number[], color: string,
                  width = 2, dash = false) {
  for (let i = 1; i < xs.length; i++) {
    prims.push({ kind: "line", x1: xs[i - 1], y1: ys[i - 1], x2: xs[i], y2: ys[i],
                 color, width, dash });
  }
}

function pickCsv(spec: FigureSpec, name?: string): string {
  const csvs = spec.inputs.filter((p) => p.endsWith(".csv"));
  const hit = name ? csvs.find((p) => p.includes(name)) : csvs[0];
  if (!hit) throw new ParseError(`figure needs a ${name ?? ""} csv input`);
  return hit;
}

function pickJson(spec: FigureSpec, name: string): string | undefined {
  return spec.inputs.filter((p) => p.endsWith(".json")).find((p) => p.includes(name));
}

export function orderFigure(spec: FigureSpec): Drawing {
  verifyInputs(spec.inputs);
  const table = readCsv(pickCsv(spec));
  const deltas = column(table, "delta");
  const errName = table.columns.find((c) => c.startsWith("err_"));
  if (!errName) throw new ParseError("no error column in the sweep csv");
  const errs = column(table, errName);
  const fit = loglogFit(deltas, errs);
  const slopesPath = pickJson(spec, "slopes");
  let refOrder: number | undefined;
  let jsonSlope: number | undefined;
  if (slopesPath) {
    const doc = readJson(slopesPath);
    refOrder = doc.fits?.expected_order;
    jsonSlope = doc.fits?.[errName]?.slope ?? undefined;
  }
  const prims: Prim[] = [];
  const vis = errs.filter((e) => e > 0);
  const xsS = logScale(Math.min(...deltas) * 0.85, Math.max(...deltas) * 1.18, ML, W - MR);
  const ysS = logScale(Math.min(...vis) * 0.5, Math.max(...vis) * 2.0, H - MB, MT);
  frame(prims, xsS, ysS, "delta", errName, spec.title ?? "convergence order");
  // fitted line across the delta range
  const dmin = Math.min(...deltas);
  const dmax = Math.max(...deltas);
  const fy = (d: number) => Math.exp(fit.intercept + fit.slope * Math.log(d));
  polyline(prims, [xsS.toPx(dmin), xsS.toPx(dmax)], [ysS.toPx(fy(dmin)), ysS.toPx(fy(dmax))], "blue", 2);
  if (refOrder !== undefined) {
    // reference slope anchored at the largest-delta sample
    const c = errs[0] / Math.pow(deltas[0], refOrder);
    const ry = (d: number) => c * Math.pow(d, refOrder);
    polyline(prims, [xsS.toPx(dmin), xsS.toPx(dmax)],
             [ysS.toPx(ry(dmin)), ysS.toPx(ry(dmax))], "gray", 2, true);
    prims.push({ kind: "text", x: W - MR - 6, y: MT + 34,
                 s: `ref order ${refOrder}`, color: "gray", size: 12, anchor: "end" });
  }
  for (let i = 0; i < deltas.length; i++) {
    if (errs[i] > 0) {
      prims.push({ kind: "circle", x: xsS.toPx(deltas[i]), y: ysS.toPx(errs[i]), r: 4, color: "red" });
    }
  }
  const shown = jsonSlope !== undefined ? jsonSlope : fit.slope;
  prims.push({ kind: "text", x: W - MR - 6, y: MT + 16,
               s: `slope = ${shown.toFixed(2)}`, color: "blue", size: 13, anchor: "end" });
  return { width: W, height: H, prims };
}

export function conservationFigure(spec: FigureSpec): Drawing {
  verifyInputs(spec.inputs);
  const table = readCsv(pickCsv(spec, "trajectory"));
  const t = column(table, "t");
  const hk = column(table, "H_K");
  const mass = column(table, "mass");
  const FLOOR = 1e-18;
  const hDrift = hk.map((v) => Math.max(Math.abs(v - hk[0]), FLOOR));
  const mDrift = mass.map((v) => Math.max(Math.abs(v - mass[0]), FLOOR));
  const prims: Prim[] = [];
  const xsS = linScale(t[0], t[t.length - 1], ML, W - MR);
  const top = Math.max(...hDrift, ...mDrift, 1e-8) * 10;
  const ysS = logScale(FLOOR, top, H - MB, MT);
  frame(prims, xsS, ysS, "t", "drift", spec.title ?? "conservation");
  const refY = ysS.toPx(1e-8);
  prims.push({ kind: "line", x1: ML, y1: refY, x2: W - MR, y2: refY, color: "gray", width: 1, dash: true });
  prims.push({ kind: "text", x: W - MR - 6, y: refY - 5, s: "1e-8", color: "gray", size: 11, anchor: "end" });
  polyline(prims, t.map(xsS.toPx), hDrift.map(ysS.toPx), "blue", 2);
  polyline(prims, t.map(xsS.toPx), mDrift.map(ysS.toPx), "green", 2);
  prims.push({ kind: "text", x: ML + 8, y: MT + 16, s: "|h drift|", color: "blue", size: 12, anchor: "start" });
  prims.push({ kind: "text", x: ML + 8, y: MT + 32, s: "|mass drift|", color: "green", size: 12, anchor: "start" });
  const worst = Math.max(...hDrift);
  prims.push({ kind: "text", x: W - MR - 6, y: H - MB - 8,
               s: `max energy drift = ${worst.toExponential(2)}`, color: "black", size: 11, anchor: "end" });
  return { width: W, height: H, prims };
}

export function dispersionFigure(spec: FigureSpec): Drawing {
  verifyInputs(spec.inputs);
  const curves: { table: Table; label: string; color: string }[] = [];
  const palette = ["blue", "green", "orange", "red"];
  const inputs = spec.inputs.filter((p) => p.includes("dispersion_curves"));
  if (inputs.length === 0) throw new ParseError("dispersion figure needs dispersion_curves csv");
  inputs.forEach((p, i) => {
    curves.push({ table: readCsv(p), label: `model ${i}`, color: palette[i % palette.length] });
  });
  const base = curves[0].table;
  const xi = column(base, "xi");
  const full = column(base, "omega2_full");
  const prims: Prim[] = [];
  const xsS = linScale(0, Math.max(...xi), ML, W - MR);
  const ysS = linScale(0, Math.max(...full) * 1.15, H - MB, MT);
  frame(prims, xsS, ysS, "xi", "omega^2", spec.title ?? "dispersion");
  polyline(prims, xi.map(xsS.toPx), full.map(ysS.toPx), "black", 2);
  prims.push({ kind: "text", x: ML + 8, y: MT + 16, s: "full (tanh)", color: "black", size: 12, anchor: "start" });
  curves.forEach((c, i) => {
    const cx = column(c.table, "xi");
    const cm = column(c.table, "omega2_model").map((v) => Math.min(v, Math.max(...full) * 1.15));
    polyline(prims, cx.map(xsS.toPx), cm.map(ysS.toPx), c.color, 2, true);
    prims.push({ kind: "text", x: ML + 8, y: MT + 32 + 16 * i, s: c.label, color: c.color, size: 12, anchor: "start" });
  });
  return { width: W, height: H, prims };
}

export function marginFigure(spec: FigureSpec): Drawing {
  verifyInputs(spec.inputs);
  const table = readCsv(pickCsv(spec, "trajectory"));
  const t = column(table, "t");
  const margin = column(table, "min_margin");
  const prims: Prim[] = [];
  const xsS = linScale(t[0], t[t.length - 1], ML, W - MR);
  const lo = Math.min(0, Math.min(...margin)) - 0.1;
  const hi = Math.max(1.1, Math.max(...margin) + 0.1);
  const ysS = linScale(lo, hi, H - MB, MT);
  frame(prims, xsS, ysS, "t", "min margin", spec.title ?? "stability margin");
  const zeroY = ysS.toPx(0);
  prims.push({ kind: "line", x1: ML, y1: zeroY, x2: W - MR, y2: zeroY, color: "red", width: 1, dash: true });
  polyline(prims, t.map(xsS.toPx), margin.map(ysS.toPx), "blue", 2);
  const worst = Math.min(...margin);
  prims.push({ kind: "text", x: W - MR - 6, y: MT + 16,
               s: `min = ${worst.toFixed(4)}`, color: "blue", size: 12, anchor: "end" });
  return { width: W, height: H, prims };
}

export function buildFigure(spec: FigureSpec): Drawing {
  switch (spec.kind) {
    case "order":
      return orderFigure(spec);
    case "conservation":
      return conservationFigure(spec);
    case "dispersion":
      return dispersionFigure(spec);
    case "margin":
      return marginFigure(spec);
    default:
      throw new ParseError(`unknown figure kind '${(spec as FigureSpec).kind}'`);
  }
}
