/** SVG serialization of the figure drawing list (no timestamps, so
 * re-rendering is byte-identical). */

import { Drawing, Prim } from "./types";

const COLORS: Record<string, string> = {
  black: "#141414",
  gray: "#969696",
  lightgray: "#dcdcdc",
  blue: "#1f77b4",
  orange: "#ff7f0e",
  green: "#2ca02c",
  red: "#d62728",
  white: "#ffffff",
};

function color(c: string): string {
  return COLORS[c] ?? c;
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function prim(p: Prim): string {
  if (p.kind === "line") {
    const dash = p.dash ? ` stroke-dasharray="5,4"` : "";
    return `<line x1="${p.x1.toFixed(2)}" y1="${p.y1.toFixed(2)}" x2="${p.x2.toFixed(2)}" y2="${p.y2.toFixed(2)}" stroke="${color(p.color)}" stroke-width="${p.width}"${dash}/>`;
  }
  if (p.kind === "circle") {
    return `<circle cx="${p.x.toFixed(2)}" cy="${p.y.toFixed(2)}" r="${p.r}" fill="${color(p.color)}"/>`;
  }
  const anchor = { start: "start", middle: "middle", end: "end" }[p.anchor];
  return `<text x="${p.x.toFixed(2)}" y="${p.y.toFixed(2)}" font-family="monospace" font-size="${p.size}" fill="${color(p.color)}" text-anchor="${anchor}">${esc(p.s)}</text>`;
}

export function renderSvg(d: Drawing): string {
  const body = d.prims.map(prim).join("\n  ");
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${d.width}" height="${d.height}" viewBox="0 0 ${d.width} ${d.height}">
  <rect width="${d.width}" height="${d.height}" fill="#ffffff"/>
  ${body}
</svg>
`;
}
