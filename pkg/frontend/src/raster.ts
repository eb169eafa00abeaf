/** Dependency-free PNG renderer for the figure drawing list.
 *
 * The raster is RGB8; lines are drawn by sampling along their length,
 * text by the built-in 5x7 font.  Compression is node's zlib, so the
 * bytes are deterministic for a fixed drawing.
 */

import * as zlib from "zlib";
import { Drawing, Prim } from "./types";
import { GLYPH_H, GLYPH_W, glyph, textWidth } from "./font";

const PALETTE: Record<string, [number, number, number]> = {
  black: [20, 20, 20],
  gray: [150, 150, 150],
  lightgray: [220, 220, 220],
  blue: [31, 119, 180],
  orange: [255, 127, 14],
  green: [44, 160, 44],
  red: [214, 39, 40],
  white: [255, 255, 255],
};

function rgb(color: string): [number, number, number] {
  return PALETTE[color] ?? PALETTE.black;
}

class Canvas {
  data: Uint8Array;

  constructor(public width: number, public height: number) {
    this.data = new Uint8Array(width * height * 3).fill(255);
  }

  set(x: number, y: number, c: [number, number, number]) {
    const xi = Math.round(x);
    const yi = Math.round(y);
    if (xi < 0 || yi < 0 || xi >= this.width || yi >= this.height) return;
    const o = (yi * this.width + xi) * 3;
    this.data[o] = c[0];
    this.data[o + 1] = c[1];
    this.data[o + 2] = c[2];
  }

  disc(x: number, y: number, r: number, c: [number, number, number]) {
    for (let dy = -r; dy <= r; dy++) {
      for (let dx = -r; dx <= r; dx++) {
        if (dx * dx + dy * dy <= r * r + 0.25) this.set(x + dx, y + dy, c);
      }
    }
  }

  line(x1: number, y1: number, x2: number, y2: number,
       c: [number, number, number], width: number, dash: boolean) {
    const len = Math.hypot(x2 - x1, y2 - y1);
    const steps = Math.max(1, Math.ceil(len * 2));
    const rad = Math.max(0, Math.round(width / 2) - 0);
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      if (dash && Math.floor((t * len) / 4) % 2 === 1) continue;
      const x = x1 + t * (x2 - x1);
      const y = y1 + t * (y2 - y1);
      if (rad <= 0) this.set(x, y, c);
      else this.disc(x, y, rad, c);
    }
  }

  text(x: number, y: number, s: string, c: [number, number, number],
       size: number, anchor: "start" | "middle" | "end") {
    const scale = Math.max(1, Math.round(size / GLYPH_H));
    const w = textWidth(s, scale);
    let x0 = x;
    if (anchor === "middle") x0 -= w / 2;
    if (anchor === "end") x0 -= w;
    const y0 = y - GLYPH_H * scale; // y is the text baseline
    for (let i = 0; i < s.length; i++) {
      const rows = glyph(s[i]);
      for (let r = 0; r < GLYPH_H; r++) {
        for (let col = 0; col < 5; col++) {
          if (rows[r][col] !== "#") continue;
          for (let sy = 0; sy < scale; sy++) {
            for (let sx = 0; sx < scale; sx++) {
              this.set(x0 + (i * GLYPH_W + col) * scale + sx,
                       y0 + r * scale + sy, c);
            }
          }
        }
      }
    }
  }
}

const CRC_TABLE = (() => {
  const t = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    t[n] = c >>> 0;
  }
  return t;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (const b of buf) c = CRC_TABLE[(c ^ b) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(body.length, 0);
  head.write(type, 4, "ascii");
  const crcInput = Buffer.concat([head.subarray(4), body]);
  const tail = Buffer.alloc(4);
  tail.writeUInt32BE(crc32(crcInput), 0);
  return Buffer.concat([head, body, tail]);
}

export function encodePng(canvas: Canvas): Buffer {
  const { width, height, data } = canvas;
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8;  // bit depth
  ihdr[9] = 2;  // RGB
  const raw = Buffer.alloc(height * (1 + width * 3));
  for (let y = 0; y < height; y++) {
    raw[y * (1 + width * 3)] = 0; // filter: none
    data.subarray(y * width * 3, (y + 1) * width * 3)
      .forEach((v, i) => { raw[y * (1 + width * 3) + 1 + i] = v; });
  }
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlib.deflateSync(raw, { level: 9 })),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

export function renderPng(drawing: Drawing): Buffer {
  const canvas = new Canvas(drawing.width, drawing.height);
  for (const p of drawing.prims) {
    drawPrim(canvas, p);
  }
  return encodePng(canvas);
}

function drawPrim(canvas: Canvas, p: Prim) {
  if (p.kind === "line") {
    canvas.line(p.x1, p.y1, p.x2, p.y2, rgb(p.color), p.width, !!p.dash);
  } else if (p.kind === "circle") {
    canvas.disc(p.x, p.y, p.r, rgb(p.color));
  } else {
    canvas.text(p.x, p.y, p.s, rgb(p.color), p.size, p.anchor);
  }
}
