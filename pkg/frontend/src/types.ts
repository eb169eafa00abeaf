/** Shared figure types and input-validation errors. */

export type FigureKind = "order" | "conservation" | "dispersion" | "margin";

export interface FigureSpec {
  kind: FigureKind;
  /** CSV/JSON inputs; the run manifest must be among them. */
  inputs: string[];
  /** Output path without extension; .svg and .png are written. */
  output: string;
  title?: string;
}

/** An input's manifest hash is missing or disagrees with the manifest. */
export class InputMismatch extends Error {}

/** An input file failed to parse. */
export class ParseError extends Error {}

export type Prim =
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number; color: string; width: number; dash?: boolean }
  | { kind: "circle"; x: number; y: number; r: number; color: string }
  | { kind: "text"; x: number; y: number; s: string; color: string; size: number; anchor: "start" | "middle" | "end" };

export interface Drawing {
  width: number;
  height: number;
  prims: Prim[];
}
