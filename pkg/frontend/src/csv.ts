/** Readers for the lab's CSV and JSON outputs.
 *
 * Every CSV starts with a `# manifest: <hash>` line followed by a header
 * row; JSON documents carry the hash under `manifest` (reports) or
 * `config_hash` (the run manifest itself).
 */

import * as fs from "fs";
import { InputMismatch, ParseError } from "./types";

export interface Table {
  manifest: string;
  columns: string[];
  rows: number[][];
}

export function readCsv(path: string): Table {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf8");
  } catch (err) {
    throw new ParseError(`cannot read ${path}: ${err}`);
  }
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length < 2 || !lines[0].startsWith("# manifest:")) {
    throw new InputMismatch(`${path}: missing '# manifest:' header line`);
  }
  const manifest = lines[0].slice("# manifest:".length).trim();
  const columns = lines[1].split(",");
  const rows: number[][] = [];
  for (const line of lines.slice(2)) {
    const vals = line.split(",").map(Number);
    if (vals.length !== columns.length || vals.some((v) => Number.isNaN(v))) {
      throw new ParseError(`${path}: bad row '${line}'`);
    }
    rows.push(vals);
  }
  return { manifest, columns, rows };
}

export function column(table: Table, name: string): number[] {
  const i = table.columns.indexOf(name);
  if (i < 0) throw new ParseError(`missing column '${name}'`);
  return table.rows.map((r) => r[i]);
}

export function readJson(path: string): any {
  try {
    return JSON.parse(fs.readFileSync(path, "utf8"));
  } catch (err) {
    throw new ParseError(`cannot parse ${path}: ${err}`);
  }
}

/** Manifest hash carried by a JSON document, whatever its role. */
export function jsonHash(doc: any): string | undefined {
  return doc.config_hash ?? doc.manifest;
}

/**
 * Collect the manifest hash from every input and demand agreement;
 * returns the common hash.  Inputs without a recognizable hash are
 * rejected as orphans.
 */
export function verifyInputs(paths: string[]): string {
  const hashes = new Map<string, string>();
  for (const p of paths) {
    let h: string | undefined;
    if (p.endsWith(".csv")) {
      h = readCsv(p).manifest;
    } else if (p.endsWith(".json")) {
      h = jsonHash(readJson(p));
    }
    if (!h) throw new InputMismatch(`${p}: no manifest hash found`);
    hashes.set(p, h);
  }
  const all = [...hashes.values()];
  if (all.length === 0) throw new InputMismatch("no inputs given");
  if (new Set(all).size !== 1) {
    const detail = [...hashes.entries()].map(([p, h]) => `${p}=${h.slice(0, 8)}`).join(", ");
    throw new InputMismatch(`manifest hashes disagree: ${detail}`);
  }
  return all[0];
}
