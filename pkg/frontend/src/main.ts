/** CLI: render one figure from the lab's outputs.
 *
 * Either a figure-spec JSON file:
 *     node dist/main.js --spec figure.json
 * or flags mirroring it:
 *     node dist/main.js order --in sweep.csv --in slopes.json \
 *         --in manifest.json --out figures/order [--title "..."]
 *
 * Writes <out>.svg and <out>.png.  Inputs whose manifest hashes are
 * missing or disagree are refused.
 */

import * as fs from "fs";
import * as path from "path";
import { buildFigure } from "./figures";
import { renderPng } from "./raster";
import { renderSvg } from "./svg";
import { FigureSpec, InputMismatch, ParseError } from "./types";

function parseArgs(argv: string[]): FigureSpec {
  const args = [...argv];
  if (args[0] === "--spec") {
    const doc = JSON.parse(fs.readFileSync(args[1], "utf8"));
    if (!doc.kind || !doc.inputs || !doc.output) {
      throw new ParseError("figure spec needs kind, inputs, output");
    }
    return doc as FigureSpec;
  }
  const kind = args.shift();
  if (!kind || !["order", "conservation", "dispersion", "margin"].includes(kind)) {
    throw new ParseError(
      "usage: main.js <order|conservation|dispersion|margin> --in FILE ... --out PATH [--title T]\n" +
      "   or: main.js --spec FIGURE.json");
  }
  const inputs: string[] = [];
  let output = "";
  let title: string | undefined;
  while (args.length) {
    const flag = args.shift();
    if (flag === "--in") inputs.push(args.shift() ?? "");
    else if (flag === "--out") output = args.shift() ?? "";
    else if (flag === "--title") title = args.shift();
    else throw new ParseError(`unknown flag ${flag}`);
  }
  if (!inputs.length || !output) throw new ParseError("need --in and --out");
  return { kind: kind as FigureSpec["kind"], inputs, output, title };
}

export function run(argv: string[]): number {
  let spec: FigureSpec;
  try {
    spec = parseArgs(argv);
    const drawing = buildFigure(spec);
    fs.mkdirSync(path.dirname(spec.output) || ".", { recursive: true });
    fs.writeFileSync(spec.output + ".svg", renderSvg(drawing));
    fs.writeFileSync(spec.output + ".png", renderPng(drawing));
    console.log(`wrote ${spec.output}.svg and ${spec.output}.png`);
    return 0;
  } catch (err) {
    if (err instanceof InputMismatch) {
      console.error(`input mismatch: ${err.message}`);
      return 2;
    }
    if (err instanceof ParseError) {
      console.error(`parse error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(run(process.argv.slice(2)));
}
