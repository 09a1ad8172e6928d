#!/usr/bin/env node
import { writeFileSync } from "fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { loadCurveSeries, layoutCurves, renderCurves } from "./curves.js";

const argv = yargs(hideBin(process.argv))
  .usage("plot-curves --in eval1.csv [--in eval2.csv ...] --out fig.svg")
  .option("in", { type: "string", array: true, demandOption: true, describe: "evaluation CSVs" })
  .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
  .strict()
  .parseSync();

try {
  const series = loadCurveSeries(argv.in);
  const svg = renderCurves(layoutCurves(series));
  writeFileSync(argv.out, svg + "\n");
  console.log(`wrote ${argv.out} (${series.length} series)`);
} catch (err) {
  console.error(String(err instanceof Error ? err.message : err));
  process.exit(1);
}
