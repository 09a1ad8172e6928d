#!/usr/bin/env node
import { writeFileSync } from "fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { loadStatsCells, layoutBoxes, renderBoxes } from "./boxes.js";

const argv = yargs(hideBin(process.argv))
  .usage("plot-boxes --in stats.csv [--in more.csv ...] --out fig.svg")
  .option("in", { type: "string", array: true, demandOption: true, describe: "aggregated stats CSVs" })
  .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
  .strict()
  .parseSync();

try {
  const cells = loadStatsCells(argv.in);
  const svg = renderBoxes(layoutBoxes(cells));
  writeFileSync(argv.out, svg + "\n");
  console.log(`wrote ${argv.out} (${cells.length} cells)`);
} catch (err) {
  console.error(String(err instanceof Error ? err.message : err));
  process.exit(1);
}
