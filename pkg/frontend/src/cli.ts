#!/usr/bin/env node
/** plots --in results.csv --out dir/ --baseline <cell> [--kind k ...] */

import * as fs from "fs";
import * as path from "path";
import { parseArgs } from "util";

import { allChartKinds, renderChartSvg } from "./charts";
import { buildTable } from "./table";

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        in: { type: "string" },
        out: { type: "string" },
        baseline: { type: "string" },
        kind: { type: "string", multiple: true },
      },
      allowPositionals: false,
    });
  } catch (err) {
    console.error(`argument error: ${(err as Error).message}`);
    return 2;
  }
  const { in: input, out, baseline } = parsed.values;
  if (!input || !out || !baseline) {
    console.error("usage: plots --in results.csv --out dir/ --baseline <cell>");
    return 2;
  }
  const kinds = parsed.values.kind?.length ? parsed.values.kind : allChartKinds();
  try {
    const table = buildTable(fs.readFileSync(input, "utf-8"));
    fs.mkdirSync(out, { recursive: true });
    for (const kind of kinds) {
      const svg = renderChartSvg(kind, table, baseline);
      fs.writeFileSync(path.join(out, `${kind}.svg`), svg);
    }
    console.log(`wrote ${kinds.length} charts to ${out}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
