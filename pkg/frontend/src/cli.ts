import { readFileSync, writeFileSync } from "fs";
import { plotRegret } from "./regret";
import { pairwiseReport } from "./report";

const USAGE = `usage:
  node dist/cli.js plot-regret <regret.csv> <out.svg> [title]
  node dist/cli.js pairwise-report <summary.csv> <out.md>
`;

export function main(argv: string[]): number {
  const [command, input, output, title] = argv;
  if (!command || !input || !output) {
    process.stderr.write(USAGE);
    return 2;
  }
  const text = readFileSync(input, "utf8");
  if (command === "plot-regret") {
    writeFileSync(output, plotRegret(text, { title }));
  } else if (command === "pairwise-report") {
    writeFileSync(output, pairwiseReport(text));
  } else {
    process.stderr.write(`unknown command ${command}\n${USAGE}`);
    return 2;
  }
  process.stdout.write(`wrote ${output}\n`);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
