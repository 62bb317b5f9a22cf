export { parseCsv, readTable, column } from "./csv";
export {
  mean,
  sampleStd,
  standardError,
  logGamma,
  regularizedIncompleteBeta,
  tCdf,
  pairedOneSidedPValue,
} from "./stats";
export { parseRegretCsv, summarize, plotRegret } from "./regret";
export { parseSummaryCsv, computePairwise, pairwiseReport } from "./report";
