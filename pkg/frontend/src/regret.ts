import { readTable } from "./csv";
import { mean, standardError } from "./stats";

export interface RegretRow {
  policy: string;
  replication: number;
  stage: number;
  cumRegret: number;
}

export interface PolicyCurve {
  policy: string;
  stages: number[];
  mean: number[];
  se: number[];
}

export function parseRegretCsv(text: string): RegretRow[] {
  const table = readTable(text, ["policy", "replication", "stage", "cum_regret"]);
  const idx = (name: string) => table.header.indexOf(name);
  const p = idx("policy");
  const r = idx("replication");
  const s = idx("stage");
  const c = idx("cum_regret");
  return table.rows.map((row, line) => {
    const parsed = {
      policy: row[p],
      replication: Number(row[r]),
      stage: Number(row[s]),
      cumRegret: Number(row[c]),
    };
    if (!Number.isFinite(parsed.stage) || !Number.isFinite(parsed.cumRegret)) {
      throw new Error(`non-numeric regret row ${line + 2}: ${row.join(",")}`);
    }
    return parsed;
  });
}

export function summarize(rows: RegretRow[]): PolicyCurve[] {
  const byPolicy = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    let stages = byPolicy.get(row.policy);
    if (!stages) {
      stages = new Map();
      byPolicy.set(row.policy, stages);
    }
    let values = stages.get(row.stage);
    if (!values) {
      values = [];
      stages.set(row.stage, values);
    }
    values.push(row.cumRegret);
  }
  const curves: PolicyCurve[] = [];
  for (const [policy, stages] of byPolicy) {
    const sorted = [...stages.keys()].sort((a, b) => a - b);
    curves.push({
      policy,
      stages: sorted,
      mean: sorted.map((k) => mean(stages.get(k)!)),
      se: sorted.map((k) => (stages.get(k)!.length > 1 ? standardError(stages.get(k)!) : 0)),
    });
  }
  return curves;
}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function niceTicks(lo: number, hi: number, target: number): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  let step = mag;
  for (const mult of [1, 2, 5, 10]) {
    if (raw <= mult * mag) {
      step = mult * mag;
      break;
    }
  }
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

export interface PlotOptions {
  width?: number;
  height?: number;
  title?: string;
}

/** Mean cumulative regret per policy with standard-error bands, as SVG. */
export function plotRegret(csvText: string, options: PlotOptions = {}): string {
  const width = options.width ?? 720;
  const height = options.height ?? 440;
  const margin = { top: 28, right: 170, bottom: 48, left: 60 };
  const curves = summarize(parseRegretCsv(csvText));
  if (curves.length === 0) throw new Error("no regret rows to plot");

  let xMax = 1;
  let yMax = 0;
  for (const c of curves) {
    xMax = Math.max(xMax, c.stages[c.stages.length - 1]);
    for (let i = 0; i < c.stages.length; i++) {
      yMax = Math.max(yMax, c.mean[i] + c.se[i]);
    }
  }
  yMax = yMax > 0 ? yMax * 1.05 : 1;
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const sx = (v: number) => margin.left + ((v - 1) / Math.max(xMax - 1, 1)) * plotW;
  const sy = (v: number) => margin.top + plotH - (v / yMax) * plotH;
  const fmt = (v: number) => (Math.abs(v) >= 100 ? v.toFixed(0) : v.toPrecision(3)).replace(/\.?0+$/, "");

  let svg = `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif">\n`;
  svg += `<rect width="${width}" height="${height}" fill="white"/>\n`;
  if (options.title) {
    svg += `<text x="${margin.left + plotW / 2}" y="18" text-anchor="middle" font-size="14">${escapeXml(options.title)}</text>\n`;
  }

  for (const tick of niceTicks(0, yMax, 6)) {
    const y = sy(tick);
    svg += `<line x1="${margin.left}" y1="${y}" x2="${margin.left + plotW}" y2="${y}" stroke="#ddd"/>\n`;
    svg += `<text x="${margin.left - 8}" y="${y + 4}" text-anchor="end" font-size="11">${fmt(tick)}</text>\n`;
  }
  for (const tick of niceTicks(1, xMax, 8)) {
    const x = sx(tick);
    svg += `<line x1="${x}" y1="${margin.top + plotH}" x2="${x}" y2="${margin.top + plotH + 4}" stroke="#333"/>\n`;
    svg += `<text x="${x}" y="${margin.top + plotH + 18}" text-anchor="middle" font-size="11">${fmt(tick)}</text>\n`;
  }
  svg += `<line x1="${margin.left}" y1="${margin.top + plotH}" x2="${margin.left + plotW}" y2="${margin.top + plotH}" stroke="#333"/>\n`;
  svg += `<line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" y2="${margin.top + plotH}" stroke="#333"/>\n`;
  svg += `<text x="${margin.left + plotW / 2}" y="${height - 10}" text-anchor="middle" font-size="12">decision stage</text>\n`;
  svg += `<text transform="rotate(-90 16 ${margin.top + plotH / 2})" x="16" y="${margin.top + plotH / 2}" text-anchor="middle" font-size="12">cumulative regret</text>\n`;

  curves.forEach((curve, k) => {
    const color = PALETTE[k % PALETTE.length];
    const upper = curve.stages.map((s, i) => `${sx(s).toFixed(2)},${sy(curve.mean[i] + curve.se[i]).toFixed(2)}`);
    const lower = curve.stages
      .map((s, i) => `${sx(s).toFixed(2)},${sy(Math.max(curve.mean[i] - curve.se[i], 0)).toFixed(2)}`)
      .reverse();
    svg += `<polygon points="${upper.concat(lower).join(" ")}" fill="${color}" fill-opacity="0.15" stroke="none"/>\n`;
    const line = curve.stages.map((s, i) => `${sx(s).toFixed(2)},${sy(curve.mean[i]).toFixed(2)}`);
    svg += `<polyline points="${line.join(" ")}" fill="none" stroke="${color}" stroke-width="2"/>\n`;
    const ly = margin.top + 14 + 20 * k;
    const lx = margin.left + plotW + 14;
    svg += `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${color}" stroke-width="2"/>\n`;
    svg += `<text x="${lx + 28}" y="${ly}" font-size="12">${escapeXml(curve.policy)}</text>\n`;
  });

  svg += "</svg>\n";
  return svg;
}
