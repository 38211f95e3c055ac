/** Grouped-bar chart rendering: one SVG per metric kind. */

import * as echarts from "echarts";

import { ResultTable, normalizedValues } from "./table";

export interface ChartKind {
  metric: string;
  title: string;
}

export const CHART_KINDS: Record<string, ChartKind> = {
  ipc: { metric: "user_ipc", title: "User IPC" },
  hit_rate: { metric: "hit_rate", title: "Row-buffer hit rate" },
  read_latency: {
    metric: "avg_read_latency_cycles",
    title: "Average read latency",
  },
  read_queue: { metric: "avg_read_queue_len", title: "Average read queue length" },
  write_queue: {
    metric: "avg_write_queue_len",
    title: "Average write queue length",
  },
  bandwidth: {
    metric: "bandwidth_utilization",
    title: "Memory bandwidth utilization",
  },
  single_access: {
    metric: "single_access_fraction",
    title: "Single-access row activations",
  },
};

const PALETTE = [
  "#4878a8", "#e49444", "#559e55", "#d1605e", "#857aab",
  "#8c6d5a", "#d57fbe", "#7f7f7f", "#b2aa3c", "#6dbccf",
];

export function chartOption(
  kind: string,
  table: ResultTable,
  baselineCell: string,
): echarts.EChartsOption {
  const spec = CHART_KINDS[kind];
  if (spec === undefined) {
    throw new Error(
      `unknown chart kind ${kind}; known: ${Object.keys(CHART_KINDS).join(", ")}`,
    );
  }
  const { workloads, cells, values } = normalizedValues(
    table,
    spec.metric,
    baselineCell,
  );
  const series: echarts.BarSeriesOption[] = cells.map((cell, ci) => ({
    type: "bar",
    name: cell,
    data: workloads.map((_, wi) => values[wi][ci]),
    itemStyle: { color: PALETTE[ci % PALETTE.length] },
  }));
  return {
    animation: false,
    title: { text: `${spec.title} (normalized to ${baselineCell})`, left: "center" },
    legend: { bottom: 0, data: cells },
    grid: { left: 60, right: 20, top: 48, bottom: 64 },
    xAxis: { type: "category", data: workloads, name: "workload" },
    yAxis: { type: "value", name: "normalized value" },
    series,
  };
}

export function renderChartSvg(
  kind: string,
  table: ResultTable,
  baselineCell: string,
  width = 900,
  height = 480,
): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  try {
    chart.setOption(chartOption(kind, table, baselineCell));
    return canonicalizeSvg(chart.renderToSVGString());
  } finally {
    chart.dispose();
  }
}

/**
 * The SVG renderer derives ids and class names from process-wide
 * counters; renumber them in first-seen order so equal inputs give
 * byte-equal output regardless of what rendered earlier.
 */
function canonicalizeSvg(svg: string): string {
  const seen = new Map<string, number>();
  return svg
    .replace(/zr\d+-cls-(\d+)/g, (_m, n: string) => {
      if (!seen.has(n)) {
        seen.set(n, seen.size);
      }
      return `zr-cls-${seen.get(n)}`;
    })
    .replace(/zr\d+-/g, "zr-");
}

export function allChartKinds(): string[] {
  return Object.keys(CHART_KINDS);
}
