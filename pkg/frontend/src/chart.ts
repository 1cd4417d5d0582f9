/**
 * Client-side trend chart: an SVG built from TrendProfile JSON.
 *
 * Mean glucose line with a +/-1 SD band, horizontal lines at both clinical
 * target thresholds, and an hour-labeled axis. Empty bins (count 0) break
 * the line into segments; an all-empty profile renders an "insufficient
 * data" placeholder instead of a chart.
 */
import type { TrendBin } from "./types.js";

export interface ChartOptions {
  width?: number;
  height?: number;
  low?: number;
  high?: number;
}

const DEFAULTS: Required<ChartOptions> = {
  width: 720,
  height: 320,
  low: 70,
  high: 180,
};

const M_LEFT = 46;
const M_RIGHT = 12;
const M_TOP = 12;
const M_BOT = 30;

function fmt(v: number): string {
  return v.toFixed(2);
}

export function buildTrendChart(bins: TrendBin[], options: ChartOptions = {}): string {
  const opt = { ...DEFAULTS, ...options };
  const populated = bins.filter((b) => b.count > 0);
  if (populated.length === 0) {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${opt.width}" ` +
      `height="${opt.height}" class="trend-chart trend-empty">` +
      `<text x="${opt.width / 2}" y="${opt.height / 2}" text-anchor="middle" ` +
      `class="placeholder">insufficient data for this period</text></svg>`
    );
  }
  const plotW = opt.width - M_LEFT - M_RIGHT;
  const plotH = opt.height - M_TOP - M_BOT;
  const tops = populated.map((b) => b.mean + b.std);
  const bots = populated.map((b) => b.mean - b.std);
  const yMax = Math.max(opt.high + 40, ...tops.map((t) => t + 10));
  const yMin = Math.min(Math.max(0, opt.low - 40), ...bots.map((b) => b - 10));

  const binMinutes = bins.length > 0 ? 1440 / bins.length : 30;
  const clockToMinute = (clock: string): number => {
    const [h, m] = clock.split(":").map(Number);
    return h * 60 + m + binMinutes / 2;
  };
  const x = (minute: number): number => M_LEFT + (plotW * minute) / 1440;
  const y = (value: number): number =>
    M_TOP + (plotH * (yMax - value)) / (yMax - yMin);

  // contiguous populated runs: one band polygon + one mean polyline each
  const runs: TrendBin[][] = [];
  let current: TrendBin[] = [];
  for (const bin of bins) {
    if (bin.count > 0) {
      current.push(bin);
    } else if (current.length > 0) {
      runs.push(current);
      current = [];
    }
  }
  if (current.length > 0) {
    runs.push(current);
  }

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${opt.width}" ` +
      `height="${opt.height}" viewBox="0 0 ${opt.width} ${opt.height}" ` +
      `class="trend-chart">`,
  ];
  for (const run of runs) {
    const upper = run
      .map((b) => `${fmt(x(clockToMinute(b.clock)))},${fmt(y(b.mean + b.std))}`)
      .join(" ");
    const lower = [...run]
      .reverse()
      .map((b) => `${fmt(x(clockToMinute(b.clock)))},${fmt(y(b.mean - b.std))}`)
      .join(" ");
    parts.push(
      `<polygon class="sd-band" points="${upper} ${lower}" ` +
        `fill="#8fd19e" fill-opacity="0.35" stroke="none"/>`,
    );
  }
  for (const [level, label] of [
    [opt.low, "low"],
    [opt.high, "high"],
  ] as const) {
    const yy = fmt(y(level));
    parts.push(
      `<line class="threshold" data-threshold="${label}" x1="${M_LEFT}" ` +
        `y1="${yy}" x2="${opt.width - M_RIGHT}" y2="${yy}" ` +
        `stroke="#c0392b" stroke-dasharray="6,4"/>`,
    );
    parts.push(
      `<text x="${M_LEFT - 5}" y="${yy}" text-anchor="end" class="threshold-label" ` +
        `font-size="10" fill="#c0392b" dominant-baseline="middle">${level}</text>`,
    );
  }
  for (const run of runs) {
    const pts = run
      .map((b) => `${fmt(x(clockToMinute(b.clock)))},${fmt(y(b.mean))}`)
      .join(" ");
    parts.push(
      `<polyline class="mean-line" points="${pts}" fill="none" ` +
        `stroke="#1e8449" stroke-width="2"/>`,
    );
  }
  const axisY = opt.height - M_BOT;
  parts.push(
    `<line class="axis" x1="${M_LEFT}" y1="${axisY}" ` +
      `x2="${opt.width - M_RIGHT}" y2="${axisY}" stroke="#333"/>`,
  );
  for (let hour = 0; hour <= 24; hour += 3) {
    const xx = fmt(x(hour * 60));
    parts.push(
      `<text class="hour-label" x="${xx}" y="${axisY + 16}" ` +
        `text-anchor="middle" font-size="10" fill="#333">` +
        `${String(hour).padStart(2, "0")}:00</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
