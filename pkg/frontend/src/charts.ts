import type { EvaluationReport, Histogram } from "./types.js";

// DOM chart renderers. Values arrive pre-computed from the service; the only
// arithmetic here is display rounding and pixel scaling.

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderProbabilityBars(root: HTMLElement, probs: Record<string, number>): void {
  const entries = Object.entries(probs).sort((a, b) => b[1] - a[1]);
  root.innerHTML = entries
    .map(([label, p]) => {
      const pct = (p * 100).toFixed(1);
      return `
      <div class="prob-row" data-label="${esc(label)}" data-pct="${pct}">
        <div class="prob-label">${esc(label)}</div>
        <div class="prob-track"><div class="prob-fill" style="width:${pct}%"></div></div>
        <div class="prob-pct">${pct}%</div>
      </div>`;
    })
    .join("");
}

export function renderConfusionHeatmap(
  root: HTMLElement,
  labels: string[],
  matrix: number[][],
): void {
  const peak = Math.max(1, ...matrix.flat());
  const head = labels.map((l) => `<th title="${esc(l)}">${esc(l.slice(0, 10))}</th>`).join("");
  const rows = matrix
    .map((row, i) => {
      const cells = row
        .map((count, j) => {
          const alpha = (count / peak).toFixed(3);
          const dark = count / peak > 0.5;
          return `<td class="heat-cell" data-row="${i}" data-col="${j}" data-count="${count}"
            style="background:rgba(38,84,148,${alpha});color:${dark ? "#fff" : "#222"}">${count}</td>`;
        })
        .join("");
      return `<tr><th title="${esc(labels[i])}">${esc(labels[i].slice(0, 10))}</th>${cells}</tr>`;
    })
    .join("");
  root.innerHTML = `
    <table class="heatmap">
      <thead><tr><th>true \\ predicted</th>${head}</tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}

export function renderMetricBars(root: HTMLElement, report: EvaluationReport): void {
  const groups = report.labels
    .map((label) => {
      const m = report.per_class[label];
      const bar = (metric: string, value: number) => `
        <div class="metric-bar metric-${metric}" data-metric="${metric}" data-value="${value.toFixed(3)}"
             style="height:${(value * 100).toFixed(1)}%" title="${metric} ${(value * 100).toFixed(1)}%"></div>`;
      return `
      <div class="metric-group" data-label="${esc(label)}">
        <div class="metric-bars">${bar("precision", m.precision)}${bar("recall", m.recall)}${bar("f1", m.f1)}</div>
        <div class="metric-label" title="${esc(label)}">${esc(label.slice(0, 12))}</div>
      </div>`;
    })
    .join("");
  root.innerHTML = `
    <div class="metric-legend">
      <span class="swatch metric-precision"></span>precision
      <span class="swatch metric-recall"></span>recall
      <span class="swatch metric-f1"></span>F1
    </div>
    <div class="metric-chart">${groups}</div>`;
}

export function renderHistogram(root: HTMLElement, hist: Histogram, title: string): void {
  const peak = Math.max(1, ...hist.counts);
  const bars = hist.counts
    .map((count, i) => {
      const lo = hist.edges[i];
      const hi = hist.edges[i + 1];
      return `<div class="hist-bar" data-lo="${lo}" data-hi="${hi}" data-count="${count}"
        style="height:${((count / peak) * 100).toFixed(1)}%"
        title="[${lo}, ${hi}): ${count}"></div>`;
    })
    .join("");
  root.innerHTML = `
    <div class="hist-title">${esc(title)}</div>
    <div class="hist-bars">${bars}</div>
    <div class="hist-range">${hist.edges[0]} – ${hist.edges[hist.edges.length - 1]}</div>`;
}

export function renderClassBars(root: HTMLElement, counts: Record<string, number>): void {
  const entries = Object.entries(counts);
  const peak = Math.max(1, ...entries.map(([, n]) => n));
  root.innerHTML = entries
    .map(
      ([label, n]) => `
      <div class="count-row" data-label="${esc(label)}" data-count="${n}">
        <div class="count-label" title="${esc(label)}">${esc(label.slice(0, 22))}</div>
        <div class="count-track"><div class="count-fill" style="width:${((n / peak) * 100).toFixed(1)}%"></div></div>
        <div class="count-n">${n}</div>
      </div>`,
    )
    .join("");
}

export function renderSexByClass(
  root: HTMLElement,
  sexByClass: Record<string, { female: number; male: number }>,
): void {
  const entries = Object.entries(sexByClass);
  const peak = Math.max(1, ...entries.flatMap(([, c]) => [c.female, c.male]));
  root.innerHTML = entries
    .map(
      ([label, c]) => `
      <div class="sex-row" data-label="${esc(label)}">
        <div class="count-label" title="${esc(label)}">${esc(label.slice(0, 22))}</div>
        <div class="sex-pair">
          <div class="sex-bar sex-female" style="width:${((c.female / peak) * 100).toFixed(1)}%" title="female ${c.female}"></div>
          <div class="sex-bar sex-male" style="width:${((c.male / peak) * 100).toFixed(1)}%" title="male ${c.male}"></div>
        </div>
        <div class="count-n">${c.female}/${c.male}</div>
      </div>`,
    )
    .join("");
}

export function renderBandRegionGrid(
  root: HTMLElement,
  grid: Record<string, Record<string, number>>,
  regions: string[],
): void {
  const bands = Object.keys(grid);
  const values = bands.flatMap((b) => regions.map((r) => grid[b][r] ?? 0));
  const peak = Math.max(1e-12, ...values);
  const rows = bands
    .map((band) => {
      const cells = regions
        .map((region) => {
          const v = grid[band][region] ?? 0;
          return `<td class="heat-cell" data-band="${esc(band)}" data-region="${esc(region)}"
            style="background:rgba(46,125,50,${(v / peak).toFixed(3)});color:${v / peak > 0.5 ? "#fff" : "#222"}"
            title="${esc(band)} / ${esc(region)}: ${v.toFixed(3)}">${v.toFixed(2)}</td>`;
        })
        .join("");
      return `<tr><th>${esc(band)}</th>${cells}</tr>`;
    })
    .join("");
  root.innerHTML = `
    <table class="heatmap band-region">
      <thead><tr><th>band \\ region</th>${regions.map((r) => `<th>${esc(r)}</th>`).join("")}</tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}
