import { ApiClient, ApiError, SequenceGate } from "../api.js";
import { renderConfusionHeatmap, renderMetricBars } from "../charts.js";
import type { AblationReport, EvaluationReport } from "../types.js";

// Metrics view: confusion heatmap + per-class precision/recall/F1 bars for a
// plain evaluation; side-by-side arms with deltas for an ablation report.

function pct(x: number): string {
  return (x * 100).toFixed(1) + "%";
}

export class MetricsView {
  private gate = new SequenceGate();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async refresh(): Promise<void> {
    const ticket = this.gate.next();
    try {
      const doc = await this.api.metrics();
      if (!this.gate.isCurrent(ticket)) return;
      if (doc.kind === "ablation") {
        this.renderAblation(doc);
      } else {
        this.renderEvaluation(doc);
      }
    } catch (err) {
      if (!this.gate.isCurrent(ticket)) return;
      if (err instanceof ApiError && err.status === 404) {
        this.root.innerHTML = `<div class="empty-state" id="metrics-empty">
          no evaluation yet — run <code>neurospect evaluate</code> or <code>ablate</code></div>`;
      } else {
        this.root.innerHTML = `<div class="error-panel">cannot load metrics: ${String(
          err instanceof Error ? err.message : err,
        )}</div>`;
      }
    }
  }

  private renderEvaluation(report: EvaluationReport): void {
    this.root.innerHTML = `
      <section class="metrics">
        <h2>Evaluation</h2>
        <div class="headline">accuracy <strong id="metrics-accuracy">${pct(report.accuracy)}</strong>
          over <span id="metrics-n">${report.n_records}</span> records ·
          macro-F1 ${pct(report.macro.f1)}</div>
        <div id="confusion"></div>
        <h3>Per-class metrics</h3>
        <div id="metric-bars"></div>
      </section>`;
    renderConfusionHeatmap(
      this.root.querySelector("#confusion") as HTMLElement,
      report.labels,
      report.confusion_matrix,
    );
    renderMetricBars(this.root.querySelector("#metric-bars") as HTMLElement, report);
  }

  private renderAblation(report: AblationReport): void {
    const withR = report.with_coherence;
    const withoutR = report.without_coherence;
    const deltaRows = withR.labels
      .map((label) => {
        const d = report.per_class_delta[label];
        return `<tr data-label="${label}">
          <td>${label}</td>
          <td>${d.precision >= 0 ? "+" : ""}${d.precision.toFixed(3)}</td>
          <td>${d.recall >= 0 ? "+" : ""}${d.recall.toFixed(3)}</td>
          <td>${d.f1 >= 0 ? "+" : ""}${d.f1.toFixed(3)}</td>
        </tr>`;
      })
      .join("");
    this.root.innerHTML = `
      <section class="metrics ablation">
        <h2>Coherence ablation</h2>
        <div class="headline">
          with coherence <strong id="acc-with">${pct(withR.accuracy)}</strong>
          · without <strong id="acc-without">${pct(withoutR.accuracy)}</strong>
          · delta <strong id="acc-delta">${report.accuracy_delta >= 0 ? "+" : ""}${pct(report.accuracy_delta)}</strong>
        </div>
        <div class="arm-pair">
          <div><h3>with coherence</h3><div id="confusion-with"></div></div>
          <div><h3>without coherence</h3><div id="confusion-without"></div></div>
        </div>
        <h3>Per-class deltas (with − without)</h3>
        <table class="delta-table" id="delta-table">
          <thead><tr><th>disorder</th><th>Δprecision</th><th>Δrecall</th><th>ΔF1</th></tr></thead>
          <tbody>${deltaRows}</tbody>
        </table>
      </section>`;
    renderConfusionHeatmap(
      this.root.querySelector("#confusion-with") as HTMLElement,
      withR.labels,
      withR.confusion_matrix,
    );
    renderConfusionHeatmap(
      this.root.querySelector("#confusion-without") as HTMLElement,
      withoutR.labels,
      withoutR.confusion_matrix,
    );
  }
}
