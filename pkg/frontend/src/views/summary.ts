import { ApiClient, ApiError, SequenceGate } from "../api.js";
import {
  renderBandRegionGrid,
  renderClassBars,
  renderHistogram,
  renderSexByClass,
} from "../charts.js";
import type { DatasetSummary } from "../types.js";

// Dataset summary view: class distribution, demographic histograms and the
// band-by-region mean power grid, all straight from served bin edges/counts.

export class SummaryView {
  private gate = new SequenceGate();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async refresh(): Promise<void> {
    const ticket = this.gate.next();
    try {
      const summary = await this.api.summary();
      if (!this.gate.isCurrent(ticket)) return;
      this.render(summary);
    } catch (err) {
      if (!this.gate.isCurrent(ticket)) return;
      if (err instanceof ApiError && err.status === 404) {
        this.root.innerHTML = `<div class="empty-state" id="summary-empty">
          no dataset summary yet — run <code>neurospect summarize</code></div>`;
      } else {
        this.root.innerHTML = `<div class="error-panel">cannot load summary: ${String(
          err instanceof Error ? err.message : err,
        )}</div>`;
      }
    }
  }

  private render(summary: DatasetSummary): void {
    this.root.innerHTML = `
      <section class="summary">
        <h2>Dataset summary</h2>
        <div class="headline"><span id="summary-n">${summary.n_records}</span> subjects
          · coherence features: ${summary.has_coherence ? "present" : "absent"}</div>
        <h3>Disorder distribution</h3>
        <div id="class-bars"></div>
        <div class="hist-pair">
          <div id="age-hist" class="hist"></div>
          <div id="iq-hist" class="hist"></div>
        </div>
        <h3>Sex by class (female / male)</h3>
        <div id="sex-by-class"></div>
        <h3>Mean band power by region</h3>
        <div id="band-region"></div>
      </section>`;
    renderClassBars(this.root.querySelector("#class-bars") as HTMLElement, summary.class_counts);
    renderHistogram(this.root.querySelector("#age-hist") as HTMLElement, summary.age_hist, "Age");
    renderHistogram(this.root.querySelector("#iq-hist") as HTMLElement, summary.iq_hist, "IQ");
    renderSexByClass(this.root.querySelector("#sex-by-class") as HTMLElement, summary.sex_by_class);
    renderBandRegionGrid(
      this.root.querySelector("#band-region") as HTMLElement,
      summary.band_region_power,
      summary.regions,
    );
  }
}
