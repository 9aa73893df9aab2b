import { ApiClient, ApiError, ConnectivityError, SequenceGate } from "../api.js";
import {
  FormState,
  canSubmit,
  emptyForm,
  missingPsd,
  parseCsvRow,
  parseNamedValues,
  sampleFromSummary,
  toPredictRequest,
  validateDemographics,
} from "../form.js";
import { renderProbabilityBars } from "../charts.js";
import type { DatasetSummary, ModelInfo } from "../types.js";

// Prediction view: demographics + feature source -> predicted class with
// probability bars. Server-side errors render inline and never clear the
// form.

export class PredictView {
  state: FormState = emptyForm();
  model: ModelInfo | null = null;
  private summary: DatasetSummary | null = null;
  private gate = new SequenceGate();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async init(): Promise<void> {
    this.renderSkeleton();
    try {
      this.model = await this.api.model();
    } catch (err) {
      this.model = null;
      this.showError(err, "model");
    }
    try {
      this.summary = await this.api.summary();
    } catch {
      this.summary = null; // sample picker simply stays empty
    }
    this.renderForm();
  }

  private el<T extends HTMLElement>(selector: string): T {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found as T;
  }

  private renderSkeleton(): void {
    this.root.innerHTML = `
      <section class="predict">
        <h2>Disorder prediction</h2>
        <div id="predict-error" class="error-panel" hidden></div>
        <form id="predict-form">
          <fieldset class="demographics">
            <legend>Demographics</legend>
            <label>age <input name="age" id="inp-age" inputmode="decimal"></label>
            <label>sex
              <select name="sex" id="inp-sex">
                <option value=""></option>
                <option value="female">female</option>
                <option value="male">male</option>
              </select>
            </label>
            <label>education (years) <input name="education" id="inp-education"></label>
            <label>IQ <input name="iq" id="inp-iq"></label>
          </fieldset>
          <fieldset class="features">
            <legend>EEG features</legend>
            <label>sample picker
              <select id="inp-sample"><option value=""></option></select>
            </label>
            <label>CSV row upload <input type="file" id="inp-file" accept=".csv"></label>
            <label>pasted named values
              <textarea id="inp-paste" rows="4"
                placeholder="psd.delta.Fp1 = 3.5 ..."></textarea>
            </label>
            <div id="feature-status" class="feature-status"></div>
          </fieldset>
          <div id="validation" class="validation"></div>
          <button id="btn-submit" type="submit" disabled>predict</button>
        </form>
        <div id="predict-result" class="result-panel" hidden>
          <div id="result-label" class="result-label"></div>
          <div id="result-flags" class="result-flags"></div>
          <div id="result-bars" class="result-bars"></div>
          <div id="result-meta" class="result-meta"></div>
        </div>
      </section>`;

    this.el<HTMLFormElement>("#predict-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
    for (const [id, key] of [
      ["#inp-age", "age"],
      ["#inp-sex", "sex"],
      ["#inp-education", "education"],
      ["#inp-iq", "iq"],
    ] as const) {
      this.el<HTMLInputElement>(id).addEventListener("input", (ev) => {
        this.state.demographics[key] = (ev.target as HTMLInputElement).value;
        this.refreshValidation();
      });
    }
    this.el<HTMLTextAreaElement>("#inp-paste").addEventListener("change", (ev) => {
      const text = (ev.target as HTMLTextAreaElement).value;
      try {
        this.state.features = parseNamedValues(text);
        this.state.messages = [];
      } catch (err) {
        this.state.messages = [String((err as Error).message)];
      }
      this.refreshValidation();
    });
    this.el<HTMLInputElement>("#inp-file").addEventListener("change", async (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (!file) return;
      try {
        this.applyCsvText(await file.text());
      } catch (err) {
        this.state.messages = [String((err as Error).message)];
      }
      this.refreshValidation();
    });
    this.el<HTMLSelectElement>("#inp-sample").addEventListener("change", (ev) => {
      const cls = (ev.target as HTMLSelectElement).value;
      if (cls) this.applySample(cls);
    });
  }

  /** Used directly by tests and by the file-input handler. */
  applyCsvText(text: string, rowId?: string): void {
    const parsed = parseCsvRow(text, rowId);
    this.state.features = parsed.features;
    Object.assign(this.state.demographics, parsed.demographics);
    this.state.messages = parsed.label ? [`row label: ${parsed.label}`] : [];
    this.syncDemographicInputs();
    this.refreshValidation();
  }

  applySample(className: string): void {
    if (!this.summary || !this.model) return;
    this.state = sampleFromSummary(this.summary, this.model, className);
    this.syncDemographicInputs();
    this.refreshValidation();
  }

  private syncDemographicInputs(): void {
    this.el<HTMLInputElement>("#inp-age").value = this.state.demographics.age;
    this.el<HTMLSelectElement>("#inp-sex").value = this.state.demographics.sex;
    this.el<HTMLInputElement>("#inp-education").value = this.state.demographics.education;
    this.el<HTMLInputElement>("#inp-iq").value = this.state.demographics.iq;
  }

  private renderForm(): void {
    const picker = this.el<HTMLSelectElement>("#inp-sample");
    if (this.summary) {
      picker.innerHTML =
        `<option value=""></option>` +
        Object.keys(this.summary.class_counts)
          .map((c) => `<option value="${c}">${c}</option>`)
          .join("");
    }
    this.refreshValidation();
  }

  refreshValidation(): void {
    const problems = [...validateDemographics(this.state.demographics), ...this.state.messages];
    const status = this.el<HTMLElement>("#feature-status");
    if (this.model) {
      const missing = missingPsd(this.state.features, this.model);
      const total = Object.keys(this.state.features).length;
      status.textContent = missing.length
        ? `${total} features loaded; ${missing.length} PSD features missing (e.g. ${missing[0]})`
        : `${total} features loaded; PSD set complete`;
    }
    this.el<HTMLElement>("#validation").textContent = problems.join("; ");
    this.el<HTMLButtonElement>("#btn-submit").disabled = !canSubmit(this.state, this.model);
  }

  async submit(): Promise<void> {
    const ticket = this.gate.next();
    const errorPanel = this.el<HTMLElement>("#predict-error");
    errorPanel.hidden = true;
    try {
      const resp = await this.api.predict(toPredictRequest(this.state));
      if (!this.gate.isCurrent(ticket)) return; // a newer submit superseded this one
      const panel = this.el<HTMLElement>("#predict-result");
      panel.hidden = false;
      this.el<HTMLElement>("#result-label").textContent = resp.label;
      this.el<HTMLElement>("#result-flags").textContent = resp.coherence_ablated
        ? "coherence features absent: prediction used the ablated (PSD-only) tensor"
        : "";
      renderProbabilityBars(this.el<HTMLElement>("#result-bars"), resp.probabilities);
      this.el<HTMLElement>("#result-meta").textContent =
        `model ${resp.model_version} · schema ${resp.schema_fingerprint.slice(0, 12)}…`;
    } catch (err) {
      if (!this.gate.isCurrent(ticket)) return;
      this.showError(err, "predict");
    }
  }

  private showError(err: unknown, context: string): void {
    const panel = this.el<HTMLElement>("#predict-error");
    panel.hidden = false;
    if (err instanceof ApiError) {
      const missing = (err.body.details as { missing?: string[] }).missing;
      panel.innerHTML = `
        <strong>${err.body.code}</strong> (${err.status}): ${err.body.message}
        ${missing ? `<div class="error-details">missing: ${missing.slice(0, 8).join(", ")}${missing.length > 8 ? "…" : ""}</div>` : ""}`;
    } else if (err instanceof ConnectivityError) {
      panel.textContent = `server unreachable (${context}); your inputs are preserved`;
    } else {
      panel.textContent = String(err);
    }
  }
}
