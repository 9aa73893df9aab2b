import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { MetricsView } from "../src/views/metrics.js";
import { PredictView } from "../src/views/predict.js";
import { SummaryView } from "../src/views/summary.js";
import type {
  AblationReport,
  DatasetSummary,
  EvaluationReport,
  ModelInfo,
  PredictResponse,
} from "../src/types.js";

// A mock server implementing the documented JSON contracts; the dashboard
// must be fully functional against it.

const LABELS = [
  "Addictive disorder", "Anxiety disorder", "Healthy control", "Mood disorder",
  "Obsessive-compulsive disorder", "Schizophrenia", "Trauma and stress related disorder",
];

const model: ModelInfo = {
  model_version: "1:2026-01-01",
  created: "2026-01-01",
  schema_fingerprint: "f".repeat(64),
  mode: "full",
  include_coherence: true,
  labels: LABELS,
  bands: [["alpha", 8, 12]],
  electrodes: ["Fp1", "O2"],
};

const summary: DatasetSummary = {
  n_records: 21,
  has_coherence: true,
  class_counts: Object.fromEntries(LABELS.map((l) => [l, 3])),
  age_hist: { edges: [0, 20, 40, 60], counts: [2, 12, 7] },
  iq_hist: { edges: [50, 100, 150], counts: [9, 12] },
  sex_by_class: Object.fromEntries(LABELS.map((l) => [l, { female: 2, male: 1 }])),
  band_region_power: {
    alpha: { Frontal: 1, Central: 2, Temporal: 3, Parietal: 4, Occipital: 5 },
  },
  bands: ["alpha"],
  regions: ["Frontal", "Central", "Temporal", "Parietal", "Occipital"],
};

const evaluation: EvaluationReport = {
  kind: "evaluation",
  accuracy: 0.5,
  labels: ["a", "b"],
  confusion_matrix: [[2, 2], [2, 2]],
  per_class: {
    a: { precision: 0.5, recall: 0.5, f1: 0.5, support: 4 },
    b: { precision: 0.5, recall: 0.5, f1: 0.5, support: 4 },
  },
  macro: { precision: 0.5, recall: 0.5, f1: 0.5 },
  n_records: 8,
};

const ablation: AblationReport = {
  kind: "ablation",
  with_coherence: { ...evaluation, accuracy: 0.9 },
  without_coherence: { ...evaluation, accuracy: 0.4 },
  accuracy_delta: 0.5,
  per_class_delta: {
    a: { precision: 0.2, recall: 0.2, f1: 0.2 },
    b: { precision: -0.1, recall: 0.1, f1: 0.0 },
  },
  paper_reference: { with_coherence: 0.964, without_coherence: 0.887, asserted: false },
};

const prediction: PredictResponse = {
  label: "Mood disorder",
  probabilities: Object.fromEntries(LABELS.map((l, i) => [l, i === 3 ? 0.4 : 0.1])),
  model_version: "1:2026-01-01",
  schema_fingerprint: model.schema_fingerprint,
  coherence_ablated: true,
};

type Route = (init?: RequestInit) => Promise<Response> | Response;

function installMockServer(routes: Record<string, Route>): void {
  vi.stubGlobal("fetch", (url: string, init?: RequestInit) => {
    const path = String(url).replace(/^https?:\/\/[^/]+/, "");
    const route = routes[path];
    if (!route) {
      return Promise.resolve(json(404, { code: "not_found", message: `no route ${path}`, details: {} }));
    }
    return Promise.resolve(route(init));
  });
}

function json(status: number, doc: unknown): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="root"></div>';
  root = document.getElementById("root") as HTMLElement;
});

afterEach(() => {
  vi.unstubAllGlobals();
});

const CSV_ROW = [
  "id,age,sex,iq,main.disorder,psd.alpha.Fp1,psd.alpha.O2",
  "s1,44,female,101,Mood disorder,1.5,2.5",
].join("\n");

async function readyPredictView(extraRoutes: Record<string, Route> = {}): Promise<PredictView> {
  installMockServer({
    "/model": () => json(200, model),
    "/dataset/summary": () => json(200, summary),
    "/predict": () => json(200, prediction),
    ...extraRoutes,
  });
  const view = new PredictView(root, new ApiClient("http://mock"));
  await view.init();
  view.applyCsvText(CSV_ROW);
  return view;
}

describe("prediction form", () => {
  it("disables submit until demographics and PSD set are complete", async () => {
    installMockServer({
      "/model": () => json(200, model),
      "/dataset/summary": () => json(200, summary),
    });
    const view = new PredictView(root, new ApiClient("http://mock"));
    await view.init();
    const btn = root.querySelector("#btn-submit") as HTMLButtonElement;
    expect(btn.disabled).toBe(true);
    view.applyCsvText(CSV_ROW);
    expect(btn.disabled).toBe(false);
  });

  it("renders the predicted label with bars summing to ~100% and the ablation flag", async () => {
    const view = await readyPredictView();
    await view.submit();
    expect((root.querySelector("#result-label") as HTMLElement).textContent)
      .toBe("Mood disorder");
    const rows = [...root.querySelectorAll(".prob-row")] as HTMLElement[];
    expect(rows).toHaveLength(7);
    const total = rows.reduce((acc, el) => acc + Number(el.dataset.pct), 0);
    expect(Math.abs(total - 100)).toBeLessThanOrEqual(0.5);
    expect((root.querySelector("#result-flags") as HTMLElement).textContent)
      .toMatch(/ablated/);
  });

  it("shows the server's 400 inline and preserves the form state", async () => {
    const view = await readyPredictView({
      "/predict": () => json(400, {
        code: "missing_features",
        message: "1 required PSD feature(s) missing",
        details: { missing: ["psd.alpha.O2"], missing_count: 1 },
      }),
    });
    (root.querySelector("#inp-age") as HTMLInputElement).value = "44";
    await view.submit();
    const panel = root.querySelector("#predict-error") as HTMLElement;
    expect(panel.hidden).toBe(false);
    expect(panel.textContent).toMatch(/missing_features/);
    expect(panel.textContent).toMatch(/psd\.alpha\.O2/);
    expect((root.querySelector("#inp-age") as HTMLInputElement).value).toBe("44");
    expect(Object.keys(view.state.features)).toContain("psd.alpha.Fp1");
  });

  it("surfaces 503 and connectivity failures without losing state", async () => {
    const view = await readyPredictView({
      "/predict": () => json(503, { code: "no_model", message: "no model loaded", details: {} }),
    });
    await view.submit();
    expect((root.querySelector("#predict-error") as HTMLElement).textContent)
      .toMatch(/no_model/);

    vi.stubGlobal("fetch", () => Promise.reject(new TypeError("ECONNREFUSED")));
    await view.submit();
    expect((root.querySelector("#predict-error") as HTMLElement).textContent)
      .toMatch(/unreachable/);
    expect(view.state.features["psd.alpha.Fp1"]).toBe(1.5);
  });

  it("ignores a stale response when a newer submission superseded it", async () => {
    let firstResolve: (r: Response) => void = () => {};
    const first = new Promise<Response>((res) => (firstResolve = res));
    let call = 0;
    const view = await readyPredictView({
      "/predict": () => {
        call += 1;
        if (call === 1) return first;
        return json(200, { ...prediction, label: "Healthy control" });
      },
    });
    const p1 = view.submit();
    const p2 = view.submit();
    await p2;
    firstResolve(json(200, { ...prediction, label: "Addictive disorder" }));
    await p1;
    expect((root.querySelector("#result-label") as HTMLElement).textContent)
      .toBe("Healthy control");
  });

  it("seeds a complete form from the sample picker", async () => {
    const view = await readyPredictView();
    view.applySample("Healthy control");
    expect((root.querySelector("#btn-submit") as HTMLButtonElement).disabled).toBe(false);
    expect(view.state.features["psd.alpha.O2"]).toBe(5); // served Occipital mean
  });
});

describe("metrics view", () => {
  it("renders the evaluation heatmap and per-class bars", async () => {
    installMockServer({ "/metrics/latest": () => json(200, evaluation) });
    const view = new MetricsView(root, new ApiClient("http://mock"));
    await view.refresh();
    expect((root.querySelector("#metrics-accuracy") as HTMLElement).textContent).toBe("50.0%");
    expect(root.querySelectorAll("#confusion .heat-cell")).toHaveLength(4);
    expect(root.querySelectorAll(".metric-bar")).toHaveLength(6);
  });

  it("renders both ablation arms with deltas", async () => {
    installMockServer({ "/metrics/latest": () => json(200, ablation) });
    const view = new MetricsView(root, new ApiClient("http://mock"));
    await view.refresh();
    expect((root.querySelector("#acc-with") as HTMLElement).textContent).toBe("90.0%");
    expect((root.querySelector("#acc-without") as HTMLElement).textContent).toBe("40.0%");
    expect((root.querySelector("#acc-delta") as HTMLElement).textContent).toBe("+50.0%");
    expect(root.querySelectorAll("#delta-table tbody tr")).toHaveLength(2);
    expect(root.querySelectorAll("#confusion-with .heat-cell")).toHaveLength(4);
  });

  it("shows the empty state on 404", async () => {
    installMockServer({
      "/metrics/latest": () => json(404, { code: "not_found", message: "none", details: {} }),
    });
    const view = new MetricsView(root, new ApiClient("http://mock"));
    await view.refresh();
    expect(root.querySelector("#metrics-empty")).toBeTruthy();
    expect(root.textContent).toMatch(/no evaluation yet/);
  });
});

describe("summary view", () => {
  it("renders counts that sum to the served dataset size", async () => {
    installMockServer({ "/dataset/summary": () => json(200, summary) });
    const view = new SummaryView(root, new ApiClient("http://mock"));
    await view.refresh();
    expect((root.querySelector("#summary-n") as HTMLElement).textContent).toBe("21");
    const rows = [...root.querySelectorAll(".count-row")] as HTMLElement[];
    const total = rows.reduce((acc, r) => acc + Number(r.dataset.count), 0);
    expect(total).toBe(21);
    // histogram bins match served edges exactly
    const bars = [...root.querySelectorAll("#age-hist .hist-bar")] as HTMLElement[];
    expect(bars.map((b) => Number(b.dataset.lo))).toEqual([0, 20, 40]);
    // band x region grid (1 band here): 5 cells
    expect(root.querySelectorAll("#band-region .heat-cell")).toHaveLength(5);
  });

  it("shows the empty state on 404", async () => {
    installMockServer({
      "/dataset/summary": () => json(404, { code: "not_found", message: "none", details: {} }),
    });
    const view = new SummaryView(root, new ApiClient("http://mock"));
    await view.refresh();
    expect(root.querySelector("#summary-empty")).toBeTruthy();
  });
});
