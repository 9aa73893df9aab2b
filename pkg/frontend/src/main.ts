import { ApiClient } from "./api.js";
import { MetricsView } from "./views/metrics.js";
import { PredictView } from "./views/predict.js";
import { SummaryView } from "./views/summary.js";

// Single-page boot: three tabs (predict / metrics / summary) over one API
// client; the dashboard is served statically by the prediction service, so
// same-origin relative URLs work unchanged.

export function boot(root: HTMLElement, base = ""): {
  predict: PredictView;
  metrics: MetricsView;
  summary: SummaryView;
} {
  root.innerHTML = `
    <header class="top">
      <h1>neurospect dashboard</h1>
      <div id="health" class="health"></div>
      <nav>
        <button data-tab="predict" class="tab active">predict</button>
        <button data-tab="metrics" class="tab">metrics</button>
        <button data-tab="summary" class="tab">summary</button>
      </nav>
    </header>
    <main>
      <div id="tab-predict" class="pane"></div>
      <div id="tab-metrics" class="pane" hidden></div>
      <div id="tab-summary" class="pane" hidden></div>
    </main>`;

  const api = new ApiClient(base);
  const views = {
    predict: new PredictView(root.querySelector("#tab-predict") as HTMLElement, api),
    metrics: new MetricsView(root.querySelector("#tab-metrics") as HTMLElement, api),
    summary: new SummaryView(root.querySelector("#tab-summary") as HTMLElement, api),
  };

  root.querySelectorAll<HTMLButtonElement>("nav .tab").forEach((btn) => {
    btn.addEventListener("click", () => {
      root.querySelectorAll(".tab").forEach((b) => b.classList.remove("active"));
      btn.classList.add("active");
      for (const name of ["predict", "metrics", "summary"] as const) {
        (root.querySelector(`#tab-${name}`) as HTMLElement).hidden =
          name !== btn.dataset.tab;
      }
      if (btn.dataset.tab === "metrics") void views.metrics.refresh();
      if (btn.dataset.tab === "summary") void views.summary.refresh();
    });
  });

  void api
    .health()
    .then((h) => {
      (root.querySelector("#health") as HTMLElement).textContent = h.model_loaded
        ? "model loaded"
        : "no model loaded";
    })
    .catch(() => {
      (root.querySelector("#health") as HTMLElement).textContent = "server unreachable";
    });

  void views.predict.init();
  return views;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app") as HTMLElement);
}
