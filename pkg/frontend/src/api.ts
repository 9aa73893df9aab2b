import type {
  ApiErrorBody,
  DatasetSummary,
  HealthResponse,
  MetricsDocument,
  ModelInfo,
  PredictRequest,
  PredictResponse,
} from "./types.js";

/** Server-sent structured error ({code, message, details} with a status). */
export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(body.message);
  }
}

/** Network-level failure (server unreachable, timeout). */
export class ConnectivityError extends Error {}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(base + path, init);
  } catch (err) {
    throw new ConnectivityError(`cannot reach ${base}: ${String(err)}`);
  }
  if (!resp.ok) {
    let body: ApiErrorBody;
    try {
      body = (await resp.json()) as ApiErrorBody;
    } catch {
      body = { code: "unknown", message: `HTTP ${resp.status}`, details: {} };
    }
    throw new ApiError(resp.status, body);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(public base: string = "") {}

  health(): Promise<HealthResponse> {
    return request(this.base, "/health");
  }

  model(): Promise<ModelInfo> {
    return request(this.base, "/model");
  }

  predict(req: PredictRequest): Promise<PredictResponse> {
    return request(this.base, "/predict", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  metrics(): Promise<MetricsDocument> {
    return request(this.base, "/metrics/latest");
  }

  summary(): Promise<DatasetSummary> {
    return request(this.base, "/dataset/summary");
  }
}

/**
 * Stale-response guard: each view takes a ticket per fetch and only applies
 * a response that is still the newest one issued.
 */
export class SequenceGate {
  private counter = 0;

  next(): number {
    return ++this.counter;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.counter;
  }
}
