// JSON contracts of the five service endpoints. Every number the dashboard
// shows comes from these documents; the UI never computes beyond display
// rounding.

export interface HealthResponse {
  status: string;
  model_loaded: boolean;
}

export interface ModelInfo {
  model_version: string;
  created: string;
  schema_fingerprint: string;
  mode: "full" | "psd_only";
  include_coherence: boolean;
  labels: string[];
  bands: [string, number, number][];
  electrodes: string[];
}

export interface PredictRequest {
  demographics: {
    age: number | null;
    sex: string | null;
    education: number | null;
    iq: number | null;
  };
  features: Record<string, number>;
}

export interface PredictResponse {
  label: string;
  probabilities: Record<string, number>;
  model_version: string;
  schema_fingerprint: string;
  coherence_ablated: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export interface ClassMetrics {
  precision: number;
  recall: number;
  f1: number;
  support: number;
}

export interface EvaluationReport {
  kind: "evaluation";
  accuracy: number;
  labels: string[];
  confusion_matrix: number[][];
  per_class: Record<string, ClassMetrics>;
  macro: { precision: number; recall: number; f1: number };
  n_records: number;
}

export interface AblationReport {
  kind: "ablation";
  with_coherence: EvaluationReport;
  without_coherence: EvaluationReport;
  accuracy_delta: number;
  per_class_delta: Record<string, { precision: number; recall: number; f1: number }>;
  paper_reference: Record<string, number | boolean>;
}

export type MetricsDocument = EvaluationReport | AblationReport;

export interface Histogram {
  edges: number[];
  counts: number[];
}

export interface DatasetSummary {
  n_records: number;
  has_coherence: boolean;
  class_counts: Record<string, number>;
  age_hist: Histogram;
  iq_hist: Histogram;
  sex_by_class: Record<string, { female: number; male: number }>;
  band_region_power: Record<string, Record<string, number>>;
  bands: string[];
  regions: string[];
}
