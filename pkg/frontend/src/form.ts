import type { DatasetSummary, ModelInfo, PredictRequest } from "./types.js";

// Prediction form state: demographics plus one of three feature sources
// (pasted named values, an uploaded CSV row, or a sample seeded from the
// served dataset summary). Submit stays disabled until the demographics
// validate and the source resolves to a complete PSD set.

export interface DemographicsInput {
  age: string;
  sex: string;
  education: string;
  iq: string;
}

export interface FormState {
  demographics: DemographicsInput;
  features: Record<string, number>;
  messages: string[];
}

export function emptyForm(): FormState {
  return {
    demographics: { age: "", sex: "", education: "", iq: "" },
    features: {},
    messages: [],
  };
}

export function requiredPsdNames(model: ModelInfo): string[] {
  const names: string[] = [];
  for (const [band] of model.bands) {
    for (const electrode of model.electrodes) {
      names.push(`psd.${band}.${electrode}`);
    }
  }
  return names;
}

export function validateDemographics(d: DemographicsInput): string[] {
  const problems: string[] = [];
  const age = Number(d.age);
  if (d.age.trim() === "" || !Number.isFinite(age) || age <= 0 || age > 120) {
    problems.push("age must be in (0, 120]");
  }
  if (d.sex !== "female" && d.sex !== "male") {
    problems.push("sex must be female or male");
  }
  if (d.education.trim() !== "") {
    const education = Number(d.education);
    if (!Number.isFinite(education) || education < 0) {
      problems.push("education must be a non-negative number of years");
    }
  }
  if (d.iq.trim() !== "") {
    const iq = Number(d.iq);
    if (!Number.isFinite(iq) || iq <= 0 || iq > 250) {
      problems.push("iq must be in (0, 250]");
    }
  }
  return problems;
}

export function missingPsd(features: Record<string, number>, model: ModelInfo): string[] {
  return requiredPsdNames(model).filter((name) => !(name in features));
}

export function canSubmit(state: FormState, model: ModelInfo | null): boolean {
  if (!model) return false;
  return validateDemographics(state.demographics).length === 0 &&
    missingPsd(state.features, model).length === 0;
}

/** Parse pasted `name = value` / `name,value` lines or a JSON object. */
export function parseNamedValues(text: string): Record<string, number> {
  const trimmed = text.trim();
  if (!trimmed) return {};
  if (trimmed.startsWith("{")) {
    const doc = JSON.parse(trimmed) as Record<string, unknown>;
    const out: Record<string, number> = {};
    for (const [key, value] of Object.entries(doc)) {
      const num = Number(value);
      if (!Number.isFinite(num)) throw new Error(`feature ${key} is not a finite number`);
      out[key] = num;
    }
    return out;
  }
  const out: Record<string, number> = {};
  for (const rawLine of trimmed.split(/\r?\n/)) {
    const line = rawLine.trim();
    if (!line || line.startsWith("#")) continue;
    const match = line.match(/^([^=,\s]+)\s*[=,]\s*(.+)$/);
    if (!match) throw new Error(`cannot parse line: ${line}`);
    const num = Number(match[2]);
    if (!Number.isFinite(num)) throw new Error(`feature ${match[1]} is not a finite number`);
    out[match[1]] = num;
  }
  return out;
}

/**
 * Parse one row of an uploaded feature CSV into named values (and the
 * demographics it carries, if any). rowId picks a row by its id column;
 * otherwise the first data row is used.
 */
export function parseCsvRow(text: string, rowId?: string): {
  features: Record<string, number>;
  demographics: Partial<DemographicsInput>;
  label?: string;
} {
  const lines = text.split(/\r?\n/).filter((l) => l.trim() !== "");
  if (lines.length < 2) throw new Error("CSV needs a header row and at least one data row");
  const header = lines[0].split(",").map((h) => h.trim());
  const idCol = header.indexOf("id");
  let row: string[] | null = null;
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    if (rowId === undefined || (idCol >= 0 && cells[idCol]?.trim() === rowId)) {
      row = cells;
      break;
    }
  }
  if (!row) throw new Error(`no row with id ${rowId}`);
  const features: Record<string, number> = {};
  const demographics: Partial<DemographicsInput> = {};
  let label: string | undefined;
  header.forEach((name, i) => {
    const cell = (row![i] ?? "").trim();
    if (cell === "") return;
    if (name.startsWith("psd.") || name.startsWith("coh.")) {
      const num = Number(cell);
      if (Number.isFinite(num)) features[name] = num;
    } else if (name === "age" || name === "education" || name === "iq") {
      demographics[name] = cell;
    } else if (name === "sex") {
      const sex = cell.toLowerCase();
      demographics.sex = sex === "f" ? "female" : sex === "m" ? "male" : sex;
    } else if (name === "main.disorder") {
      label = cell;
    }
  });
  return { features, demographics, label };
}

/**
 * Seed the form from served summary exemplars: modal age/IQ bins, the
 * class's majority sex, and per-electrode PSD values taken from the served
 * band-by-region means. Only served fields are used.
 */
export function sampleFromSummary(
  summary: DatasetSummary,
  model: ModelInfo,
  className: string,
): FormState {
  const modalMid = (hist: { edges: number[]; counts: number[] }): string => {
    let best = 0;
    for (let i = 1; i < hist.counts.length; i++) {
      if (hist.counts[i] > hist.counts[best]) best = i;
    }
    return String((hist.edges[best] + hist.edges[best + 1]) / 2);
  };
  const sexCounts = summary.sex_by_class[className] ?? { female: 0, male: 0 };
  const regionOf = (electrode: string): string => {
    if (electrode.startsWith("Fp") || electrode.startsWith("F")) return "Frontal";
    if (electrode.startsWith("C")) return "Central";
    if (electrode.startsWith("T")) return "Temporal";
    if (electrode.startsWith("P")) return "Parietal";
    return "Occipital";
  };
  const features: Record<string, number> = {};
  for (const [band] of model.bands) {
    const perRegion = summary.band_region_power[band] ?? {};
    for (const electrode of model.electrodes) {
      features[`psd.${band}.${electrode}`] = perRegion[regionOf(electrode)] ?? 0;
    }
  }
  return {
    demographics: {
      age: modalMid(summary.age_hist),
      sex: sexCounts.male > sexCounts.female ? "male" : "female",
      education: "",
      iq: modalMid(summary.iq_hist),
    },
    features,
    messages: [`seeded from dataset summary for ${className}`],
  };
}

export function toPredictRequest(state: FormState): PredictRequest {
  const d = state.demographics;
  return {
    demographics: {
      age: d.age.trim() === "" ? null : Number(d.age),
      sex: d.sex || null,
      education: d.education.trim() === "" ? null : Number(d.education),
      iq: d.iq.trim() === "" ? null : Number(d.iq),
    },
    features: state.features,
  };
}
