import { describe, expect, it } from "vitest";

import {
  canSubmit,
  emptyForm,
  missingPsd,
  parseCsvRow,
  parseNamedValues,
  requiredPsdNames,
  sampleFromSummary,
  validateDemographics,
} from "../src/form.js";
import type { DatasetSummary, ModelInfo } from "../src/types.js";

const model: ModelInfo = {
  model_version: "1:test",
  created: "2026-01-01",
  schema_fingerprint: "abc",
  mode: "full",
  include_coherence: true,
  labels: ["Healthy control", "Mood disorder"],
  bands: [["alpha", 8, 12], ["beta", 12, 25]],
  electrodes: ["Fp1", "O2"],
};

const summary: DatasetSummary = {
  n_records: 10,
  has_coherence: true,
  class_counts: { "Healthy control": 6, "Mood disorder": 4 },
  age_hist: { edges: [0, 10, 20, 30], counts: [0, 7, 3] },
  iq_hist: { edges: [0, 50, 100, 150], counts: [1, 2, 7] },
  sex_by_class: {
    "Healthy control": { female: 2, male: 4 },
    "Mood disorder": { female: 3, male: 1 },
  },
  band_region_power: {
    alpha: { Frontal: 2.5, Central: 1.0, Temporal: 1.1, Parietal: 0.9, Occipital: 3.5 },
    beta: { Frontal: 0.5, Central: 0.6, Temporal: 0.7, Parietal: 0.8, Occipital: 0.9 },
  },
  bands: ["alpha", "beta"],
  regions: ["Frontal", "Central", "Temporal", "Parietal", "Occipital"],
};

describe("demographics validation", () => {
  it("accepts a complete valid set", () => {
    expect(validateDemographics({ age: "42", sex: "female", education: "12", iq: "105" }))
      .toEqual([]);
  });

  it("requires age and sex", () => {
    const problems = validateDemographics({ age: "", sex: "", education: "", iq: "" });
    expect(problems.join(" ")).toMatch(/age/);
    expect(problems.join(" ")).toMatch(/sex/);
  });

  it("bounds age and iq", () => {
    expect(validateDemographics({ age: "130", sex: "male", education: "", iq: "" }))
      .toHaveLength(1);
    expect(validateDemographics({ age: "40", sex: "male", education: "", iq: "300" }))
      .toHaveLength(1);
  });

  it("education and iq stay optional", () => {
    expect(validateDemographics({ age: "30", sex: "male", education: "", iq: "" }))
      .toEqual([]);
  });
});

describe("feature sources", () => {
  it("derives the required PSD names from the served model", () => {
    expect(requiredPsdNames(model)).toEqual([
      "psd.alpha.Fp1", "psd.alpha.O2", "psd.beta.Fp1", "psd.beta.O2",
    ]);
  });

  it("parses name = value lines", () => {
    const parsed = parseNamedValues("psd.alpha.Fp1 = 1.5\npsd.alpha.O2, 2.5\n# comment\n");
    expect(parsed).toEqual({ "psd.alpha.Fp1": 1.5, "psd.alpha.O2": 2.5 });
  });

  it("parses a JSON object", () => {
    expect(parseNamedValues('{"psd.alpha.Fp1": 3}')).toEqual({ "psd.alpha.Fp1": 3 });
  });

  it("rejects non-numeric values", () => {
    expect(() => parseNamedValues("psd.alpha.Fp1 = wat")).toThrow(/finite/);
  });

  it("parses a CSV row into features and demographics", () => {
    const text = [
      "id,age,sex,iq,main.disorder,psd.alpha.Fp1,psd.alpha.O2,coh.alpha.Fp1.O2,ignored",
      "s1,44,F,101,Mood disorder,1.5,2.5,0.4,zzz",
      "s2,30,M,90,Healthy control,9.9,8.8,0.1,zzz",
    ].join("\n");
    const first = parseCsvRow(text);
    expect(first.features["psd.alpha.Fp1"]).toBe(1.5);
    expect(first.features["coh.alpha.Fp1.O2"]).toBe(0.4);
    expect(first.demographics.age).toBe("44");
    expect(first.demographics.sex).toBe("female");
    expect(first.label).toBe("Mood disorder");
    const second = parseCsvRow(text, "s2");
    expect(second.features["psd.alpha.Fp1"]).toBe(9.9);
  });

  it("reports missing PSD features against the model", () => {
    expect(missingPsd({ "psd.alpha.Fp1": 1 }, model)).toEqual([
      "psd.alpha.O2", "psd.beta.Fp1", "psd.beta.O2",
    ]);
  });
});

describe("sample picker", () => {
  it("seeds demographics and PSD from served summary fields only", () => {
    const state = sampleFromSummary(summary, model, "Healthy control");
    expect(state.demographics.age).toBe("15");   // modal age bin [10, 20)
    expect(state.demographics.iq).toBe("125");   // modal iq bin [100, 150)
    expect(state.demographics.sex).toBe("male"); // 4 male vs 2 female
    expect(state.features["psd.alpha.Fp1"]).toBe(2.5);  // Frontal alpha mean
    expect(state.features["psd.alpha.O2"]).toBe(3.5);   // Occipital alpha mean
    expect(missingPsd(state.features, model)).toEqual([]);
  });

  it("yields a submittable form", () => {
    const state = sampleFromSummary(summary, model, "Mood disorder");
    expect(canSubmit(state, model)).toBe(true);
    expect(canSubmit(emptyForm(), model)).toBe(false);
    expect(canSubmit(state, null)).toBe(false);
  });
});
