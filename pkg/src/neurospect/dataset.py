"""Canonical multimodal schema: demographics + EEG features + disorder label.

Handles CSV ingestion of the precomputed feature tables, the canonical
feature naming/ordering, electrode-region mapping, dataset summaries, and
assembly of the (bands x 19 x 19) model input tensors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .montage import (
    ELECTRODES,
    ELECTRODE_PAIRS,
    N_ELECTRODES,
    N_PAIRS,
    REGIONS,
    REGION_ELECTRODES,
    electrode_region,
)
from .spectral import BANDS_SIX, FrequencyBand, validate_bands

DISORDER_LABELS: tuple[str, ...] = (
    "Addictive disorder",
    "Anxiety disorder",
    "Healthy control",
    "Mood disorder",
    "Obsessive-compulsive disorder",
    "Schizophrenia",
    "Trauma and stress related disorder",
)

LABEL_COLUMN = "main.disorder"
ID_COLUMN = "id"
DEMOGRAPHIC_COLUMNS = ("age", "sex", "education", "iq")
SEX_VALUES = ("female", "male")

# floor applied before log10 so zero band powers stay finite
LOG_POWER_FLOOR = 1e-12

MISSING_TOKENS = frozenset({"", "na", "nan", "n/a", "null", "none"})


class SchemaError(ValueError):
    """Input table does not match the expected schema."""


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class Demographics:
    """Subject demographics; any field may be missing (None)."""

    age: float | None = None
    sex: str | None = None
    education: float | None = None
    iq: float | None = None

    def __post_init__(self):
        if self.age is not None and not (0.0 < self.age <= 120.0):
            raise ValueError(f"age out of range (0, 120]: {self.age}")
        if self.sex is not None and self.sex not in SEX_VALUES:
            raise ValueError(f"sex must be one of {SEX_VALUES}, got {self.sex!r}")
        if self.education is not None and self.education < 0.0:
            raise ValueError(f"education must be non-negative, got {self.education}")
        if self.iq is not None and not (0.0 < self.iq <= 250.0):
            raise ValueError(f"iq out of range (0, 250]: {self.iq}")


@dataclass
class SubjectRecord:
    """One subject row: demographics, band powers, optional coherence, label.

    psd has shape (n_bands, 19); coherence, when present, (n_bands, 171) in
    canonical pair order. Missing feature values are NaN until imputation.
    """

    id: str
    demographics: Demographics
    psd: np.ndarray
    coherence: np.ndarray | None
    label: str

    def __post_init__(self):
        self.psd = np.asarray(self.psd, dtype=np.float64)
        if self.psd.ndim != 2 or self.psd.shape[1] != N_ELECTRODES:
            raise ValueError(f"psd must be (n_bands, {N_ELECTRODES}), got {self.psd.shape}")
        if self.coherence is not None:
            self.coherence = np.asarray(self.coherence, dtype=np.float64)
            if self.coherence.shape != (self.psd.shape[0], N_PAIRS):
                raise ValueError(
                    f"coherence must be ({self.psd.shape[0]}, {N_PAIRS}), "
                    f"got {self.coherence.shape}"
                )
        if self.label not in DISORDER_LABELS:
            raise ValueError(f"unknown disorder label {self.label!r}")


# ---------------------------------------------------------------------------
# Feature schema
# ---------------------------------------------------------------------------

class FeatureSchema:
    """Canonical EEG feature names and their vector/tensor layout.

    Names take the form ``psd.<band>.<electrode>`` and
    ``coh.<band>.<e1>.<e2>`` with e1 before e2 in montage order. The vector
    layout everywhere downstream is the lexicographic sort of these names.
    """

    def __init__(self, bands: Sequence[FrequencyBand] = BANDS_SIX, include_coherence: bool = True):
        self.bands = validate_bands(bands)
        self.electrodes = ELECTRODES
        self.include_coherence = bool(include_coherence)
        names: list[str] = []
        for b in self.bands:
            for e in self.electrodes:
                names.append(f"psd.{b.name}.{e}")
        if self.include_coherence:
            for b in self.bands:
                for i, j in ELECTRODE_PAIRS:
                    names.append(f"coh.{b.name}.{self.electrodes[i]}.{self.electrodes[j]}")
        self.feature_names: tuple[str, ...] = tuple(sorted(names))
        self._pos = {n: k for k, n in enumerate(self.feature_names)}

        n_bands = len(self.bands)
        band_idx = {b.name: i for i, b in enumerate(self.bands)}
        elec_idx = {e: i for i, e in enumerate(self.electrodes)}
        pair_idx = {
            (self.electrodes[i], self.electrodes[j]): k
            for k, (i, j) in enumerate(ELECTRODE_PAIRS)
        }

        # vector position -> (band, electrode/pair) index arrays for fast scatter
        psd_pos, psd_b, psd_e = [], [], []
        coh_pos, coh_b, coh_k, coh_i, coh_j = [], [], [], [], []
        for name, k in self._pos.items():
            parts = name.split(".")
            if parts[0] == "psd":
                psd_pos.append(k)
                psd_b.append(band_idx[parts[1]])
                psd_e.append(elec_idx[parts[2]])
            else:
                coh_pos.append(k)
                coh_b.append(band_idx[parts[1]])
                coh_k.append(pair_idx[(parts[2], parts[3])])
                coh_i.append(elec_idx[parts[2]])
                coh_j.append(elec_idx[parts[3]])
        self.psd_positions = np.asarray(psd_pos, dtype=np.intp)
        self.psd_band = np.asarray(psd_b, dtype=np.intp)
        self.psd_elec = np.asarray(psd_e, dtype=np.intp)
        self.coh_positions = np.asarray(coh_pos, dtype=np.intp)
        self.coh_band = np.asarray(coh_b, dtype=np.intp)
        self.coh_pair = np.asarray(coh_k, dtype=np.intp)
        self.coh_i = np.asarray(coh_i, dtype=np.intp)
        self.coh_j = np.asarray(coh_j, dtype=np.intp)
        assert len(self.psd_positions) == n_bands * N_ELECTRODES

    @property
    def mode(self) -> str:
        return "full" if self.include_coherence else "psd_only"

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def position(self, name: str) -> int:
        return self._pos[name]

    def fingerprint(self) -> str:
        doc = {
            "mode": self.mode,
            "bands": [(b.name, b.lo, b.hi) for b in self.bands],
            "electrodes": list(self.electrodes),
            "features": list(self.feature_names),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def full(cls, bands: Sequence[FrequencyBand] = BANDS_SIX) -> "FeatureSchema":
        return cls(bands, include_coherence=True)

    @classmethod
    def psd_only(cls, bands: Sequence[FrequencyBand] = BANDS_SIX) -> "FeatureSchema":
        return cls(bands, include_coherence=False)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_adapter_map(path) -> dict[str, str]:
    """Read an ``external_name = canonical_name`` map, one entry per line."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'external = canonical'")
            ext, canon = (part.strip() for part in line.split("=", 1))
            if not ext or not canon:
                raise SchemaError(f"{path}:{lineno}: empty name in adapter entry")
            mapping[ext] = canon
    return mapping


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if text.lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise SchemaError(
            f"row {row}: unparseable numeric value {cell!r} in column {column!r}"
        ) from None


def _parse_sex(cell: str, row: int) -> str | None:
    text = cell.strip().lower()
    if text in MISSING_TOKENS:
        return None
    if text in ("m", "male"):
        return "male"
    if text in ("f", "female"):
        return "female"
    raise SchemaError(f"row {row}: unparseable sex value {cell!r}")


def parse_feature_table(
    path,
    mode: str = "full",
    adapter: Mapping[str, str] | None = None,
    bands: Sequence[FrequencyBand] = BANDS_SIX,
) -> tuple[list[SubjectRecord], FeatureSchema]:
    """Read a feature CSV into subject records.

    mode "full" expects PSD + coherence columns, "psd_only" just PSD.
    External column names can be translated through an adapter map; columns
    not in the schema are ignored by name. Missing cells stay missing (NaN)
    for the preprocessing stage. Demographic columns are optional; the label
    column is required.
    """
    if mode not in ("full", "psd_only"):
        raise ValueError(f"mode must be 'full' or 'psd_only', got {mode!r}")
    schema = FeatureSchema(bands, include_coherence=(mode == "full"))
    adapter = dict(adapter or {})

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        header = [adapter.get(h.strip(), h.strip()) for h in header]
        col_of = {}
        for i, h in enumerate(header):
            col_of.setdefault(h, i)

        if LABEL_COLUMN not in col_of:
            raise SchemaError(f"{path}: missing required column {LABEL_COLUMN!r}")
        missing = [n for n in schema.feature_names if n not in col_of]
        if missing:
            raise SchemaError(
                f"{path}: {len(missing)} of {schema.n_features} {mode} feature columns "
                f"missing (first: {missing[0]!r})"
            )

        label_col = col_of[LABEL_COLUMN]
        id_col = col_of.get(ID_COLUMN)
        demo_cols = {name: col_of.get(name) for name in DEMOGRAPHIC_COLUMNS}
        psd_cols = [col_of[f"psd.{b.name}.{e}"] for b in schema.bands for e in ELECTRODES]
        coh_cols = None
        if mode == "full":
            coh_cols = [
                col_of[f"coh.{b.name}.{ELECTRODES[i]}.{ELECTRODES[j]}"]
                for b in schema.bands
                for i, j in ELECTRODE_PAIRS
            ]

        records: list[SubjectRecord] = []
        n_bands = schema.n_bands
        for row_idx, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: row {row_idx} has {len(row)} cells, header has {len(header)}"
                )
            label = row[label_col].strip()
            if label not in DISORDER_LABELS:
                raise SchemaError(
                    f"row {row_idx}: unknown disorder label {label!r} in {LABEL_COLUMN!r}"
                )
            rid = row[id_col].strip() if id_col is not None and row[id_col].strip() else f"row-{row_idx}"

            def dget(name, parser=_parse_float):
                col = demo_cols[name]
                if col is None:
                    return None
                value = parser(row[col], row_idx, name) if parser is _parse_float else parser(row[col], row_idx)
                if isinstance(value, float) and math.isnan(value):
                    return None
                return value

            try:
                demo = Demographics(
                    age=dget("age"),
                    sex=dget("sex", _parse_sex),
                    education=dget("education"),
                    iq=dget("iq"),
                )
            except ValueError as exc:
                raise SchemaError(f"row {row_idx}: {exc}") from None
            psd = np.array(
                [_parse_float(row[c], row_idx, header[c]) for c in psd_cols]
            ).reshape(n_bands, N_ELECTRODES)
            coherence = None
            if coh_cols is not None:
                coherence = np.array(
                    [_parse_float(row[c], row_idx, header[c]) for c in coh_cols]
                ).reshape(n_bands, N_PAIRS)
            records.append(SubjectRecord(rid, demo, psd, coherence, label))

    return records, schema


def write_feature_table(records: Sequence[SubjectRecord], path, schema: FeatureSchema) -> None:
    """Write records as a canonical CSV (the round-trip inverse of parse)."""
    if not records:
        raise ValueError("no records to write")

    def fmt(x: float | None) -> str:
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return ""
        return repr(float(x))

    header = [ID_COLUMN, *DEMOGRAPHIC_COLUMNS, LABEL_COLUMN, *schema.feature_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            vec = record_feature_vector(r, schema)
            row = [
                r.id,
                fmt(r.demographics.age),
                r.demographics.sex or "",
                fmt(r.demographics.education),
                fmt(r.demographics.iq),
                r.label,
            ]
            row.extend(fmt(v) for v in vec)
            writer.writerow(row)


def parse_meta_table(path) -> dict[str, tuple[Demographics, str]]:
    """Read a subject metadata CSV (id, demographics, label) keyed by id."""
    out: dict[str, tuple[Demographics, str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty metadata file") from None
        col_of = {h: i for i, h in enumerate(header)}
        for required in (ID_COLUMN, LABEL_COLUMN):
            if required not in col_of:
                raise SchemaError(f"{path}: missing required column {required!r}")
        for row_idx, row in enumerate(reader):
            if not row:
                continue
            rid = row[col_of[ID_COLUMN]].strip()
            label = row[col_of[LABEL_COLUMN]].strip()
            if label not in DISORDER_LABELS:
                raise SchemaError(f"row {row_idx}: unknown disorder label {label!r}")

            def num(name):
                if name not in col_of:
                    return None
                v = _parse_float(row[col_of[name]], row_idx, name)
                return None if math.isnan(v) else v

            sex = _parse_sex(row[col_of["sex"]], row_idx) if "sex" in col_of else None
            try:
                demo = Demographics(age=num("age"), sex=sex,
                                    education=num("education"), iq=num("iq"))
            except ValueError as exc:
                raise SchemaError(f"row {row_idx}: {exc}") from None
            out[rid] = (demo, label)
    if not out:
        raise SchemaError(f"{path}: no metadata rows")
    return out


def record_feature_vector(record: SubjectRecord, schema: FeatureSchema) -> np.ndarray:
    """Lay out one record's raw EEG features in canonical (sorted-name) order."""
    vec = np.empty(schema.n_features)
    vec[schema.psd_positions] = record.psd[schema.psd_band, schema.psd_elec]
    if schema.include_coherence:
        if record.coherence is None:
            raise ValueError(f"record {record.id!r} lacks coherence features")
        vec[schema.coh_positions] = record.coherence[schema.coh_band, schema.coh_pair]
    return vec


# ---------------------------------------------------------------------------
# Tensor assembly
# ---------------------------------------------------------------------------

class TensorScaler:
    """Fitted transforms for tensor assembly.

    Diagonal band powers go through log10 then per-feature standardization
    (sample std); demographics are imputed with training means and min-max
    scaled to [0, 1] (no clipping outside the training range). Fit on the
    training split only.
    """

    def __init__(self):
        self.fitted = False
        self.psd_log_mean: np.ndarray | None = None   # (n_bands, 19)
        self.psd_log_std: np.ndarray | None = None
        self.demo_fill: np.ndarray | None = None      # (4,) age, sex, education, iq
        self.demo_lo: np.ndarray | None = None
        self.demo_span: np.ndarray | None = None

    @staticmethod
    def _demo_raw(d: Demographics) -> np.ndarray:
        sex = math.nan if d.sex is None else float(SEX_VALUES.index(d.sex))
        return np.array([
            math.nan if d.age is None else d.age,
            sex,
            math.nan if d.education is None else d.education,
            math.nan if d.iq is None else d.iq,
        ])

    def fit(self, records: Sequence[SubjectRecord]) -> "TensorScaler":
        if not records:
            raise ValueError("cannot fit scaler on an empty record list")
        logs = np.log10(np.maximum(np.stack([r.psd for r in records]), LOG_POWER_FLOOR))
        self.psd_log_mean = logs.mean(axis=0)
        std = logs.std(axis=0, ddof=1) if len(records) > 1 else np.zeros_like(self.psd_log_mean)
        self.psd_log_std = std
        demo = np.stack([self._demo_raw(r.demographics) for r in records])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fill = np.nanmean(demo, axis=0)
        fill = np.where(np.isfinite(fill), fill, 0.0)
        self.demo_fill = fill
        filled = np.where(np.isnan(demo), fill[None, :], demo)
        self.demo_lo = filled.min(axis=0)
        self.demo_span = filled.max(axis=0) - self.demo_lo
        self.fitted = True
        return self

    def _require_fitted(self):
        if not self.fitted:
            raise ValueError("scaler not fitted; fit on the training split first")

    def scale_psd(self, psd: np.ndarray) -> np.ndarray:
        """Standardize log10 band powers. psd may be (n_bands, 19) or stacked (N, n_bands, 19)."""
        self._require_fitted()
        logs = np.log10(np.maximum(psd, LOG_POWER_FLOOR))
        out = logs - self.psd_log_mean
        nz = self.psd_log_std > 0
        out = np.where(nz, out / np.where(nz, self.psd_log_std, 1.0), 0.0)
        return out

    def scale_demographics(self, d: Demographics) -> np.ndarray:
        self._require_fitted()
        raw = self._demo_raw(d)
        filled = np.where(np.isnan(raw), self.demo_fill, raw)
        span = np.where(self.demo_span > 0, self.demo_span, 1.0)
        return np.where(self.demo_span > 0, (filled - self.demo_lo) / span, 0.0)

    def to_dict(self) -> dict:
        self._require_fitted()
        return {
            "psd_log_mean": self.psd_log_mean.tolist(),
            "psd_log_std": self.psd_log_std.tolist(),
            "demo_fill": self.demo_fill.tolist(),
            "demo_lo": self.demo_lo.tolist(),
            "demo_span": self.demo_span.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TensorScaler":
        s = cls()
        s.psd_log_mean = np.asarray(doc["psd_log_mean"], dtype=np.float64)
        s.psd_log_std = np.asarray(doc["psd_log_std"], dtype=np.float64)
        s.demo_fill = np.asarray(doc["demo_fill"], dtype=np.float64)
        s.demo_lo = np.asarray(doc["demo_lo"], dtype=np.float64)
        s.demo_span = np.asarray(doc["demo_span"], dtype=np.float64)
        s.fitted = True
        return s


def assemble_tensor(
    record: SubjectRecord,
    include_coherence: bool,
    scaler: TensorScaler,
) -> tuple[np.ndarray, np.ndarray]:
    """Build one subject's model input: (n_bands, 19, 19) grid plus demographics.

    The diagonal carries scaled log band power; off-diagonal cells carry the
    band coherence of the channel pair, or exactly 0 when coherence is
    ablated. The grid is symmetric by construction.
    """
    n_bands = record.psd.shape[0]
    grid = np.zeros((n_bands, N_ELECTRODES, N_ELECTRODES))
    diag = np.arange(N_ELECTRODES)
    grid[:, diag, diag] = scaler.scale_psd(record.psd)
    if include_coherence:
        if record.coherence is None:
            raise ValueError(f"record {record.id!r} has no coherence features to include")
        i_idx = np.array([i for i, _ in ELECTRODE_PAIRS])
        j_idx = np.array([j for _, j in ELECTRODE_PAIRS])
        grid[:, i_idx, j_idx] = record.coherence
        grid[:, j_idx, i_idx] = record.coherence
    aux = scaler.scale_demographics(record.demographics)
    return grid, aux


# ---------------------------------------------------------------------------
# Dataset summary
# ---------------------------------------------------------------------------

AGE_HIST_EDGES = tuple(float(x) for x in range(0, 130, 10))
IQ_HIST_EDGES = tuple(float(x) for x in range(0, 275, 25))


def _hist(values: list[float], edges: Sequence[float]) -> dict:
    arr = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    counts, _ = np.histogram(arr, bins=np.asarray(edges))
    return {"edges": list(edges), "counts": [int(c) for c in counts]}


def summarize_dataset(
    records: Sequence[SubjectRecord],
    band_names: Sequence[str] | None = None,
) -> dict:
    """Machine-readable summary consumed by the report renderer and dashboard."""
    if not records:
        raise ValueError("cannot summarize an empty record list")
    labels = sorted({r.label for r in records})
    class_counts = {lab: 0 for lab in labels}
    sex_by_class = {lab: {"female": 0, "male": 0} for lab in labels}
    for r in records:
        class_counts[r.label] += 1
        if r.demographics.sex is not None:
            sex_by_class[r.label][r.demographics.sex] += 1

    n_bands = records[0].psd.shape[0]
    if band_names is not None:
        bands = list(band_names)
        if len(bands) != n_bands:
            raise ValueError(f"{len(bands)} band names for {n_bands} bands")
    elif n_bands == len(BANDS_SIX):
        bands = [b.name for b in BANDS_SIX]
    else:
        bands = [f"band{i}" for i in range(n_bands)]

    psd = np.stack([r.psd for r in records])               # (N, n_bands, 19)
    band_region_power: dict[str, dict[str, float]] = {}
    for b, band_name in enumerate(bands):
        per_region = {}
        for region in REGIONS:
            cols = [ELECTRODES.index(e) for e in REGION_ELECTRODES[region]]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                mean = float(np.nanmean(psd[:, b, cols]))
            per_region[region] = mean if math.isfinite(mean) else 0.0
        band_region_power[band_name] = per_region

    return {
        "n_records": len(records),
        "has_coherence": all(r.coherence is not None for r in records),
        "class_counts": class_counts,
        "age_hist": _hist([r.demographics.age for r in records], AGE_HIST_EDGES),
        "iq_hist": _hist([r.demographics.iq for r in records], IQ_HIST_EDGES),
        "sex_by_class": sex_by_class,
        "band_region_power": band_region_power,
        "bands": bands,
        "regions": list(REGIONS),
    }
