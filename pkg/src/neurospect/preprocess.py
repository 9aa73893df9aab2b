"""Preprocessing: outlier handling, imputation, label encoding, feature
scaling, class rebalancing (SMOTE / undersampling) and stratified splitting.

Column operations work on 1-D numpy arrays with NaN marking missing values.
Fit operations have a single owner; apply operations are pure.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Demographics, SubjectRecord


# ---------------------------------------------------------------------------
# Outliers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutlierPolicy:
    """How to flag and treat outlying values in a column.

    zscore flags |x - mean| > threshold * population std; iqr flags values
    outside [Q1 - k*IQR, Q3 + k*IQR] with quartiles from linear interpolation
    of order statistics. Flagged values are clipped to the fence or marked
    missing.
    """

    method: str = "zscore"
    threshold: float = 3.0
    k: float = 1.5
    action: str = "clip_to_fence"

    def __post_init__(self):
        if self.method not in ("zscore", "iqr"):
            raise ValueError(f"method must be 'zscore' or 'iqr', got {self.method!r}")
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.action not in ("clip_to_fence", "mark_missing"):
            raise ValueError(
                f"action must be 'clip_to_fence' or 'mark_missing', got {self.action!r}"
            )


def detect_outliers(values, policy: OutlierPolicy = OutlierPolicy()):
    """Flag and treat outliers in one numeric column.

    Returns (flags, treated) where flags marks outlying entries and treated
    is the column after clipping or masking. Missing entries are never
    flagged. Requires at least 2 observed values.
    """
    values = np.asarray(values, dtype=np.float64)
    observed = ~np.isnan(values)
    if observed.sum() < 2:
        raise ValueError("need at least 2 observed values to detect outliers")
    obs = values[observed]
    if policy.method == "zscore":
        mean = obs.mean()
        std = obs.std(ddof=0)
        if std == 0.0:
            lo, hi = -np.inf, np.inf
        else:
            lo = mean - policy.threshold * std
            hi = mean + policy.threshold * std
    else:
        q1, q3 = np.percentile(obs, [25.0, 75.0])  # linear interpolation
        iqr = q3 - q1
        lo = q1 - policy.k * iqr
        hi = q3 + policy.k * iqr
    flags = observed & ((values < lo) | (values > hi))
    treated = values.copy()
    if policy.action == "clip_to_fence":
        treated[flags] = np.clip(values[flags], lo, hi)
    else:
        treated[flags] = np.nan
    return flags, treated


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

def impute_missing(values, kind: str = "numeric"):
    """Fill missing entries: mean for numeric, most frequent for categorical.

    Categorical columns are sequences with None marking missing; ties on the
    mode break lexicographically.
    """
    if kind == "numeric":
        values = np.asarray(values, dtype=np.float64)
        missing = np.isnan(values)
        if missing.all():
            raise ValueError("cannot impute an all-missing column")
        out = values.copy()
        out[missing] = values[~missing].mean()
        return out
    if kind == "categorical":
        observed = [v for v in values if v is not None]
        if not observed:
            raise ValueError("cannot impute an all-missing column")
        counts = Counter(observed)
        top = max(counts.values())
        mode = min(v for v, c in counts.items() if c == top)
        return [mode if v is None else v for v in values]
    raise ValueError(f"kind must be 'numeric' or 'categorical', got {kind!r}")


# ---------------------------------------------------------------------------
# Label encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderMap:
    """Bijection between category labels and codes 0..K-1 in lexicographic order."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        if list(self.labels) != sorted(self.labels):
            raise ValueError("labels must be in lexicographic order")

    @classmethod
    def from_values(cls, values: Sequence[str]) -> "EncoderMap":
        return cls(tuple(sorted(set(values))))

    def __len__(self) -> int:
        return len(self.labels)

    def encode(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unseen label {label!r}; known: {list(self.labels)}") from None

    def decode(self, code: int) -> str:
        if not (0 <= code < len(self.labels)):
            raise ValueError(f"code {code} out of range 0..{len(self.labels) - 1}")
        return self.labels[code]


def encode_labels(values: Sequence[str]) -> tuple[np.ndarray, EncoderMap]:
    """Encode categories as integer codes plus the fitted bijection."""
    enc = EncoderMap.from_values(values)
    return np.array([enc.encode(v) for v in values], dtype=np.int64), enc


# ---------------------------------------------------------------------------
# Feature scaling
# ---------------------------------------------------------------------------

@dataclass
class ScalerParams:
    """Per-feature scaling statistics learned from the training split.

    minmax maps train min -> 0 and max -> 1; zscore maps train mean -> 0 and
    sample std -> 1. Constant features pass through as 0 (with a warning).
    Values outside the training range are not clipped.
    """

    mode: str = "minmax"
    center: np.ndarray | None = None
    spread: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("minmax", "zscore"):
            raise ValueError(f"mode must be 'minmax' or 'zscore', got {self.mode!r}")

    @property
    def fitted(self) -> bool:
        return self.center is not None

    def fit(self, train: np.ndarray) -> "ScalerParams":
        train = np.atleast_2d(np.asarray(train, dtype=np.float64))
        if self.mode == "minmax":
            self.center = train.min(axis=0)
            self.spread = train.max(axis=0) - self.center
        else:
            self.center = train.mean(axis=0)
            self.spread = train.std(axis=0, ddof=1) if train.shape[0] > 1 else np.zeros(train.shape[1])
        if np.any(self.spread == 0.0):
            warnings.warn(
                "constant feature(s) pass through as 0 after scaling",
                RuntimeWarning,
                stacklevel=2,
            )
        return self

    def transform(self, columns: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise ValueError("scaler not fitted; fit on the training split first")
        columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
        spread = np.where(self.spread > 0, self.spread, 1.0)
        out = (columns - self.center) / spread
        return np.where(self.spread > 0, out, 0.0)


def scale_features(train: np.ndarray, apply: np.ndarray, mode: str = "minmax"):
    """Fit on the training columns, scale the apply columns; returns (params, scaled)."""
    params = ScalerParams(mode=mode).fit(train)
    return params, params.transform(apply)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResamplePolicy:
    """Class rebalancing: smote(k), undersample, or none; counts equalized."""

    method: str = "smote"
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("smote", "undersample", "none"):
            raise ValueError(
                f"method must be 'smote', 'undersample' or 'none', got {self.method!r}"
            )
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def resample(X: np.ndarray, y: np.ndarray, policy: ResamplePolicy):
    """Equalize class counts by SMOTE interpolation or random undersampling.

    SMOTE synthesizes x = a + lam*(b - a) with lam uniform in [0,1] and b one
    of a's k nearest same-class neighbors (Euclidean); every synthetic point
    therefore lies componentwise between its endpoints. Deterministic for a
    fixed policy seed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValueError("X must be (n, d) with one label per row")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("resampling needs at least 2 classes")
    if policy.method == "none":
        return X, y
    rng = np.random.default_rng(policy.seed)

    if policy.method == "undersample":
        target = counts.min()
        keep: list[np.ndarray] = []
        for cls in classes:
            idx = np.flatnonzero(y == cls)
            if len(idx) > target:
                idx = np.sort(rng.choice(idx, size=target, replace=False))
            keep.append(idx)
        sel = np.sort(np.concatenate(keep))
        return X[sel], y[sel]

    target = counts.max()
    new_rows, new_labels = [], []
    for cls, count in zip(classes, counts):
        need = int(target - count)
        if need == 0:
            continue
        if count <= policy.k:
            raise ValueError(
                f"SMOTE with k={policy.k} needs more than {policy.k} samples in "
                f"class {cls!r}, got {count}"
            )
        pts = X[y == cls]
        # pairwise distances within the minority class
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        neighbors = np.argsort(dist, axis=1)[:, : policy.k]
        for _ in range(need):
            a = int(rng.integers(len(pts)))
            b = int(neighbors[a, int(rng.integers(policy.k))])
            lam = rng.uniform()
            new_rows.append(pts[a] + lam * (pts[b] - pts[a]))
            new_labels.append(cls)
    if not new_rows:
        return X, y
    X_out = np.vstack([X, np.asarray(new_rows)])
    y_out = np.concatenate([y, np.asarray(new_labels, dtype=y.dtype)])
    return X_out, y_out


# ---------------------------------------------------------------------------
# Stratified split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def stratified_split(labels: Sequence, spec: SplitSpec = SplitSpec()):
    """Deterministic stratified partition; returns (train_idx, test_idx).

    Per-class train counts are floor(n_c * fraction); the remainder up to
    round(N * fraction) goes to classes by largest fractional part, ties in
    label order. Every class needs at least 2 members.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    classes, counts = np.unique(labels, return_counts=True)
    tiny = classes[counts < 2]
    if len(tiny):
        raise ValueError(f"every class needs >= 2 members; offending: {list(tiny)}")

    target_total = int(math.floor(n * spec.train_fraction + 0.5))
    exact = counts * spec.train_fraction
    base = np.floor(exact).astype(int)
    remainder = target_total - int(base.sum())
    order = sorted(
        range(len(classes)), key=lambda i: (-(exact[i] - base[i]), str(classes[i]))
    )
    take = base.copy()
    for i in order:
        if remainder <= 0:
            break
        if take[i] + 1 <= counts[i]:
            take[i] += 1
            remainder -= 1

    rng = np.random.default_rng(spec.seed)
    train_parts, test_parts = [], []
    for i, cls in enumerate(classes):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(len(idx))
        train_parts.append(idx[perm[: take[i]]])
        test_parts.append(idx[perm[take[i]:]])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return train_idx, test_idx


# ---------------------------------------------------------------------------
# Record-level cleaning driven by a config document
# ---------------------------------------------------------------------------

@dataclass
class PreprocessConfig:
    """Cleaning and pipeline options parsed from the preprocess JSON document."""

    outliers: OutlierPolicy = field(default_factory=OutlierPolicy)
    outliers_apply_to: str = "demographics"     # or "all" to include EEG columns
    impute: bool = True
    scale_mode: str = "minmax"
    resample: ResamplePolicy = field(default_factory=ResamplePolicy)
    split: SplitSpec = field(default_factory=SplitSpec)

    def __post_init__(self):
        if self.outliers_apply_to not in ("demographics", "all"):
            raise ValueError(
                f"outliers apply_to must be 'demographics' or 'all', got {self.outliers_apply_to!r}"
            )
        if self.scale_mode not in ("minmax", "zscore"):
            raise ValueError(f"scale mode must be 'minmax' or 'zscore', got {self.scale_mode!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessConfig":
        out = doc.get("outliers", {})
        res = doc.get("resample", {})
        spl = doc.get("split", {})
        return cls(
            outliers=OutlierPolicy(
                method=out.get("method", "zscore"),
                threshold=float(out.get("threshold", 3.0)),
                k=float(out.get("k", 1.5)),
                action=out.get("action", "clip_to_fence"),
            ),
            outliers_apply_to=out.get("apply_to", "demographics"),
            impute=bool(doc.get("impute", {}).get("enabled", True)),
            scale_mode=doc.get("scale", {}).get("mode", "minmax"),
            resample=ResamplePolicy(
                method=res.get("method", "smote"),
                k=int(res.get("k", 5)),
                seed=int(res.get("seed", 0)),
            ),
            split=SplitSpec(
                train_fraction=float(spl.get("train_fraction", 0.8)),
                stratified=bool(spl.get("stratified", True)),
                seed=int(spl.get("seed", 0)),
            ),
        )

    @classmethod
    def from_json(cls, path) -> "PreprocessConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def clean_records(records: Sequence[SubjectRecord], cfg: PreprocessConfig) -> list[SubjectRecord]:
    """Outlier-treat and impute columns across records; returns new records.

    Outlier handling applies to the numeric demographic columns by default
    (age, education, iq) and optionally to every EEG feature column. Missing
    values are imputed with the column mean (mode for sex).
    """
    if not records:
        raise ValueError("no records to clean")

    def nan_if_none(v):
        return math.nan if v is None else float(v)

    demo_numeric = {"age": [], "education": [], "iq": []}
    for r in records:
        demo_numeric["age"].append(nan_if_none(r.demographics.age))
        demo_numeric["education"].append(nan_if_none(r.demographics.education))
        demo_numeric["iq"].append(nan_if_none(r.demographics.iq))

    treated: dict[str, np.ndarray] = {}
    for name, col in demo_numeric.items():
        col = np.asarray(col)
        if np.isnan(col).all():
            treated[name] = col
            continue
        if (~np.isnan(col)).sum() >= 2:
            _, col = detect_outliers(col, cfg.outliers)
        if cfg.impute and np.isnan(col).any():
            col = impute_missing(col, "numeric")
        treated[name] = col

    sexes = [r.demographics.sex for r in records]
    if cfg.impute and any(s is None for s in sexes) and any(s is not None for s in sexes):
        sexes = impute_missing(sexes, "categorical")

    n_bands = records[0].psd.shape[0]
    psd = np.stack([r.psd for r in records])
    coh = None
    if all(r.coherence is not None for r in records):
        coh = np.stack([r.coherence for r in records])

    def treat_matrix(m: np.ndarray) -> np.ndarray:
        flat = m.reshape(len(records), -1)
        cols = []
        for j in range(flat.shape[1]):
            col = flat[:, j]
            if cfg.outliers_apply_to == "all" and (~np.isnan(col)).sum() >= 2:
                _, col = detect_outliers(col, cfg.outliers)
            if cfg.impute and np.isnan(col).any() and not np.isnan(col).all():
                col = impute_missing(col, "numeric")
            cols.append(col)
        return np.column_stack(cols).reshape(m.shape)

    psd = treat_matrix(psd)
    if coh is not None:
        coh = treat_matrix(coh)

    out = []
    for i, r in enumerate(records):
        def val(name):
            v = treated[name][i]
            return None if math.isnan(v) else float(v)

        demo = Demographics(
            age=val("age"), sex=sexes[i], education=val("education"), iq=val("iq")
        )
        out.append(
            SubjectRecord(
                r.id,
                demo,
                psd[i],
                coh[i] if coh is not None else r.coherence,
                r.label,
            )
        )
    return out
