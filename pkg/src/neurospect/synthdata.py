"""Labeled synthetic subjects for verification, demos and fixtures.

Two generation paths: a physical one that synthesizes raw EEG and runs the
spectral estimators (slower, exercises the whole chain), and a direct one
that samples feature values from class-conditional distributions (fast, for
large schema fixtures).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import DISORDER_LABELS, Demographics, SubjectRecord
from .montage import ELECTRODES, N_PAIRS
from .spectral import (
    BANDS_SIX,
    FrequencyBand,
    SignalProfile,
    WelchConfig,
    band_powers,
    msc_coherence,
    synth_eeg,
    welch_psd,
)


@dataclass(frozen=True)
class ClassSpec:
    """Generator parameters for one disorder class."""

    label: str
    band_scales: Mapping[str, float]
    coherence: float
    age_range: tuple[float, float] = (18.0, 70.0)
    iq_mean: float = 100.0

    def __post_init__(self):
        if self.label not in DISORDER_LABELS:
            raise ValueError(f"unknown disorder label {self.label!r}")


def _demographics(rng: np.random.Generator, spec: ClassSpec) -> Demographics:
    age = float(rng.uniform(*spec.age_range))
    sex = "female" if rng.random() < 0.5 else "male"
    education = float(np.round(rng.uniform(8.0, 20.0)))
    iq = float(np.clip(rng.normal(spec.iq_mean, 15.0), 55.0, 160.0))
    return Demographics(age=age, sex=sex, education=education, iq=iq)


def jitter_channel_gains(
    window, bands: Sequence[FrequencyBand], sigma: float, rng: np.random.Generator
):
    """Apply an independent random power gain per (channel, band).

    Gains are 10**N(0, sigma) in power, drawn identically for every class.
    A per-band scalar on one channel cancels out of the magnitude-squared
    coherence, so pairwise coherence is untouched while per-channel band
    powers gain realistic spread. Without this, a shared source would leave
    a cross-channel power-dispersion signature that leaks coherence class
    structure into the PSD features.
    """
    from .spectral import SampledWindow

    if sigma <= 0:
        return window
    n = window.n_samples
    spectrum = np.fft.rfft(window.samples, axis=0)
    freqs = np.fft.rfftfreq(n, d=1.0 / window.fs)
    amp = np.ones((freqs.size, window.n_channels))
    for band in bands:
        mask = (freqs >= band.lo) & (freqs < band.hi)
        power_gain = np.power(10.0, rng.normal(0.0, sigma, size=window.n_channels))
        amp[mask, :] = np.sqrt(power_gain)[None, :]
    samples = np.fft.irfft(spectrum * amp, n, axis=0)
    return SampledWindow(samples, window.fs, window.electrodes)


def generate_subjects(
    specs: Sequence[ClassSpec],
    per_class: int,
    seed: int,
    fs: float = 128.0,
    duration: float = 16.0,
    cfg: WelchConfig = WelchConfig(),
    bands: Sequence[FrequencyBand] = BANDS_SIX,
    include_coherence: bool = True,
    channel_gain_sigma: float = 0.35,
) -> list[SubjectRecord]:
    """Physical path: synthesize raw EEG per subject and extract features."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    records = []
    bands = tuple(bands)
    for ci, spec in enumerate(specs):
        profile = SignalProfile(dict(spec.band_scales), spec.coherence, bands=bands)
        for si in range(per_class):
            sub_seed = np.random.SeedSequence([seed, ci, si])
            signal_seed, jitter_seed, demo_seed = sub_seed.spawn(3)
            window = synth_eeg(
                profile, duration, fs, seed=signal_seed, electrodes=ELECTRODES
            )
            window = jitter_channel_gains(
                window, bands, channel_gain_sigma, np.random.default_rng(jitter_seed)
            )
            psd = band_powers(welch_psd(window, cfg), bands).values
            coherence = (
                msc_coherence(window, cfg, bands).values if include_coherence else None
            )
            demo = _demographics(np.random.default_rng(demo_seed), spec)
            records.append(
                SubjectRecord(f"{spec.label.split()[0].lower()}-{si:04d}", demo, psd, coherence, spec.label)
            )
    return records


def generate_feature_records(
    specs: Sequence[ClassSpec],
    per_class: int,
    seed: int,
    bands: Sequence[FrequencyBand] = BANDS_SIX,
    include_coherence: bool = True,
) -> list[SubjectRecord]:
    """Direct path: sample feature values without signal synthesis."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    bands = tuple(bands)
    records = []
    for ci, spec in enumerate(specs):
        scales = np.array([spec.band_scales.get(b.name, 1.0) for b in bands])
        widths = np.array([b.hi - b.lo for b in bands])
        for si in range(per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ci, si]))
            log_jitter = rng.normal(0.0, 0.2, size=(len(bands), len(ELECTRODES)))
            psd = (scales * widths)[:, None] * np.power(10.0, log_jitter)
            coherence = None
            if include_coherence:
                coherence = np.clip(
                    rng.normal(spec.coherence, 0.05, size=(len(bands), N_PAIRS)), 0.0, 1.0
                )
            demo = _demographics(rng, spec)
            records.append(
                SubjectRecord(f"{spec.label.split()[0].lower()}-{si:04d}", demo, psd, coherence, spec.label)
            )
    return records


def coherence_contrast_specs() -> tuple[ClassSpec, ...]:
    """Three classes that differ only in coherence structure.

    Band power scales and demographic distributions are identical across
    classes, so every bit of class signal lives in the coherence features.
    """
    scales = {b.name: 1.0 for b in BANDS_SIX}
    return (
        ClassSpec("Healthy control", scales, coherence=0.05),
        ClassSpec("Mood disorder", scales, coherence=0.45),
        ClassSpec("Schizophrenia", scales, coherence=0.85),
    )


def band_contrast_specs() -> tuple[ClassSpec, ...]:
    """Two classes separable from band powers alone (no coherence signal)."""
    lo = {b.name: 1.0 for b in BANDS_SIX}
    hi = dict(lo)
    hi["alpha"] = 8.0
    hi["theta"] = 0.2
    return (
        ClassSpec("Healthy control", lo, coherence=0.2),
        ClassSpec("Mood disorder", hi, coherence=0.2),
    )


def seven_class_specs() -> tuple[ClassSpec, ...]:
    """One spec per disorder with distinct spectral and coherence signatures."""
    base = {b.name: 1.0 for b in BANDS_SIX}
    out = []
    coherences = (0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75)
    for k, label in enumerate(DISORDER_LABELS):
        scales = dict(base)
        boosted = BANDS_SIX[k % len(BANDS_SIX)].name
        scales[boosted] = 3.0 + k
        out.append(ClassSpec(label, scales, coherence=coherences[k]))
    return tuple(out)

SPEC_PRESETS = {
    "coherence-contrast": coherence_contrast_specs,
    "band-contrast": band_contrast_specs,
    "seven-class": seven_class_specs,
}


def specs_from_profile(doc: Mapping) -> tuple[ClassSpec, ...]:
    """Build class specs from a profile JSON document.

    Expected shape: {"classes": [{"label": ..., "band_scales": {...},
    "coherence": ...}, ...]}.
    """
    classes = doc.get("classes")
    if not classes:
        raise ValueError("profile document needs a non-empty 'classes' list")
    specs = []
    for entry in classes:
        specs.append(
            ClassSpec(
                label=entry["label"],
                band_scales=dict(entry.get("band_scales", {})),
                coherence=float(entry.get("coherence", 0.0)),
            )
        )
    return tuple(specs)
