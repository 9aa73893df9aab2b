"""Multichannel spectral estimation: Welch PSD, band powers, magnitude-squared
coherence, and a seeded synthetic-EEG generator with controllable coherence.

All estimators are pure functions of their inputs and safe to call from any
number of workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .montage import ELECTRODES, ELECTRODE_PAIRS


# ---------------------------------------------------------------------------
# Frequency bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyBand:
    """Half-open frequency interval [lo, hi) in Hz."""

    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise ValueError(
                f"band {self.name!r}: need 0 <= lo < hi, got [{self.lo}, {self.hi})"
            )


# Six-band split used by the full feature set. The five-band variant merges
# beta and high-beta for sources that only ship five bands.
BANDS_SIX: tuple[FrequencyBand, ...] = (
    FrequencyBand("delta", 0.5, 4.0),
    FrequencyBand("theta", 4.0, 8.0),
    FrequencyBand("alpha", 8.0, 12.0),
    FrequencyBand("beta", 12.0, 25.0),
    FrequencyBand("highbeta", 25.0, 30.0),
    FrequencyBand("gamma", 30.0, 45.0),
)

BANDS_FIVE: tuple[FrequencyBand, ...] = (
    FrequencyBand("delta", 0.5, 4.0),
    FrequencyBand("theta", 4.0, 8.0),
    FrequencyBand("alpha", 8.0, 12.0),
    FrequencyBand("beta", 12.0, 30.0),
    FrequencyBand("gamma", 30.0, 45.0),
)

BAND_SETS: dict[str, tuple[FrequencyBand, ...]] = {
    "six": BANDS_SIX,
    "five": BANDS_FIVE,
}


def band_set(name: str) -> tuple[FrequencyBand, ...]:
    try:
        return BAND_SETS[name]
    except KeyError:
        raise ValueError(f"unknown band set {name!r}; expected one of {sorted(BAND_SETS)}") from None


def validate_bands(bands: Sequence[FrequencyBand]) -> tuple[FrequencyBand, ...]:
    """Check that bands are uniquely named, sorted by lo and non-overlapping."""
    bands = tuple(bands)
    if not bands:
        raise ValueError("need at least one frequency band")
    names = [b.name for b in bands]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate band names in {names}")
    for prev, cur in zip(bands, bands[1:]):
        if cur.lo < prev.hi:
            raise ValueError(
                f"bands must be sorted and non-overlapping: {prev.name} [{prev.lo},{prev.hi}) "
                f"then {cur.name} [{cur.lo},{cur.hi})"
            )
    return bands


# ---------------------------------------------------------------------------
# Sampled windows and Welch configuration
# ---------------------------------------------------------------------------

class SampledWindow:
    """Raw multichannel segment, samples laid out (n_samples, n_channels) in microvolts."""

    __slots__ = ("samples", "fs", "electrodes")

    def __init__(self, samples, fs: float, electrodes: Sequence[str]):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (n_samples, n_channels), got shape {samples.shape}")
        if samples.shape[0] < 2:
            raise ValueError("need at least 2 samples per channel")
        if not (fs > 0):
            raise ValueError(f"sampling rate must be positive, got {fs}")
        electrodes = tuple(electrodes)
        if len(electrodes) != samples.shape[1]:
            raise ValueError(
                f"{len(electrodes)} electrode names for {samples.shape[1]} channels"
            )
        if len(set(electrodes)) != len(electrodes):
            raise ValueError("electrode names must be unique")
        if not np.isfinite(samples).all():
            raise ValueError("samples contain non-finite values")
        self.samples = samples
        self.fs = float(fs)
        self.electrodes = electrodes

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    def __repr__(self):
        return (
            f"SampledWindow(n_samples={self.n_samples}, n_channels={self.n_channels}, "
            f"fs={self.fs})"
        )


@dataclass(frozen=True)
class WelchConfig:
    """Segmentation and tapering parameters for Welch-style estimates."""

    segment_len: int = 256
    overlap: float = 0.5
    window: str = "hann"
    detrend: str = "mean"

    def __post_init__(self):
        if self.segment_len < 8:
            raise ValueError(f"segment_len must be >= 8, got {self.segment_len}")
        if not (0.0 <= self.overlap < 1.0):
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.window not in ("hann", "boxcar"):
            raise ValueError(f"unknown window {self.window!r}; expected 'hann' or 'boxcar'")
        if self.detrend not in ("none", "mean"):
            raise ValueError(f"unknown detrend {self.detrend!r}; expected 'none' or 'mean'")

    @property
    def step(self) -> int:
        return max(1, int(round(self.segment_len * (1.0 - self.overlap))))

    def segment_count(self, n_samples: int) -> int:
        if n_samples < self.segment_len:
            return 0
        return 1 + (n_samples - self.segment_len) // self.step

    def taper(self) -> np.ndarray:
        n = self.segment_len
        if self.window == "hann":
            # periodic Hann, standard for averaged periodograms
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        return np.ones(n)


# ---------------------------------------------------------------------------
# Result containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralDensity:
    """One-sided power density per channel; values in (units^2)/Hz."""

    freqs: np.ndarray          # (n_bins,)
    values: np.ndarray         # (n_channels, n_bins)
    electrodes: tuple[str, ...]

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass(frozen=True)
class BandPowerMatrix:
    """Integrated power per band per channel (units^2)."""

    bands: tuple[FrequencyBand, ...]
    electrodes: tuple[str, ...]
    values: np.ndarray         # (n_bands, n_channels)

    def value(self, band: str, electrode: str) -> float:
        b = [x.name for x in self.bands].index(band)
        e = self.electrodes.index(electrode)
        return float(self.values[b, e])


@dataclass(frozen=True)
class CoherenceTensor:
    """Band-averaged magnitude-squared coherence per unordered channel pair.

    values[b, k] holds the coherence of pair k in canonical order (i < j);
    the (j, i) lookup resolves to the same storage, so symmetry is exact.
    """

    bands: tuple[FrequencyBand, ...]
    electrodes: tuple[str, ...]
    pairs: tuple[tuple[int, int], ...]
    values: np.ndarray         # (n_bands, n_pairs)

    def value(self, band: str, e1: str, e2: str) -> float:
        b = [x.name for x in self.bands].index(band)
        i = self.electrodes.index(e1)
        j = self.electrodes.index(e2)
        if i == j:
            raise ValueError("coherence is defined for distinct electrodes")
        if i > j:
            i, j = j, i
        return float(self.values[b, self.pairs.index((i, j))])


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _segment_spectra(window: SampledWindow, cfg: WelchConfig):
    """Tapered segment FFTs: (freqs, X[(n_channels, L, n_bins)], taper_power)."""
    n = window.n_samples
    if n < cfg.segment_len:
        raise ValueError(
            f"window too short: {n} samples < one segment of {cfg.segment_len}"
        )
    seg = cfg.segment_len
    step = cfg.step
    count = cfg.segment_count(n)
    starts = step * np.arange(count)
    idx = starts[:, None] + np.arange(seg)[None, :]
    segments = window.samples[idx, :]                      # (L, seg, C)
    if cfg.detrend == "mean":
        segments = segments - segments.mean(axis=1, keepdims=True)
    taper = cfg.taper()
    spectra = np.fft.rfft(segments * taper[None, :, None], axis=1)
    spectra = np.transpose(spectra, (2, 0, 1))             # (C, L, n_bins)
    freqs = np.fft.rfftfreq(seg, d=1.0 / window.fs)
    return freqs, spectra, float(np.sum(taper ** 2))


def welch_psd(window: SampledWindow, cfg: WelchConfig = WelchConfig()) -> SpectralDensity:
    """Welch's averaged-periodogram PSD estimate, one density curve per channel.

    The one-sided density is normalized so that its integral over frequency
    approximates the signal variance (for detrend="mean") or mean square
    (detrend="none").
    """
    freqs, spectra, taper_power = _segment_spectra(window, cfg)
    scale = 1.0 / (window.fs * taper_power)
    psd = (np.abs(spectra) ** 2).mean(axis=1) * scale      # (C, n_bins)
    # one-sided doubling; DC and (for even segment lengths) Nyquist stay single
    psd[:, 1:] *= 2.0
    if cfg.segment_len % 2 == 0:
        psd[:, -1] /= 2.0
    return SpectralDensity(freqs=freqs, values=psd, electrodes=window.electrodes)


def _band_masks(freqs: np.ndarray, bands: Sequence[FrequencyBand]) -> list[np.ndarray]:
    nyquist = float(freqs[-1])
    masks = []
    for band in bands:
        if band.hi > nyquist + 1e-12:
            raise ValueError(
                f"band {band.name!r} [{band.lo},{band.hi}) exceeds the Nyquist "
                f"frequency {nyquist} Hz"
            )
        mask = (freqs >= band.lo) & (freqs < band.hi)
        if not mask.any():
            raise ValueError(
                f"band {band.name!r} contains no frequency bins at resolution "
                f"{freqs[1] - freqs[0]:.4g} Hz"
            )
        masks.append(mask)
    return masks


def band_powers(
    psd: SpectralDensity, bands: Sequence[FrequencyBand] = BANDS_SIX
) -> BandPowerMatrix:
    """Integrate the density over each band: sum of density * bin width over lo <= f < hi."""
    bands = validate_bands(bands)
    masks = _band_masks(psd.freqs, bands)
    df = psd.bin_width
    values = np.stack([psd.values[:, m].sum(axis=1) * df for m in masks])
    return BandPowerMatrix(bands=bands, electrodes=psd.electrodes, values=values)


def msc_coherence(
    window: SampledWindow,
    cfg: WelchConfig = WelchConfig(),
    bands: Sequence[FrequencyBand] = BANDS_SIX,
) -> CoherenceTensor:
    """Band-averaged magnitude-squared coherence for every unordered channel pair.

    Per bin, C = |mean cross-spectrum|^2 / (mean auto_i * mean auto_j) over
    Welch segments, then averaged across each band's bins. A single segment
    would make C identically 1, so at least 2 segments are required. Bins
    where a channel has zero power contribute coherence 0 (with a warning)
    rather than 0/0.
    """
    bands = validate_bands(bands)
    freqs, spectra, _ = _segment_spectra(window, cfg)
    n_segments = spectra.shape[1]
    if n_segments < 2:
        raise ValueError(
            f"coherence needs >= 2 Welch segments, got {n_segments} "
            f"(n_samples={window.n_samples}, segment_len={cfg.segment_len})"
        )
    masks = _band_masks(freqs, bands)
    auto = (np.abs(spectra) ** 2).mean(axis=1)             # (C, n_bins)
    n_ch = window.n_channels
    pairs = tuple((i, j) for i in range(n_ch) for j in range(i + 1, n_ch))
    values = np.empty((len(bands), len(pairs)))
    warned = False
    for k, (i, j) in enumerate(pairs):
        cross = (spectra[i] * np.conj(spectra[j])).mean(axis=0)
        denom = auto[i] * auto[j]
        coh = np.zeros_like(denom)
        nz = denom > 0.0
        coh[nz] = np.abs(cross[nz]) ** 2 / denom[nz]
        np.clip(coh, 0.0, 1.0, out=coh)
        for b, mask in enumerate(masks):
            if not warned and not nz[mask].all():
                warnings.warn(
                    f"zero-power bins between channels {window.electrodes[i]!r} and "
                    f"{window.electrodes[j]!r}; coherence defined as 0 there",
                    RuntimeWarning,
                    stacklevel=2,
                )
                warned = True
            values[b, k] = coh[mask].mean()
    return CoherenceTensor(
        bands=bands, electrodes=window.electrodes, pairs=pairs, values=values
    )


# ---------------------------------------------------------------------------
# Synthetic EEG with controllable coherence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalProfile:
    """Generator profile: in-band density level per band plus a pairwise coherence target.

    band_scales maps band name to the one-sided density level inside that
    band (uV^2/Hz); integrated band power is then scale * bandwidth. The
    coherence target is the magnitude-squared coherence the generated
    channels exhibit for every pair.
    """

    band_scales: Mapping[str, float]
    coherence: float
    bands: tuple[FrequencyBand, ...] = BANDS_SIX

    def __post_init__(self):
        validate_bands(self.bands)
        names = {b.name for b in self.bands}
        unknown = set(self.band_scales) - names
        if unknown:
            raise ValueError(f"band_scales for unknown bands {sorted(unknown)}")
        if any(v < 0 for v in self.band_scales.values()):
            raise ValueError("band scales must be non-negative")
        if not (0.0 <= self.coherence <= 1.0):
            raise ValueError(f"coherence target must be in [0, 1], got {self.coherence}")

    def scale_of(self, band: FrequencyBand) -> float:
        return float(self.band_scales.get(band.name, 0.0))


def read_raw_window(path, fs: float) -> SampledWindow:
    """Read one subject's raw EEG CSV with header ``time,<electrode>,...``.

    Electrode columns must appear in canonical montage order; the time column
    is ignored. The sampling rate arrives out-of-band.
    """
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty raw-signal file") from None
        if not header or header[0] != "time":
            raise ValueError(f"{path}: first column must be 'time', got {header[:1]}")
        electrodes = tuple(header[1:])
        if electrodes != tuple(ELECTRODES[: len(electrodes)]):
            raise ValueError(
                f"{path}: electrode columns must follow canonical montage order "
                f"{ELECTRODES[: len(electrodes)]}"
            )
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise ValueError(f"{path}: unparseable sample on data row {i}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    return SampledWindow(np.asarray(rows), fs, electrodes)


def write_raw_window(window: SampledWindow, path) -> None:
    """Inverse of read_raw_window; time column in seconds."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", *window.electrodes])
        for t in range(window.n_samples):
            writer.writerow([repr(t / window.fs), *(repr(float(v)) for v in window.samples[t])])


def synth_eeg(
    profile: SignalProfile,
    duration: float,
    fs: float,
    seed: int,
    electrodes: Sequence[str] = ELECTRODES,
) -> SampledWindow:
    """Generate band-shaped multichannel noise with a target pairwise coherence.

    Every channel is a mixture x_i = sqrt(1-a)*n_i + sqrt(a)*s of an
    independent noise n_i and one shared source s with identical band
    shaping. Mixing two signals that share the power fraction a yields
    magnitude-squared coherence a^2, so a = sqrt(target) makes the measured
    MSC equal the requested target. Deterministic for a fixed seed.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    if not (fs > 0):
        raise ValueError(f"sampling rate must be positive, got {fs}")
    n = int(round(duration * fs))
    if n < 16:
        raise ValueError(f"duration too short: {n} samples")
    rng = np.random.default_rng(seed)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    gain = np.zeros_like(freqs)
    for band in profile.bands:
        mask = (freqs >= band.lo) & (freqs < band.hi)
        # unit-variance white noise has one-sided density 2/fs, so this gain
        # puts the in-band density at the requested scale
        gain[mask] = np.sqrt(profile.scale_of(band) * fs / 2.0)

    def shaped() -> np.ndarray:
        white = rng.standard_normal(n)
        return np.fft.irfft(np.fft.rfft(white) * gain, n)

    shared_fraction = np.sqrt(profile.coherence)
    shared = shaped()
    w_own = np.sqrt(1.0 - shared_fraction)
    w_shared = np.sqrt(shared_fraction)
    samples = np.empty((n, len(electrodes)))
    for c in range(len(electrodes)):
        samples[:, c] = w_own * shaped() + w_shared * shared
    return SampledWindow(samples=samples, fs=fs, electrodes=electrodes)
