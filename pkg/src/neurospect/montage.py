"""Standard 19-channel 10-20 montage and electrode-to-region assignment."""

from __future__ import annotations

# Canonical electrode order. All pair indexing, feature naming and tensor
# layouts downstream derive from this tuple.
ELECTRODES: tuple[str, ...] = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "T3", "C3", "Cz", "C4", "T4",
    "T5", "P3", "Pz", "P4", "T6",
    "O1", "O2",
)

REGIONS: tuple[str, ...] = ("Frontal", "Central", "Temporal", "Parietal", "Occipital")

N_ELECTRODES = len(ELECTRODES)

# Unordered channel pairs (i < j) in canonical order; C(19,2) = 171.
ELECTRODE_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (i, j) for i in range(N_ELECTRODES) for j in range(i + 1, N_ELECTRODES)
)

PAIR_INDEX: dict[tuple[int, int], int] = {p: k for k, p in enumerate(ELECTRODE_PAIRS)}

N_PAIRS = len(ELECTRODE_PAIRS)


def electrode_region(name: str) -> str:
    """Return the brain region of a montage electrode.

    Assignment follows the 10-20 naming prefix: Fp/F frontal, C central,
    T temporal, P parietal, O occipital.
    """
    if name not in _REGION_OF:
        raise ValueError(f"unknown electrode {name!r}; expected one of the 19-channel montage")
    return _REGION_OF[name]


def _region_from_prefix(name: str) -> str:
    if name.startswith("Fp") or name.startswith("F"):
        return "Frontal"
    if name.startswith("C"):
        return "Central"
    if name.startswith("T"):
        return "Temporal"
    if name.startswith("P"):
        return "Parietal"
    if name.startswith("O"):
        return "Occipital"
    raise ValueError(f"electrode {name!r} has no 10-20 region prefix")


_REGION_OF: dict[str, str] = {e: _region_from_prefix(e) for e in ELECTRODES}

REGION_ELECTRODES: dict[str, tuple[str, ...]] = {
    r: tuple(e for e in ELECTRODES if _REGION_OF[e] == r) for r in REGIONS
}
