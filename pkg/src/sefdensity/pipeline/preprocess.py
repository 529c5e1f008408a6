"""Library-size normalization, variance-stabilizing transform and gene filters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import NegativeInput, ZeroLibrary
from .io import RawCounts


def library_sizes(raw: RawCounts) -> np.ndarray:
    return np.asarray(raw.matrix.sum(axis=0)).ravel()


def normalize_library_size(raw: RawCounts, reference: float | None = None) -> RawCounts:
    """Scale each cell's counts by ``reference / cell total``.

    ``reference`` defaults to the median cell total, so the median library
    size is unchanged.
    """
    totals = library_sizes(raw)
    if totals.size and not np.all(totals > 0):
        bad = raw.cells[int(np.argmin(totals > 0))]
        raise ZeroLibrary(f"cell {bad!r} has zero total count")
    ref = float(np.median(totals)) if reference is None else float(reference)
    if not ref > 0:
        raise ValueError("reference library size must be positive")
    return raw.with_matrix(raw.matrix @ sparse.diags(ref / totals))


def sqrt_transform(values) -> np.ndarray:
    """Elementwise ``sqrt(y + 1/2)``."""
    y = np.asarray(values, dtype=float)
    if np.any(y < 0):
        raise NegativeInput("square-root transform needs non-negative values")
    return np.sqrt(y + 0.5)


@dataclass(frozen=True)
class FilterThresholds:
    min_cells: int = 100
    min_nonzero_frac: float = 0.2
    min_donors_per_group: int = 50

    def __post_init__(self):
        if self.min_cells < 0 or self.min_nonzero_frac < 0 or self.min_donors_per_group < 0:
            raise ValueError("filter thresholds must be non-negative")


@dataclass(frozen=True)
class FilterOutcome:
    kept: bool
    individuals: tuple
    excluded: dict = field(default_factory=dict)
    reason: str = ""


def filter_gene(values: dict, groups: dict, thresholds: FilterThresholds) -> FilterOutcome:
    """Drop sparse individuals for one gene, then the gene if a group is too small.

    ``values`` maps individual -> that individual's per-cell counts for the
    gene (before the square-root transform, so zeros are still zeros);
    ``groups`` maps individual -> group label.
    """
    kept, excluded = [], {}
    for ind, v in values.items():
        v = np.asarray(v)
        if v.size < thresholds.min_cells or v.size == 0:
            excluded[ind] = f"{v.size} cells < {thresholds.min_cells}"
        elif np.count_nonzero(v) / v.size < thresholds.min_nonzero_frac:
            excluded[ind] = f"nonzero fraction {np.count_nonzero(v) / v.size:.3g} " \
                            f"< {thresholds.min_nonzero_frac}"
        else:
            kept.append(ind)
    labels = sorted(set(groups.values()))
    per_group = {g: sum(groups[i] == g for i in kept) for g in labels}
    short = [g for g, c in per_group.items() if c < max(thresholds.min_donors_per_group, 0)]
    if short:
        return FilterOutcome(False, tuple(kept), excluded,
                             f"group {short[0]!r} has {per_group[short[0]]} donors "
                             f"< {thresholds.min_donors_per_group}")
    return FilterOutcome(True, tuple(kept), excluded)
