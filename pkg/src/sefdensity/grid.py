"""Binning of observations and polynomial sufficient-statistic designs.

Every density in this package lives on an equal-width bin grid.  Bins are
left-closed and right-open except the last, which is closed on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyInput, InvalidK, OutOfRange, UnequalBins

DEFAULT_K = 100


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinGrid:
    edges: np.ndarray

    def __post_init__(self):
        edges = _frozen(self.edges)
        if edges.ndim != 1 or edges.size < 2:
            raise InvalidK("a grid needs at least two edges")
        widths = np.diff(edges)
        if np.any(widths <= 0):
            raise ValueError("grid edges must be strictly increasing")
        w = (edges[-1] - edges[0]) / widths.size
        if np.max(np.abs(widths - w)) > 1e-12 * max(abs(w), np.max(np.abs(edges))):
            raise UnequalBins("all bins must share one width")
        object.__setattr__(self, "edges", edges)

    @property
    def k(self) -> int:
        return self.edges.size - 1

    @property
    def width(self) -> float:
        return float((self.edges[-1] - self.edges[0]) / self.k)

    @property
    def midpoints(self) -> np.ndarray:
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        mid.flags.writeable = False
        return mid

    def same_as(self, other: "BinGrid") -> bool:
        return self is other or (
            self.k == other.k and np.array_equal(self.edges, other.edges)
        )


@dataclass(frozen=True)
class BinnedSample:
    counts: np.ndarray
    total: int
    label: Hashable = None
    grid: BinGrid | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if np.any(counts < 0):
            raise ValueError("bin counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        if int(counts.sum()) != int(self.total):
            raise ValueError(f"counts sum to {counts.sum()}, expected total {self.total}")
        if self.total <= 0:
            raise EmptyInput("a binned sample needs at least one observation")

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total


@dataclass(frozen=True)
class DesignMatrix:
    """Sufficient statistics evaluated at bin midpoints.

    Columns are powers of the standardized midpoint ``z = (y - loc) / scale``.
    In raw mode the first column is the intercept; in centered mode there is
    no intercept and ``centering`` is subtracted from each power column.
    """

    matrix: np.ndarray
    p: int
    intercept: bool
    centering: np.ndarray | None = None
    loc: float = 0.0
    scale: float = 1.0

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def powers(self) -> np.ndarray:
        """The non-intercept block (K x p)."""
        return self.matrix[:, 1:] if self.intercept else self.matrix


@dataclass(frozen=True)
class GroupLayout:
    membership: tuple
    totals: np.ndarray
    group_labels: tuple

    @classmethod
    def from_samples(cls, samples: Sequence[BinnedSample]) -> "GroupLayout":
        membership = tuple(s.label for s in samples)
        labels = tuple(dict.fromkeys(membership))
        return cls(membership, _frozen([s.total for s in samples]), labels)

    @property
    def weights(self) -> np.ndarray:
        return self.totals / self.totals.sum()

    @property
    def group_totals(self) -> dict:
        member = np.array(self.membership, dtype=object)
        return {g: float(self.totals[member == g].sum()) for g in self.group_labels}

    @property
    def group_fractions(self) -> dict:
        tot = float(self.totals.sum())
        return {g: v / tot for g, v in self.group_totals.items()}

    @property
    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


def build_grid(values, k: int = DEFAULT_K) -> BinGrid:
    """Equal-width grid over the data range padded by ``range / k`` on each side.

    The padded span is then split into ``k`` equal bins, so the data occupy
    the interior and the kernel tails have room on both ends.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise EmptyInput("cannot build a grid from no values")
    if k < 2:
        raise InvalidK(f"need k >= 2 bins, got {k}")
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo
    if not span > 0:
        raise DegenerateInput("values have zero range")
    pad = span / k
    return BinGrid(np.linspace(lo - pad, hi + pad, k + 1))


def bin_index(grid: BinGrid, values) -> np.ndarray:
    vals = np.asarray(values, dtype=float).ravel()
    edges = grid.edges
    bad = (vals < edges[0]) | (vals > edges[-1]) | ~np.isfinite(vals)
    if np.any(bad):
        raise OutOfRange(
            f"{int(bad.sum())} value(s) outside [{edges[0]}, {edges[-1]}]"
        )
    idx = np.searchsorted(edges, vals, side="right") - 1
    idx[idx == grid.k] = grid.k - 1
    return idx


def bin_counts(grid: BinGrid, values, total_check: int | None = None,
               label: Hashable = None) -> BinnedSample:
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise EmptyInput("cannot bin an empty sample")
    if total_check is not None and total_check != vals.size:
        raise ValueError(f"expected {total_check} values, got {vals.size}")
    counts = np.bincount(bin_index(grid, vals), minlength=grid.k)
    return BinnedSample(counts, int(vals.size), label, grid)


def _powers(z: np.ndarray, p: int) -> np.ndarray:
    return z[:, None] ** np.arange(1, p + 1)[None, :]


def design_matrix(grid: BinGrid, p: int, centering=None,
                  loc: float = 0.0, scale: float = 1.0) -> DesignMatrix:
    if p < 1:
        raise ValueError(f"degree p must be >= 1, got {p}")
    if not scale > 0:
        raise ValueError("scale must be positive")
    z = (grid.midpoints - loc) / scale
    pw = _powers(z, p)
    if centering is None:
        mat = np.hstack([np.ones((grid.k, 1)), pw])
        cvec, intercept = None, True
    else:
        cvec = _frozen(centering)
        if cvec.shape != (p,):
            raise ValueError(f"centering must have length p={p}")
        mat = pw - cvec[None, :]
        intercept = False
    mat.flags.writeable = False
    return DesignMatrix(mat, p, intercept, cvec, float(loc), float(scale))


def sufficient_stat_means(values, p: int, loc: float = 0.0,
                          scale: float = 1.0) -> np.ndarray:
    """Cell-level means of ``z, z**2, ..., z**p``."""
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise EmptyInput("no values")
    return _powers((vals - loc) / scale, p).mean(axis=0)


def binned_stat_means(grid: BinGrid, counts, p: int, loc: float = 0.0,
                      scale: float = 1.0) -> np.ndarray:
    """Means of the power statistics with every value moved to its bin midpoint."""
    c = np.asarray(counts, dtype=float)
    if c.sum() <= 0:
        raise EmptyInput("no counts")
    z = (grid.midpoints - loc) / scale
    return c @ _powers(z, p) / c.sum()
