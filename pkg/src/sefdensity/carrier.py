"""Pooled kernel carrier density shared by every individual and group."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInput, EmptyInput, GridMismatch, InvalidBandwidth
from .grid import BinGrid, BinnedSample

SILVERMAN = 1.06
FLOOR_REL = 1e-12


@dataclass(frozen=True)
class SmoothingMatrix:
    """Column ``j`` is a discrete Gaussian density centred on midpoint ``j``.

    Columns are renormalized to integrate to one over the grid, which is the
    boundary correction; ``entries[:, j].sum() * width == 1``.
    """

    entries: np.ndarray
    bandwidth: float
    grid: BinGrid
    kernel: str = "gaussian"


@dataclass(frozen=True)
class CarrierDensity:
    values: np.ndarray
    smoother: SmoothingMatrix
    total: int
    floor: float

    @property
    def grid(self) -> BinGrid:
        return self.smoother.grid

    @property
    def derivative(self) -> np.ndarray:
        """d carrier / d s_j for any individual j, ignoring the floor."""
        return self.smoother.entries / self.total


def smoothing_matrix(grid: BinGrid, bandwidth: float) -> SmoothingMatrix:
    if not (bandwidth > 0 and np.isfinite(bandwidth)):
        raise InvalidBandwidth(f"bandwidth must be positive, got {bandwidth}")
    mid = grid.midpoints
    d = (mid[:, None] - mid[None, :]) / bandwidth
    kern = np.exp(-0.5 * d * d)
    kern /= kern.sum(axis=0, keepdims=True) * grid.width
    kern.flags.writeable = False
    return SmoothingMatrix(kern, float(bandwidth), grid)


def pooled_carrier(samples: Sequence[BinnedSample], smoother: SmoothingMatrix,
                   floor_rel: float = FLOOR_REL) -> CarrierDensity:
    if len(samples) == 0:
        raise EmptyInput("no samples to pool")
    grid = smoother.grid
    for s in samples:
        if s.counts.shape != (grid.k,) or (s.grid is not None and not s.grid.same_as(grid)):
            raise GridMismatch("sample binned on a different grid than the smoother")
    pooled = np.sum([s.counts for s in samples], axis=0).astype(float)
    total = int(pooled.sum())
    vals = smoother.entries @ pooled / total
    floor = floor_rel * vals.max()
    vals = np.maximum(vals, floor)
    norm = vals.sum() * grid.width
    vals = vals / norm
    vals.flags.writeable = False
    return CarrierDensity(vals, smoother, total, floor / norm)


def default_bandwidth(values, weights, delta: float = 0.0) -> float:
    """Silverman-style prefactor times the effective-sample-size rate.

    ``h = 1.06 * sd(values) * (sum w_i^2) ** (1/5 + 2*delta)``
    """
    vals = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if w.size == 0 or np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-10):
        raise ValueError("weights must be non-negative and sum to 1")
    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    if not sd > 0:
        raise DegenerateInput("pooled standard deviation is zero")
    return SILVERMAN * sd * float(np.sum(w * w)) ** (0.2 + 2.0 * delta)
