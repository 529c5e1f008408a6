"""One two-group SEF differential density test, end to end.

Both the simulation drivers and the batch pipeline go through
:func:`sef_test`, so they agree exactly on shared inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .carrier import CarrierDensity, default_bandwidth, pooled_carrier, smoothing_matrix
from .covariance import (
    CovarianceEstimate,
    group_counts_cov,
    sandwich_pieces,
    sigma_centered_diff,
    sigma_group_diff,
)
from .grid import DEFAULT_K, BinGrid, BinnedSample, GroupLayout, bin_counts, build_grid, design_matrix
from .inference import TestResult, wald
from .tilt import SefFit, density_curve, fit_group, fit_group_centered

DEFAULT_P = 2
PATHS = ("centered", "submatrix", "joint")


@dataclass
class SefTestOutput:
    test: TestResult
    beta_diff: np.ndarray
    sigma: CovarianceEstimate
    fits: tuple
    grid: BinGrid
    carrier: CarrierDensity
    samples: tuple = field(repr=False)
    path: str = "centered"

    @property
    def n(self) -> tuple:
        return tuple(len(s) for s in self.samples)

    @property
    def cell_totals(self) -> tuple:
        return tuple(int(sum(x.total for x in s)) for s in self.samples)

    def curves(self) -> tuple:
        return tuple(density_curve(self.carrier, f.design, f) for f in self.fits)


def bin_groups(grid: BinGrid, group1, group2):
    s1 = tuple(bin_counts(grid, v, label=0) for v in group1)
    s2 = tuple(bin_counts(grid, v, label=1) for v in group2)
    return s1, s2


def sef_test(group1: Sequence, group2: Sequence, k: int = DEFAULT_K, p: int = DEFAULT_P,
             delta: float = 0.0, bandwidth: float | None = None, path: str = "centered",
             alpha: float | None = 0.05, cell_centering: bool = False,
             counts_cov: str = "between") -> SefTestOutput:
    """Test equality of two groups' mean densities.

    ``group1`` and ``group2`` are sequences of per-individual value arrays.
    ``path`` picks the covariance route: ``centered`` (intercept-free fits,
    the default), ``submatrix`` (intercept fits, shape block of the full
    covariance) or ``joint`` (all p + 1 coefficients).  ``counts_cov`` names
    the pooled-count covariance estimator (see :func:`group_counts_cov`).
    """
    if path not in PATHS:
        raise ValueError(f"path must be one of {PATHS}")
    group1 = [np.asarray(v, dtype=float) for v in group1]
    group2 = [np.asarray(v, dtype=float) for v in group2]
    pooled = np.concatenate(group1 + group2)
    grid = build_grid(pooled, k)
    s1, s2 = bin_groups(grid, group1, group2)
    layout = GroupLayout.from_samples(s1 + s2)
    if bandwidth is None:
        bandwidth = default_bandwidth(pooled, layout.weights, delta)
    carrier = pooled_carrier(s1 + s2, smoothing_matrix(grid, bandwidth))
    loc, scale = float(pooled.mean()), float(pooled.std())

    cov1, cov2 = group_counts_cov(s1, counts_cov), group_counts_cov(s2, counts_cov)
    if path == "centered":
        cells = (np.concatenate(group1), np.concatenate(group2)) if cell_centering else (None, None)
        fits = tuple(fit_group_centered(s, carrier, p, loc, scale, cell_values=c)
                     for s, c in zip((s1, s2), cells))
    else:
        design = design_matrix(grid, p, loc=loc, scale=scale)
        fits = (fit_group(s1, carrier, design), fit_group(s2, carrier, design))
    pieces = [sandwich_pieces(f.design, carrier, f, layout, g) for f, g in zip(fits, (0, 1))]

    if path == "centered":
        sigma = sigma_centered_diff(pieces[0], pieces[1], cov1, cov2)
        diff = fits[0].beta1 - fits[1].beta1
    else:
        full = sigma_group_diff(pieces[0], pieces[1], cov1, cov2)
        if path == "joint":
            sigma, diff = full, fits[0].beta - fits[1].beta
        else:
            sigma = CovarianceEstimate(full.sigma[1:, 1:], "submatrix")
            diff = fits[0].beta1 - fits[1].beta1
    test = wald(diff, sigma, method=f"sef_{path}", alpha=alpha)
    return SefTestOutput(test, np.asarray(diff), sigma, fits, grid, carrier, (s1, s2), path)
