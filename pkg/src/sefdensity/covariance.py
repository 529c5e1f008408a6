"""Sandwich covariances for individual tilts and group tilt differences.

All formulas assume the carrier is a fixed linear smoother of the pooled
counts, so ``d carrier / d s_j`` is the same matrix for every individual.
The displayed sandwich forms are symmetric only in exact arithmetic; every
result is symmetrized before it is returned.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy import linalg

from .carrier import CarrierDensity
from .errors import SingularG, TooFewIndividuals
from .grid import BinnedSample, DesignMatrix, GroupLayout
from .tilt import SefFit

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class CountsCov:
    matrix: np.ndarray

    def __add__(self, other: "CountsCov") -> "CountsCov":
        return CountsCov(self.matrix + other.matrix)


@dataclass(frozen=True)
class SandwichPieces:
    """Bread and filling for one group's tilt.

    ``z_own`` and ``z_other`` hold the transposed weight matrices (shape
    ``q x K``) that map the group's own pooled counts, respectively the other
    group's pooled counts, into the score.
    """

    g: np.ndarray
    z_own: np.ndarray
    z_other: np.ndarray
    centered: bool

    def bread_solve(self, rhs: np.ndarray) -> np.ndarray:
        return _solve_g(self.g, rhs)


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma: np.ndarray
    target: str


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _solve_g(g: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            # an exactly singular factor is reported by the rcond check below
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu, piv = linalg.lu_factor(g, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularG(str(exc)) from exc
    rcond = linalg.lapack.dgecon(lu, linalg.norm(g, 1), norm="1")[0]
    if not rcond >= RCOND_MIN:
        raise SingularG(f"bread matrix G is singular (rcond={rcond:.3e})")
    return linalg.lu_solve((lu, piv), rhs)


def _stack(samples: Sequence[BinnedSample]):
    S = np.array([s.counts for s in samples], dtype=float)
    m = np.array([s.total for s in samples], dtype=float)
    return S, m


def within_counts_cov(samples: Sequence[BinnedSample]) -> CountsCov:
    """Sum over individuals of ``D(s) - 2 s s'/m + m (s/m)(s/m)'``.

    This is the multinomial plug-in ``D(s) - s s'/m``: it is positive
    semidefinite and annihilates the all-ones vector, as it must when each
    individual's cell total is fixed.
    """
    S, m = _stack(samples)
    P = S / m[:, None]
    mat = (np.diag(S.sum(axis=0))
           - 2.0 * (S.T / m) @ S
           + (P.T * m) @ P)
    return CountsCov(_sym(mat))


def between_counts_cov(samples: Sequence[BinnedSample]) -> CountsCov:
    """Sum over individuals of ``m^2 (s/m - sbar)(s/m - sbar)'``."""
    S, m = _stack(samples)
    sbar = S.sum(axis=0) / m.sum()
    dev = S / m[:, None] - sbar
    return CountsCov(_sym((dev.T * m**2) @ dev))


COUNTS_COV_ESTIMATORS = ("between", "within+between")


def group_counts_cov(samples: Sequence[BinnedSample],
                     estimator: str = "between") -> CountsCov:
    """Estimated covariance of one group's pooled bin counts.

    ``between`` (default) is the individual-level cluster estimator; its
    expectation already contains each individual's multinomial sampling
    noise.  ``within+between`` adds the within-individual term on top, which
    counts that noise twice and is only close when between-individual
    heterogeneity dominates.
    """
    if estimator not in COUNTS_COV_ESTIMATORS:
        raise ValueError(f"estimator must be one of {COUNTS_COV_ESTIMATORS}")
    if len(samples) < 2:
        raise TooFewIndividuals(
            f"need at least 2 individuals per group, got {len(samples)}"
        )
    cov = between_counts_cov(samples)
    if estimator == "within+between":
        cov = within_counts_cov(samples) + cov
    return cov


def sandwich_pieces(design: DesignMatrix, carrier: CarrierDensity, fit: SefFit,
                    group_layout: GroupLayout | None = None, group: Hashable = None,
                    centered: bool | None = None, own_total: float | None = None,
                    smoother_derivative: np.ndarray | None = None) -> SandwichPieces:
    """G and the two Z' matrices for one group's (or individual's) tilt.

    ``own_total`` is the cell total of the counts the tilt was fitted to; it
    is looked up in ``group_layout`` when not given.  ``smoother_derivative``
    defaults to the carrier's constant derivative; pass zeros to drop the
    carrier's own sampling variability.
    """
    if centered is None:
        centered = not design.intercept
    if centered == design.intercept:
        raise ValueError("centered pieces need an intercept-free design and vice versa")
    if own_total is None:
        if group_layout is None:
            raise ValueError("need group_layout/group or own_total")
        own_total = group_layout.group_totals[group]
    X = design.matrix
    w = carrier.grid.width
    dmu = carrier.derivative if smoother_derivative is None else smoother_derivative
    tilt = np.exp(fit.eta) * w
    g = X.T @ ((carrier.values * tilt)[:, None] * X)
    smooth = X.T @ (tilt[:, None] * dmu)
    z_own = X.T / own_total - smooth
    return SandwichPieces(_sym(g), z_own, -smooth, bool(centered))


def _diff_sigma(p1: SandwichPieces, p2: SandwichPieces,
                cov1: CountsCov, cov2: CountsCov) -> np.ndarray:
    a1 = p1.bread_solve(p1.z_own) - p2.bread_solve(p2.z_other)
    a2 = p1.bread_solve(p1.z_other) - p2.bread_solve(p2.z_own)
    return _sym(a1 @ cov1.matrix @ a1.T + a2 @ cov2.matrix @ a2.T)


def sigma_group_diff(pieces_t1: SandwichPieces, pieces_t2: SandwichPieces,
                     cov_t1: CountsCov, cov_t2: CountsCov) -> CovarianceEstimate:
    """Covariance of the full coefficient difference between two groups."""
    if pieces_t1.g.shape != pieces_t2.g.shape:
        raise ValueError("pieces have incompatible dimensions")
    return CovarianceEstimate(_diff_sigma(pieces_t1, pieces_t2, cov_t1, cov_t2),
                              "group_diff")


def sigma_centered_diff(pieces_t1: SandwichPieces, pieces_t2: SandwichPieces,
                        cov_t1: CountsCov, cov_t2: CountsCov) -> CovarianceEstimate:
    """Covariance of the shape-coefficient difference from centered fits."""
    if not (pieces_t1.centered and pieces_t2.centered):
        raise ValueError("sigma_centered_diff needs centered pieces")
    if pieces_t1.g.shape != pieces_t2.g.shape:
        raise ValueError("pieces have incompatible dimensions")
    return CovarianceEstimate(_diff_sigma(pieces_t1, pieces_t2, cov_t1, cov_t2),
                              "centered_diff")


def sigma_group(pieces: SandwichPieces, cov_own: CountsCov,
                cov_other: CountsCov) -> CovarianceEstimate:
    """Covariance of a single group's tilt."""
    a_own = pieces.bread_solve(pieces.z_own)
    a_oth = pieces.bread_solve(pieces.z_other)
    return CovarianceEstimate(
        _sym(a_own @ cov_own.matrix @ a_own.T + a_oth @ cov_other.matrix @ a_oth.T),
        "group",
    )


def sigma_individual(pieces: SandwichPieces, cov_own: CountsCov,
                     cov_others: CountsCov | None = None) -> CovarianceEstimate:
    """Covariance of one individual's tilt.

    ``pieces`` must be built with ``own_total`` equal to the individual's
    cell count.  ``cov_others`` is the summed count covariance of every other
    individual; they enter only through the shared carrier.
    """
    a_own = pieces.bread_solve(pieces.z_own)
    sigma = a_own @ cov_own.matrix @ a_own.T
    if cov_others is not None:
        a_oth = pieces.bread_solve(pieces.z_other)
        sigma = sigma + a_oth @ cov_others.matrix @ a_oth.T
    return CovarianceEstimate(_sym(sigma), "individual")
