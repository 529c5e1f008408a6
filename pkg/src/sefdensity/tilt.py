"""Exponential tilts of the carrier fitted by binned Poisson likelihood.

A tilt ``carrier * exp(beta0 + X @ beta1)`` is fitted so its moments of the
design statistics match the empirical ones.  Fits are done on bin
frequencies ``s / m``; this is the raw-count Poisson regression divided
through by ``m`` and has the same solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .carrier import CarrierDensity
from .errors import EmptyInput, GridMismatch, NonConvergence, SingularHessian
from .grid import (
    BinnedSample,
    DesignMatrix,
    binned_stat_means,
    design_matrix,
    sufficient_stat_means,
)

SCORE_TOL = 1e-10
ACCEPT_TOL = 1e-8
STEP_TOL = 1e-12
MAX_ITER = 100
MAX_HALVINGS = 60
RCOND_MIN = 1e-12
LL_SLACK = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class TiltTarget:
    density: np.ndarray
    cell_total: int
    width: float

    @classmethod
    def from_counts(cls, counts, width: float) -> "TiltTarget":
        c = np.asarray(counts, dtype=float)
        total = c.sum()
        if total <= 0:
            raise EmptyInput("target has no observations")
        return cls(c / total / width, int(round(total)), float(width))

    @property
    def frequencies(self) -> np.ndarray:
        return self.density * self.width


@dataclass(frozen=True)
class SefFit:
    beta0: float
    beta1: np.ndarray
    normalizer: float
    iterations: int
    max_score: float
    converged: bool
    design: DesignMatrix = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    loglik_path: tuple = field(default=(), repr=False)
    halvings: int = 0

    @property
    def beta(self) -> np.ndarray:
        """Full coefficient vector matching the design columns."""
        if self.design.intercept:
            return np.concatenate([[self.beta0], self.beta1])
        return np.asarray(self.beta1)

    @property
    def eta(self) -> np.ndarray:
        """Linear predictor ``beta0 + powers @ beta1`` at each bin."""
        return self.beta0 + self.design.powers @ self.beta1


def _check_rcond(info: np.ndarray) -> None:
    ev = np.linalg.eigvalsh(info)
    rcond = ev[0] / ev[-1] if ev[-1] > 0 else 0.0
    if not rcond >= RCOND_MIN:
        raise SingularHessian(
            f"Newton information matrix is singular (rcond={rcond:.3e}, "
            f"eigenvalues {ev[0]:.3e}..{ev[-1]:.3e})",
            condition=rcond,
        )


def _raw_objective(freq, mu, w, X):
    def f(b):
        eta = X @ b
        with np.errstate(over="ignore"):
            lam = mu * np.exp(eta) * w
        ll = freq @ eta - lam.sum()
        if not np.isfinite(ll):
            return -np.inf, None, None
        score = X.T @ (freq - lam)
        info = X.T @ (lam[:, None] * X)
        return ll, score, info
    return f


def _profile_objective(freq, mu, w, X):
    # beta0 is profiled out by the normalization constraint
    logmu = np.log(mu * w)

    def f(b):
        eta = X @ b
        a = logmu + eta
        amax = a.max()
        if not np.isfinite(amax):
            return -np.inf, None, None
        e = np.exp(a - amax)
        c = e.sum()
        prob = e / c
        ll = freq @ eta - (amax + np.log(c))
        score = X.T @ (freq - prob)
        xm = X.T @ prob
        info = X.T @ (prob[:, None] * X) - np.outer(xm, xm)
        return ll, score, info
    return f


def fit_tilt(target: TiltTarget, carrier: CarrierDensity, design: DesignMatrix,
             tol: float = SCORE_TOL, max_iter: int = MAX_ITER) -> SefFit:
    """Damped Newton solve of the tilt score equations, starting at zero."""
    k = carrier.values.size
    if target.density.size != k or design.k != k:
        raise GridMismatch("target, carrier and design must share the bin count")
    if not np.isclose(target.width, carrier.grid.width, rtol=1e-12):
        raise GridMismatch("target and carrier bin widths differ")
    freq = target.frequencies
    mu, w = carrier.values, carrier.grid.width
    X = design.matrix
    objective = (_raw_objective if design.intercept else _profile_objective)(freq, mu, w, X)

    beta = np.zeros(X.shape[1])
    ll, score, info = objective(beta)
    path = [ll]
    halvings = 0
    it = 0
    while it < max_iter and np.max(np.abs(score)) >= tol:
        it += 1
        _check_rcond(info)
        step = np.linalg.solve(info, score)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = beta + t * step
            ll_new, s_new, i_new = objective(trial)
            # near the optimum likelihood changes drop below rounding
            if ll_new >= ll - LL_SLACK * max(1.0, abs(ll)):
                break
            t *= 0.5
            halvings += 1
        else:
            break
        beta, ll, score, info = trial, ll_new, s_new, i_new
        path.append(ll)
        if np.max(np.abs(t * step)) < STEP_TOL:
            break

    max_score = float(np.max(np.abs(score)))
    if not max_score < max(tol, ACCEPT_TOL):
        raise NonConvergence(
            f"tilt fit did not converge after {it} iterations (max score {max_score:.3e})",
            iterations=it, max_score=max_score,
        )

    powers = design.powers
    if design.intercept:
        beta0, beta1 = float(beta[0]), beta[1:].copy()
    else:
        beta1 = beta.copy()
        beta0 = None
    with np.errstate(over="ignore"):
        normalizer = float(np.sum(mu * np.exp(powers @ beta1) * w))
    if beta0 is None:
        beta0 = -float(np.log(normalizer))
    fitted = mu * np.exp(beta0 + powers @ beta1) * w
    beta1.flags.writeable = False
    fitted.flags.writeable = False
    return SefFit(beta0, beta1, normalizer, it, max_score, True, design,
                  fitted, tuple(path), halvings)


def fit_individual(sample: BinnedSample, carrier: CarrierDensity,
                   design: DesignMatrix, **kw) -> SefFit:
    return fit_tilt(TiltTarget.from_counts(sample.counts, carrier.grid.width),
                    carrier, design, **kw)


def pooled_counts(samples: Sequence[BinnedSample]) -> np.ndarray:
    if len(samples) == 0:
        raise EmptyInput("no samples in group")
    return np.sum([s.counts for s in samples], axis=0)


def fit_group(samples: Sequence[BinnedSample], carrier: CarrierDensity,
              design: DesignMatrix, **kw) -> SefFit:
    return fit_tilt(TiltTarget.from_counts(pooled_counts(samples), carrier.grid.width),
                    carrier, design, **kw)


def fit_group_centered(samples: Sequence[BinnedSample], carrier: CarrierDensity,
                       p: int, loc: float = 0.0, scale: float = 1.0,
                       cell_values=None, **kw) -> SefFit:
    """Group fit in the centered, intercept-free parameterization.

    The centering vector is the group's mean of each power statistic.  By
    default it is taken from the binned counts (values moved to midpoints),
    which makes the centered columns mean-zero under the fitted density; pass
    ``cell_values`` to center on the cell-level values instead.
    """
    counts = pooled_counts(samples)
    grid = carrier.grid
    if cell_values is None:
        centering = binned_stat_means(grid, counts, p, loc, scale)
    else:
        centering = sufficient_stat_means(cell_values, p, loc, scale)
    design = design_matrix(grid, p, centering=centering, loc=loc, scale=scale)
    return fit_tilt(TiltTarget.from_counts(counts, grid.width), carrier, design, **kw)


def density_curve(carrier: CarrierDensity, design: DesignMatrix, fit: SefFit) -> np.ndarray:
    """Tilted carrier at the midpoints, normalized to integrate to one."""
    eta = design.powers @ np.asarray(fit.beta1)
    with np.errstate(over="ignore"):
        dens = carrier.values * np.exp(eta - eta.max())
    return dens / (dens.sum() * carrier.grid.width)
