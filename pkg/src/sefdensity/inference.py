"""Wald tests, chi-square tails and Benjamini-Hochberg adjustment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidP, SingularSigma

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float | None
    p_value: float
    method: str
    reject_at: float | None = None

    __test__ = False  # keep pytest from collecting this class

    @property
    def rejected(self) -> bool | None:
        if self.reject_at is None:
            return None
        return self.p_value < self.reject_at


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square law, ``Q(df/2, x/2)``."""
    if x < 0:
        raise ValueError("chi-square statistic must be non-negative")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def wald(diff, sigma, method: str = "wald", alpha: float | None = None) -> TestResult:
    """Quadratic form ``diff' sigma^-1 diff`` referred to chi-square(len(diff))."""
    d = np.atleast_1d(np.asarray(diff, dtype=float))
    s = np.asarray(getattr(sigma, "sigma", sigma), dtype=float)
    if s.shape != (d.size, d.size):
        raise ValueError(f"sigma shape {s.shape} does not match diff length {d.size}")
    s = 0.5 * (s + s.T)
    ev, vec = np.linalg.eigh(s)
    if not (ev[-1] > 0 and ev[0] / ev[-1] >= RCOND_MIN):
        raise SingularSigma(
            f"covariance is singular or indefinite (eigenvalues {ev[0]:.3e}..{ev[-1]:.3e})"
        )
    proj = vec.T @ d
    stat = float(np.sum(proj * proj / ev))
    return TestResult(stat, d.size, chi_square_sf(stat, d.size), method, alpha)


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        p = p.ravel()
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidP("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="mergesort")
    ranked = p[order] * n / np.arange(1, n + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    out = np.empty(n)
    out[order] = np.minimum(ranked, 1.0)
    return out
