"""Simulation models, competing tests and power/calibration drivers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .engine import sef_test
from .errors import SefError, TooFewIndividuals, Underdispersed
from .inference import TestResult, chi_square_sf

log = logging.getLogger(__name__)

METHODS = ("sef", "mom", "t", "ks")
DEFAULT_CELLS = (300, 1000)


# ------------------------------------------------------------------ #
# Model specs and generators
# ------------------------------------------------------------------ #


def solve_gamma_params(mean: float, variance: float) -> tuple[float, float]:
    """Gamma (shape, rate) giving a Poisson-Gamma marginal with these moments."""
    if not (mean > 0 and variance > mean):
        raise Underdispersed(
            f"Poisson-Gamma needs variance > mean > 0 (got mean={mean}, variance={variance})"
        )
    rate = mean / (variance - mean)
    return mean * rate, rate


@dataclass(frozen=True)
class PoissonGammaSpec:
    mean: float
    variance: float

    def __post_init__(self):
        solve_gamma_params(self.mean, self.variance)

    @property
    def shape(self) -> float:
        return solve_gamma_params(self.mean, self.variance)[0]

    @property
    def rate(self) -> float:
        return solve_gamma_params(self.mean, self.variance)[1]


@dataclass(frozen=True)
class ZinbSpec:
    mu: float = 10.0
    mu_sd: float = float(np.sqrt(0.1))
    theta: float = 10.0
    pi: float = 0.5

    def __post_init__(self):
        if not 0 <= self.pi < 1:
            raise ValueError("zero-inflation pi must lie in [0, 1)")
        if not self.theta > 0:
            raise ValueError("dispersion theta must be positive")
        if not self.mu > 0 or self.mu_sd < 0:
            raise ValueError("mu must be positive and mu_sd non-negative")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _cell_counts(rng, n, cell_range):
    lo, hi = cell_range
    return rng.integers(lo, hi + 1, size=n)


def gen_poisson_gamma(spec: PoissonGammaSpec, n: int, cell_range=DEFAULT_CELLS,
                      seed=None) -> list[np.ndarray]:
    rng = _rng(seed)
    m = _cell_counts(rng, n, cell_range)
    lam = rng.gamma(spec.shape, 1.0 / spec.rate, size=n)
    return [rng.poisson(l, size=mi).astype(float) for l, mi in zip(lam, m)]


def _trunc_normal(rng, mean, sd, size):
    # rejection sampler; acceptance is ~1 for mean >> sd
    if sd == 0:
        return np.full(size, float(mean))
    out = np.empty(0)
    while out.size < size:
        draw = rng.normal(mean, sd, size=max(size - out.size, 16))
        out = np.concatenate([out, draw[draw > 0]])
    return out[:size]


def gen_zinb(spec: ZinbSpec, n: int, cell_range=DEFAULT_CELLS, seed=None) -> list[np.ndarray]:
    rng = _rng(seed)
    m = _cell_counts(rng, n, cell_range)
    mus = _trunc_normal(rng, spec.mu, spec.mu_sd, n)
    out = []
    for mu_i, mi in zip(mus, m):
        nb = rng.negative_binomial(spec.theta, spec.theta / (spec.theta + mu_i), size=mi)
        zero = rng.random(mi) < spec.pi
        out.append(np.where(zero, 0, nb).astype(float))
    return out


# ------------------------------------------------------------------ #
# Competing tests
# ------------------------------------------------------------------ #


def _need_two(*groups):
    for g in groups:
        if len(g) < 2:
            raise TooFewIndividuals(f"need >= 2 individuals per group, got {len(g)}")


def _moment_mean_cov(group, p, loc, scale):
    # cluster-robust covariance of the cell-pooled moment means
    m = np.array([len(v) for v in group], dtype=float)
    tbar_i = np.array([(((np.asarray(v) - loc) / scale)[:, None]
                        ** np.arange(1, p + 1)).mean(axis=0) for v in group])
    tbar = m @ tbar_i / m.sum()
    dev = (tbar_i - tbar) * (m / m.sum())[:, None]
    n = len(group)
    cov = dev.T @ dev * n / (n - 1)
    return tbar, cov


def mom_test(group1: Sequence, group2: Sequence, p: int = 2,
             alpha: float | None = 0.05) -> TestResult:
    """Method-of-moments Wald test on pooled cell-level power means."""
    _need_two(group1, group2)
    pooled = np.concatenate([np.asarray(v, float) for v in list(group1) + list(group2)])
    loc, scale = pooled.mean(), pooled.std()
    if not scale > 0:
        scale = 1.0
    t1, c1 = _moment_mean_cov(group1, p, loc, scale)
    t2, c2 = _moment_mean_cov(group2, p, loc, scale)
    d = t1 - t2
    if not np.any(d):
        return TestResult(0.0, p, 1.0, "mom", alpha)
    cov = c1 + c2
    stat = float(d @ np.linalg.lstsq(cov, d, rcond=None)[0])
    stat = max(stat, 0.0)
    return TestResult(stat, p, chi_square_sf(stat, p), "mom", alpha)


def pseudobulk(group: Sequence) -> np.ndarray:
    return np.array([np.mean(v) for v in group])


def pseudobulk_t_test(group1: Sequence, group2: Sequence,
                      alpha: float | None = 0.05) -> TestResult:
    """Welch t-test on per-individual means; statistic is ``|t|``."""
    _need_two(group1, group2)
    a, b = pseudobulk(group1), pseudobulk(group2)
    if np.array_equal(np.sort(a), np.sort(b)):
        return TestResult(0.0, float(a.size + b.size - 2), 1.0, "t", alpha)
    res = stats.ttest_ind(a, b, equal_var=False)
    df = getattr(res, "df", None)
    return TestResult(abs(float(res.statistic)), None if df is None else float(df),
                      float(res.pvalue), "t", alpha)


def pseudobulk_ks_test(group1: Sequence, group2: Sequence,
                       alpha: float | None = 0.05) -> TestResult:
    """Two-sample KS on per-individual means with the asymptotic p-value."""
    _need_two(group1, group2)
    res = stats.ks_2samp(pseudobulk(group1), pseudobulk(group2), method="asymp")
    return TestResult(float(res.statistic), None, float(res.pvalue), "ks", alpha)


# ------------------------------------------------------------------ #
# Experiment drivers
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class ExperimentConfig:
    n_per_group: tuple = (100, 100)
    cell_count_range: tuple = DEFAULT_CELLS
    replicates: int = 300
    alpha: float = 0.05
    seed: int = 0
    methods: tuple = METHODS
    p: int = 2
    k: int = 100
    delta: float = 0.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")


Generator = Callable[[int, tuple, np.random.Generator], list]


def poisson_gamma_generator(mean: float, variance: float) -> Generator:
    spec = PoissonGammaSpec(mean, variance)
    return lambda n, cells, rng: gen_poisson_gamma(spec, n, cells, rng)


def zinb_generator(**kw) -> Generator:
    spec = ZinbSpec(**kw)
    return lambda n, cells, rng: gen_zinb(spec, n, cells, rng)


@dataclass(frozen=True)
class Scenario:
    """A pair of generators, one per group, at a labelled parameter value."""
    name: str
    value: float
    group1: Generator
    group2: Generator


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def run_method(method: str, g1, g2, config: ExperimentConfig) -> TestResult:
    if method == "sef":
        return sef_test(g1, g2, k=config.k, p=config.p, delta=config.delta,
                        alpha=config.alpha).test
    if method == "mom":
        return mom_test(g1, g2, config.p, config.alpha)
    if method == "t":
        return pseudobulk_t_test(g1, g2, config.alpha)
    return pseudobulk_ks_test(g1, g2, config.alpha)


def replicate_pvalues(config: ExperimentConfig, scenario: Scenario, index: int) -> dict:
    """p-values of every configured method on one simulated replicate.

    A failing method yields NaN for that replicate instead of aborting.
    """
    rng = replicate_rng(config.seed, index)
    n1, n2 = config.n_per_group
    g1 = scenario.group1(n1, config.cell_count_range, rng)
    g2 = scenario.group2(n2, config.cell_count_range, rng)
    out = {}
    for method in config.methods:
        try:
            out[method] = run_method(method, g1, g2, config).p_value
        except (SefError, np.linalg.LinAlgError) as exc:
            log.warning("replicate %d, %s failed: %s", index, method, exc)
            out[method] = float("nan")
    return out


@dataclass
class PowerRow:
    scenario: str
    method: str
    value: float
    rate: float
    failures: int
    replicates: int


def scenario_pvalues(config: ExperimentConfig, scenario: Scenario) -> dict:
    reps = [replicate_pvalues(config, scenario, r) for r in range(config.replicates)]
    return {m: np.array([r[m] for r in reps]) for m in config.methods}


def power_experiment(config: ExperimentConfig, scenarios: Sequence[Scenario]) -> list[PowerRow]:
    """Rejection rate of each method at each scenario value.

    The rate is over replicates where the method produced a p-value; failures
    are counted separately.
    """
    rows = []
    for sc in scenarios:
        pv = scenario_pvalues(config, sc)
        for method in config.methods:
            p = pv[method]
            ok = np.isfinite(p)
            rate = float(np.mean(p[ok] < config.alpha)) if ok.any() else float("nan")
            rows.append(PowerRow(sc.name, method, sc.value, rate, int((~ok).sum()),
                                 config.replicates))
    return rows


@dataclass
class Calibration:
    p_values: np.ndarray
    expected: np.ndarray = field(init=False)
    observed: np.ndarray = field(init=False)

    def __post_init__(self):
        p = np.sort(self.p_values[np.isfinite(self.p_values)])
        n = p.size
        self.expected = -np.log10((np.arange(1, n + 1) - 0.5) / n)
        self.observed = -np.log10(np.maximum(p, 1e-300))

    @property
    def ks_distance(self) -> float:
        p = self.p_values[np.isfinite(self.p_values)]
        return float(stats.kstest(p, "uniform").statistic)

    def rejection_rate(self, alpha: float) -> float:
        p = self.p_values[np.isfinite(self.p_values)]
        return float(np.mean(p < alpha))


def null_calibration(config: ExperimentConfig, generator: Generator,
                     method: str = "sef") -> Calibration:
    """p-values of ``method`` with both groups drawn from ``generator``."""
    cfg = replace(config, methods=(method,))
    pv = scenario_pvalues(cfg, Scenario("null", 0.0, generator, generator))
    return Calibration(pv[method])


# ------------------------------------------------------------------ #
# Paper scenario presets
# ------------------------------------------------------------------ #


def pg_mean_shift(values=None) -> list[Scenario]:
    values = np.linspace(10, 12, 15) if values is None else values
    return [Scenario("pg_mean_shift", float(v), poisson_gamma_generator(10, 15),
                     poisson_gamma_generator(float(v), 15)) for v in values]


def pg_variance_shift(values=None) -> list[Scenario]:
    values = np.linspace(15, 23, 10) if values is None else values
    return [Scenario("pg_variance_shift", float(v), poisson_gamma_generator(10, 15),
                     poisson_gamma_generator(10, float(v))) for v in values]


def zinb_dispersion_shift(values=(1.0, 1.5, 2.0, 3.0)) -> list[Scenario]:
    return [Scenario("zinb_dispersion_shift", float(b), zinb_generator(theta=10.0),
                     zinb_generator(theta=10.0 * b)) for b in values]


def zinb_mean_shift(values=(10.0, 10.5, 11.0, 11.5, 12.0)) -> list[Scenario]:
    return [Scenario("zinb_mean_shift", float(v), zinb_generator(mu=10.0),
                     zinb_generator(mu=float(v))) for v in values]


PRESETS = {
    "pg_mean_shift": pg_mean_shift,
    "pg_variance_shift": pg_variance_shift,
    "zinb_dispersion_shift": zinb_dispersion_shift,
    "zinb_mean_shift": zinb_mean_shift,
}
