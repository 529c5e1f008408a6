import numpy as np
import pytest

from sefdensity.carrier import pooled_carrier, smoothing_matrix
from sefdensity.covariance import (
    CountsCov,
    SandwichPieces,
    between_counts_cov,
    group_counts_cov,
    sandwich_pieces,
    sigma_centered_diff,
    sigma_group,
    sigma_group_diff,
    sigma_individual,
    within_counts_cov,
)
from sefdensity.engine import bin_groups, sef_test
from sefdensity.errors import SingularG, TooFewIndividuals
from sefdensity.grid import BinGrid, BinnedSample, GroupLayout, build_grid, design_matrix
from sefdensity.tilt import TiltTarget, fit_group, fit_group_centered, fit_individual, fit_tilt


def _psd_sym(a, tol=1e-8):
    assert np.array_equal(a, a.T)
    assert np.linalg.eigvalsh(a).min() >= -tol * max(np.trace(a), 1.0)


@pytest.fixture
def fitted(pg_groups):
    g1, g2 = pg_groups
    pooled = np.concatenate(g1 + g2)
    grid = build_grid(pooled, 60)
    s1, s2 = bin_groups(grid, g1, g2)
    layout = GroupLayout.from_samples(s1 + s2)
    carrier = pooled_carrier(s1 + s2, smoothing_matrix(grid, 0.3 * pooled.std()))
    loc, scale = pooled.mean(), pooled.std()
    design = design_matrix(grid, 2, loc=loc, scale=scale)
    fits = (fit_group(s1, carrier, design), fit_group(s2, carrier, design))
    return dict(grid=grid, s=(s1, s2), layout=layout, carrier=carrier, design=design,
                fits=fits, loc=loc, scale=scale)


# ------------------------------------------------------------------ #
# count covariances
# ------------------------------------------------------------------ #


class TestCountsCov:
    def test_point_mass_within_term_is_zero(self):
        s = BinnedSample(np.array([0, 9, 0, 0]), 9)
        np.testing.assert_allclose(within_counts_cov([s]).matrix, 0, atol=1e-12)

    def test_identical_individuals_between_zero(self):
        s = BinnedSample(np.array([3, 1, 4, 1]), 9)
        np.testing.assert_allclose(between_counts_cov([s, s]).matrix, 0, atol=1e-12)

    def test_within_is_multinomial(self, rng):
        samples = [BinnedSample(c, int(c.sum())) for c in rng.integers(0, 20, (5, 6))]
        expected = sum(np.diag(s.counts) - np.outer(s.counts, s.counts) / s.total
                       for s in samples)
        W = within_counts_cov(samples).matrix
        np.testing.assert_allclose(W, expected, atol=1e-10)
        np.testing.assert_allclose(W @ np.ones(6), 0, atol=1e-10)
        _psd_sym(W)

    def test_estimators_and_errors(self, rng):
        samples = [BinnedSample(c, int(c.sum())) for c in rng.integers(1, 20, (4, 5))]
        b = group_counts_cov(samples).matrix
        wb = group_counts_cov(samples, "within+between").matrix
        np.testing.assert_allclose(wb - b, within_counts_cov(samples).matrix, atol=1e-10)
        _psd_sym(b)
        with pytest.raises(TooFewIndividuals):
            group_counts_cov(samples[:1])
        with pytest.raises(ValueError):
            group_counts_cov(samples, "bootstrap")

    @pytest.mark.slow
    def test_monte_carlo_oracle(self):
        # cell totals are held fixed across replicates: the estimator describes
        # variability of the pooled counts given the individuals' cell counts
        rng = np.random.default_rng(11)
        n, reps = 100, 500
        m = rng.integers(300, 1001, size=n)
        shape, rate = 20.0, 2.0  # mean 10, variance 15
        edges = np.arange(-0.5, 40.5)
        totals, estimates = [], []
        for _ in range(reps):
            lam = rng.gamma(shape, 1 / rate, size=n)
            counts = [np.bincount(np.minimum(rng.poisson(l, mi), 39), minlength=40)
                      for l, mi in zip(lam, m)]
            samples = [BinnedSample(c, int(mi)) for c, mi in zip(counts, m)]
            totals.append(np.sum(counts, axis=0))
            estimates.append(group_counts_cov(samples).matrix)
        mc = np.cov(np.array(totals, float).T)
        est = np.mean(estimates, axis=0)
        assert np.linalg.norm(est - mc) / np.linalg.norm(mc) < 0.15


# ------------------------------------------------------------------ #
# sandwich pieces
# ------------------------------------------------------------------ #


class TestSandwichPieces:
    def test_uniform_carrier_hand_values(self):
        grid = BinGrid(np.linspace(0, 4, 5))
        s = BinnedSample(np.array([5, 5, 5, 5]), 20, 0, grid)
        carrier = pooled_carrier([s], smoothing_matrix(grid, 1e-4))
        design = design_matrix(grid, 1)
        fit = fit_individual(s, carrier, design)
        np.testing.assert_allclose(fit.beta, 0, atol=1e-12)
        pieces = sandwich_pieces(design, carrier, fit, own_total=20.0)
        # mu0 * width = 1/4 per bin, midpoints 0.5..3.5: G = X'X / 4
        np.testing.assert_allclose(pieces.g, [[1.0, 2.0], [2.0, 5.25]], rtol=1e-10)

    def test_own_minus_other(self, fitted):
        f = fitted
        for g, fit in zip((0, 1), f["fits"]):
            p = sandwich_pieces(f["design"], f["carrier"], fit, f["layout"], g)
            total = f["layout"].group_totals[g]
            np.testing.assert_allclose(p.z_own - p.z_other, f["design"].matrix.T / total,
                                       rtol=1e-12, atol=1e-15)
            _psd_sym(p.g, tol=0)

    def test_zero_centering_is_raw_restriction(self, fitted):
        f = fitted
        raw_fit = f["fits"][1]
        cdesign = design_matrix(f["grid"], 2, centering=np.zeros(2), loc=f["loc"],
                                scale=f["scale"])
        target = TiltTarget.from_counts(sum(s.counts for s in f["s"][1]), f["grid"].width)
        cfit = fit_tilt(target, f["carrier"], cdesign)
        raw = sandwich_pieces(f["design"], f["carrier"], raw_fit, f["layout"], 1)
        cen = sandwich_pieces(cdesign, f["carrier"], cfit, f["layout"], 1)
        np.testing.assert_allclose(cen.g, raw.g[1:, 1:], rtol=1e-7)
        np.testing.assert_allclose(cen.z_own, raw.z_own[1:], rtol=1e-7, atol=1e-15)
        np.testing.assert_allclose(cen.z_other, raw.z_other[1:], rtol=1e-7, atol=1e-15)

    def test_singular_g(self):
        p = SandwichPieces(np.zeros((2, 2)), np.ones((2, 3)), np.ones((2, 3)), False)
        with pytest.raises(SingularG):
            p.bread_solve(p.z_own)
        p = SandwichPieces(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]]), np.ones((2, 3)),
                           np.ones((2, 3)), False)
        with pytest.raises(SingularG):
            p.bread_solve(p.z_own)


# ------------------------------------------------------------------ #
# sigma estimators
# ------------------------------------------------------------------ #


class TestSigma:
    def _pieces(self, f):
        return [sandwich_pieces(f["design"], f["carrier"], fit, f["layout"], g)
                for g, fit in zip((0, 1), f["fits"])]

    def test_zero_counts_cov(self, fitted):
        p1, p2 = self._pieces(fitted)
        z = CountsCov(np.zeros((60, 60)))
        np.testing.assert_array_equal(sigma_group_diff(p1, p2, z, z).sigma, 0)

    def test_bilinear_scaling(self, fitted):
        p1, p2 = self._pieces(fitted)
        c1, c2 = group_counts_cov(fitted["s"][0]), group_counts_cov(fitted["s"][1])
        base = sigma_group_diff(p1, p2, c1, c2).sigma
        scaled = sigma_group_diff(p1, p2, CountsCov(9 * c1.matrix), CountsCov(9 * c2.matrix))
        np.testing.assert_allclose(scaled.sigma, 9 * base, rtol=1e-12)
        _psd_sym(base)

    def test_group_sigma_psd(self, fitted):
        p1, _ = self._pieces(fitted)
        c1, c2 = group_counts_cov(fitted["s"][0]), group_counts_cov(fitted["s"][1])
        _psd_sym(sigma_group(p1, c1, c2).sigma)

    def test_centered_matches_submatrix(self, fitted):
        f = fitted
        cfits = [fit_group_centered(s, f["carrier"], 2, f["loc"], f["scale"]) for s in f["s"]]
        cp = [sandwich_pieces(fit.design, f["carrier"], fit, f["layout"], g)
              for g, fit in zip((0, 1), cfits)]
        c1, c2 = group_counts_cov(f["s"][0]), group_counts_cov(f["s"][1])
        full = sigma_group_diff(*self._pieces(f), c1, c2).sigma
        cen = sigma_centered_diff(cp[0], cp[1], c1, c2).sigma
        np.testing.assert_allclose(cen, full[1:, 1:], rtol=1e-7)
        with pytest.raises(ValueError):
            sigma_centered_diff(*self._pieces(f), c1, c2)

    def test_individual_reduces_to_glm_sandwich(self, fitted, rng):
        f = fitted
        s = f["s"][0][0]
        fit = fit_individual(s, f["carrier"], f["design"])
        K = f["grid"].k
        pieces = sandwich_pieces(f["design"], f["carrier"], fit, own_total=s.total,
                                 smoother_derivative=np.zeros((K, K)))
        cov = within_counts_cov([s])
        X = f["design"].matrix
        lam = s.total * fit.fitted  # Poisson means on the raw-count scale
        bread = np.linalg.inv(X.T @ (lam[:, None] * X))
        classical = bread @ X.T @ cov.matrix @ X @ bread
        np.testing.assert_allclose(sigma_individual(pieces, cov).sigma, classical,
                                   rtol=1e-8, atol=1e-14)

    def test_individual_with_others_psd(self, fitted):
        f = fitted
        s = f["s"][0][2]
        fit = fit_individual(s, f["carrier"], f["design"])
        pieces = sandwich_pieces(f["design"], f["carrier"], fit, own_total=s.total)
        others = within_counts_cov([x for x in f["s"][0] + f["s"][1] if x is not s])
        _psd_sym(sigma_individual(pieces, within_counts_cov([s]), others).sigma)

    def test_carrier_reuse_reduces_variance(self, rng):
        # one individual is the whole pool, so its carrier moves with its counts
        grid = BinGrid(np.linspace(-3, 3, 21))
        vals = np.clip(rng.normal(size=400), -2.99, 2.99)
        s = BinnedSample(np.histogram(vals, grid.edges)[0], 400, 0, grid)
        carrier = pooled_carrier([s], smoothing_matrix(grid, 0.4))
        design = design_matrix(grid, 2)
        fit = fit_individual(s, carrier, design)
        cov = within_counts_cov([s])
        with_smoother = sigma_individual(
            sandwich_pieces(design, carrier, fit, own_total=400.0), cov).sigma
        without = sigma_individual(
            sandwich_pieces(design, carrier, fit, own_total=400.0,
                            smoother_derivative=np.zeros((20, 20))), cov).sigma
        assert np.all(np.diag(with_smoother) - np.diag(without) <= 1e-12)

    def test_engine_paths_agree(self, pg_groups):
        c = sef_test(*pg_groups, path="centered").test.statistic
        s = sef_test(*pg_groups, path="submatrix").test.statistic
        assert c == pytest.approx(s, rel=1e-6)
