"""Per-gene differential density testing over a multi-individual dataset."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from ..covariance import CovarianceEstimate
from ..engine import sef_test
from ..errors import (
    DegenerateInput,
    EmptyInput,
    InvalidBandwidth,
    NonConvergence,
    SefError,
    SingularG,
    SingularHessian,
    SingularSigma,
    TooFewIndividuals,
)
from ..inference import TestResult, bh_adjust
from .config import RunConfig
from .io import RawCounts, write_table
from .preprocess import filter_gene, normalize_library_size, sqrt_transform

log = logging.getLogger(__name__)

STATUSES = ("ok", "singular", "nonconverged", "filtered")
_FILTERED = (DegenerateInput, EmptyInput, InvalidBandwidth, TooFewIndividuals)
_SINGULAR = (SingularHessian, SingularG, SingularSigma)


# ------------------------------------------------------------------ #
# Dataset
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class Dataset:
    """Library-normalized counts grouped by individual.

    ``individuals`` holds ``(id, group, cell count)`` in first-seen order;
    ``cell_owner[c]`` is the index into ``individuals`` of cell ``c``.
    Values are stored untransformed; :meth:`values` applies the
    square-root transform when ``sqrt`` is set.
    """

    genes: tuple
    individuals: tuple
    matrix: sparse.csr_matrix = field(repr=False)
    cell_owner: np.ndarray = field(repr=False)
    sqrt: bool = True

    @property
    def groups(self) -> dict:
        return {ind: grp for ind, grp, _ in self.individuals}

    @property
    def group_labels(self) -> tuple:
        return tuple(sorted(set(self.groups.values())))

    def gene_index(self, gene) -> int:
        try:
            return self.genes.index(gene)
        except ValueError:
            raise KeyError(f"unknown gene {gene!r}") from None

    def counts(self, gene) -> dict:
        """individual -> per-cell (normalized, untransformed) values."""
        row = self.matrix[self.gene_index(gene)].toarray().ravel()
        return {ind: row[self.cell_owner == j] for j, (ind, _, _) in enumerate(self.individuals)}

    def values(self, gene) -> dict:
        """individual -> per-cell values on the analysis scale."""
        c = self.counts(gene)
        return {i: sqrt_transform(v) for i, v in c.items()} if self.sqrt else c

    def relabel(self, groups: dict) -> "Dataset":
        inds = tuple((i, groups[i], m) for i, _, m in self.individuals)
        return Dataset(self.genes, inds, self.matrix, self.cell_owner, self.sqrt)


def build_dataset(raw: RawCounts, config: RunConfig | None = None) -> Dataset:
    """Normalize library sizes (if configured) and index cells by individual."""
    config = config or RunConfig()
    if config.normalize:
        raw = normalize_library_size(raw, config.library_reference)
    order = raw.individuals
    index = {ind: j for j, ind in enumerate(order)}
    owner = np.array([index[i] for i in raw.individual], dtype=int)
    groups = {}
    for ind, grp in zip(raw.individual, raw.group):
        if groups.setdefault(ind, grp) != grp:
            raise DegenerateInput(f"individual {ind!r} appears in groups "
                                  f"{groups[ind]!r} and {grp!r}")
    labels = sorted(set(groups.values()))
    if len(labels) != 2:
        raise DegenerateInput(f"need exactly two groups, found {len(labels)}: {labels}")
    sizes = np.bincount(owner, minlength=len(order))
    inds = tuple((ind, groups[ind], int(sizes[j])) for j, ind in enumerate(order))
    return Dataset(raw.genes, inds, sparse.csr_matrix(raw.matrix), owner, config.sqrt)


# ------------------------------------------------------------------ #
# Per-gene test
# ------------------------------------------------------------------ #


@dataclass
class GeneResult:
    gene: str
    status: str
    n1: int = 0
    n2: int = 0
    m1_total: int = 0
    m2_total: int = 0
    k: int = 0
    p: int = 0
    beta_diff: np.ndarray | None = None
    test: TestResult | None = None
    p_adj: float = float("nan")
    fits: tuple = field(default=(), repr=False)
    sigma: CovarianceEstimate | None = field(default=None, repr=False)
    midpoints: np.ndarray | None = field(default=None, repr=False)
    curves: tuple = field(default=(), repr=False)
    message: str = ""

    @property
    def p_value(self) -> float:
        return self.test.p_value if self.test is not None else float("nan")

    @property
    def statistic(self) -> float:
        return self.test.statistic if self.test is not None else float("nan")


def test_groups(gene: str, group1: Sequence, group2: Sequence,
                config: RunConfig) -> GeneResult:
    """SEF test of one gene from per-individual value vectors of each group."""
    base = dict(n1=len(group1), n2=len(group2),
                m1_total=int(sum(len(v) for v in group1)),
                m2_total=int(sum(len(v) for v in group2)),
                k=config.k, p=config.p)
    try:
        out = sef_test(group1, group2, k=config.k, p=config.p, delta=config.bandwidth_delta,
                       alpha=config.alpha, counts_cov=config.counts_cov)
    except NonConvergence as exc:
        return GeneResult(gene, "nonconverged", message=str(exc), **base)
    except _SINGULAR as exc:
        return GeneResult(gene, "singular", message=str(exc), **base)
    except _FILTERED as exc:
        return GeneResult(gene, "filtered", message=str(exc), **base)
    return GeneResult(gene, "ok", beta_diff=out.beta_diff, test=out.test, fits=out.fits,
                      sigma=out.sigma, midpoints=out.grid.midpoints, curves=out.curves(),
                      **base)


test_groups.__test__ = False  # not a pytest test


def analyze_gene(dataset: Dataset, gene: str, config: RunConfig) -> GeneResult:
    """Filter, transform and test one gene of ``dataset``."""
    counts = dataset.counts(gene)
    groups = dataset.groups
    outcome = filter_gene(counts, groups, config.thresholds)
    if not outcome.kept:
        return GeneResult(gene, "filtered", k=config.k, p=config.p, message=outcome.reason)
    g1_label, g2_label = dataset.group_labels
    transform = sqrt_transform if dataset.sqrt else np.asarray
    g1 = [transform(counts[i]) for i in outcome.individuals if groups[i] == g1_label]
    g2 = [transform(counts[i]) for i in outcome.individuals if groups[i] == g2_label]
    return test_groups(gene, g1, g2, config)


def adjust(results: list) -> list:
    """Fill ``p_adj`` by Benjamini-Hochberg over the genes with a p-value."""
    ok = [r for r in results if r.status == "ok"]
    if ok:
        for r, q in zip(ok, bh_adjust([r.p_value for r in ok])):
            r.p_adj = float(q)
    return results


def run_differential(dataset: Dataset, config: RunConfig,
                     genes: Sequence | None = None) -> list:
    """Test every gene (or ``genes``), sorted by gene id, BH-adjusted.

    Genes are processed on ``config.threads`` worker threads; each gene's
    computation is self-contained, so results do not depend on the count.
    """
    genes = sorted(dataset.genes if genes is None else genes)
    work = lambda g: analyze_gene(dataset, g, config)  # noqa: E731
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(work, genes))
    else:
        results = [work(g) for g in genes]
    for r in results:
        if r.status not in ("ok", "filtered"):
            log.warning("gene %s: %s (%s)", r.gene, r.status, r.message)
    return adjust(results)


def all_failed_numerically(results: Sequence) -> bool:
    """True when every gene that reached the fit failed numerically."""
    tested = [r for r in results if r.status != "filtered"]
    return bool(tested) and all(r.status in ("singular", "nonconverged") for r in tested)


# ------------------------------------------------------------------ #
# Label-permutation diagnostic
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class PermutationRun:
    index: int
    groups: dict
    results: tuple

    def false_positive_rate(self, alpha: float) -> float:
        p = np.array([r.p_value for r in self.results if r.status == "ok"])
        return float(np.mean(p < alpha)) if p.size else float("nan")


def permuted_groups(dataset: Dataset, seed: int, index: int) -> dict:
    """Shuffle group labels across individuals, keeping group sizes."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    ids = [i for i, _, _ in dataset.individuals]
    labels = [g for _, g, _ in dataset.individuals]
    return dict(zip(ids, rng.permutation(labels).tolist()))


def run_permutations(dataset: Dataset, config: RunConfig, n_perm: int,
                     genes: Sequence | None = None) -> list:
    """Re-run the analysis ``n_perm`` times with shuffled labels."""
    if n_perm < 1:
        raise ValueError("n_perm must be at least 1")
    runs = []
    for b in range(n_perm):
        groups = permuted_groups(dataset, config.seed, b)
        res = run_differential(dataset.relabel(groups), config, genes)
        runs.append(PermutationRun(b, groups, tuple(res)))
    return runs


# ------------------------------------------------------------------ #
# Writers
# ------------------------------------------------------------------ #


def results_header(p: int) -> list:
    return (["gene", "n1", "n2", "m1_total", "m2_total", "K", "p"]
            + [f"beta_diff_{j}" for j in range(1, p + 1)]
            + ["statistic", "df", "p_value", "p_adj", "status"])


def result_row(r: GeneResult, p: int) -> list:
    beta = list(r.beta_diff) if r.beta_diff is not None else [None] * p
    df = r.test.df if r.test is not None else "NA"
    return ([r.gene, r.n1, r.n2, r.m1_total, r.m2_total, r.k, r.p] + [float(b) if b is not None
            else None for b in beta] + [float(r.statistic), df, float(r.p_value),
            float(r.p_adj), r.status])


def write_results(path, results: Sequence, p: int):
    return write_table(path, results_header(p), (result_row(r, p) for r in results))


def curve_rows(results: Sequence, labels: Sequence = ("group1", "group2")):
    for r in results:
        if r.status != "ok":
            continue
        for label, dens in zip(labels, r.curves):
            for y, d in zip(r.midpoints, dens):
                yield [r.gene, label, float(y), float(d)]


def write_curves(path, results: Sequence, labels: Sequence = ("group1", "group2")):
    return write_table(path, ["gene", "group", "midpoint", "density"],
                       curve_rows(results, labels))


def write_permutations(path, runs: Sequence, alpha: float):
    rows = ([run.index, "fpr", run.false_positive_rate(alpha)] for run in runs)
    return write_table(path, ["permutation", "measure", "value"], rows)


# ------------------------------------------------------------------ #
# Synthetic data
# ------------------------------------------------------------------ #


def synthetic_counts(n_genes: int = 50, n_per_group: int = 30, cell_range=(100, 200),
                     seed: int = 0, variance_shift: Sequence = ()) -> RawCounts:
    """A small two-group count matrix with Poisson-Gamma expression.

    Each gene has its own mean (1 to 10) and dispersion; each individual's
    rate is Gamma-distributed around it and cells add log-normal library-size
    noise.  Genes whose index is in ``variance_shift`` get a 1.6x larger
    between-individual variance in the second group.
    """
    rng = np.random.default_rng(seed)
    n = 2 * n_per_group
    m = rng.integers(cell_range[0], cell_range[1] + 1, size=n)
    owner = np.repeat(np.arange(n), m)
    depth = rng.lognormal(0.0, 0.2, size=owner.size)
    means = rng.uniform(1.0, 10.0, size=n_genes)
    extra = rng.uniform(0.2, 1.0, size=n_genes)  # between-individual variance / mean
    shifted = set(int(g) for g in variance_shift)
    mat = np.empty((n_genes, owner.size))
    for g in range(n_genes):
        var = np.full(n, extra[g] * means[g])
        if g in shifted:
            var[n_per_group:] *= 1.6
        shape = means[g] ** 2 / var
        lam = rng.gamma(shape, means[g] / shape)
        mat[g] = rng.poisson(lam[owner] * depth)
    cells = tuple(f"c{c}" for c in range(owner.size))
    ind = np.array([f"d{j:03d}" for j in owner], dtype=object)
    grp = np.array(["A" if j < n_per_group else "B" for j in owner], dtype=object)
    genes = tuple(f"g{g:03d}" for g in range(n_genes))
    return RawCounts(genes, cells, sparse.csr_matrix(mat), ind, grp)
