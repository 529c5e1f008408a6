"""Command-line interface: ``sefdensity {test,simulate,density,version}``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 numerical failure
affecting every tested gene.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateInput,
    MissingMetadata,
    NegativeInput,
    ParseError,
    ZeroLibrary,
)
from .pipeline.config import load_config
from .pipeline.io import FORMATS, load_counts, write_table
from .pipeline.runner import (
    all_failed_numerically,
    analyze_gene,
    build_dataset,
    run_differential,
    run_permutations,
    write_curves,
    write_permutations,
    write_results,
)
from .simgen import (
    METHODS,
    PRESETS,
    ExperimentConfig,
    null_calibration,
    poisson_gamma_generator,
    power_experiment,
    zinb_generator,
)

log = logging.getLogger("sefdensity")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
INPUT_ERRORS = (ParseError, MissingMetadata, ZeroLibrary, NegativeInput, DegenerateInput,
                OSError)
NULL_SCENARIOS = {
    "null_pg": lambda: poisson_gamma_generator(10.0, 15.0),
    "null_zinb": lambda: zinb_generator(),
}
FIGURE_GENES = 12


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ #
# Argument parsing
# ------------------------------------------------------------------ #


def _data_args(sp):
    sp.add_argument("--counts", required=True, help="count matrix (dense table or triplets)")
    sp.add_argument("--metadata", required=True, help="table with columns cell, individual, group")
    sp.add_argument("--format", choices=FORMATS, default="triplet", help="counts file layout")
    sp.add_argument("--config", help="key=value settings file; flags override it")
    sp.add_argument("--k", type=int, help="number of bins")
    sp.add_argument("--p", type=int, help="polynomial degree of the tilt")
    sp.add_argument("--alpha", type=float, help="test level")
    sp.add_argument("--seed", type=int, help="seed for label permutations")
    sp.add_argument("--threads", type=int, help="worker threads over genes")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--figures", action="store_true", help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sefdensity", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="per-gene differential density tests")
    _data_args(t)
    t.add_argument("--permute-labels", type=int, default=0, metavar="N",
                   help="additionally run N label-permuted analyses (diagnostic)")

    d = sub.add_parser("density", help="fitted group density curves for chosen genes")
    _data_args(d)
    d.add_argument("--genes", required=True, help="comma-separated gene ids")

    s = sub.add_parser("simulate", help="power and null-calibration experiments")
    s.add_argument("--scenario", required=True,
                   choices=sorted(NULL_SCENARIOS) + sorted(PRESETS))
    s.add_argument("--replicates", type=int, default=300)
    s.add_argument("--n", type=int, default=100, help="individuals per group")
    s.add_argument("--cells", type=int, nargs=2, default=(300, 1000), metavar=("LO", "HI"),
                   help="range of cells per individual")
    s.add_argument("--methods", default=",".join(METHODS),
                   help=f"comma-separated subset of {','.join(METHODS)}")
    s.add_argument("--values", help="comma-separated scenario values (overrides the preset grid)")
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--figures", action="store_true", help="also render PNG figures")

    sub.add_parser("version", help="print the version")
    return ap


# ------------------------------------------------------------------ #
# Commands
# ------------------------------------------------------------------ #


def _load(args):
    config = load_config(args.config, k=args.k, p=args.p, alpha=args.alpha, seed=args.seed,
                         threads=args.threads)
    raw = load_counts(args.counts, args.metadata, args.format)
    return config, build_dataset(raw, config)


def _density_figures(results, labels, outdir):
    from . import plotting

    ok = sorted((r for r in results if r.status == "ok"), key=lambda r: (r.p_value, r.gene))
    for r in ok[:FIGURE_GENES]:
        plotting.density_figure(r.gene, r.midpoints, r.curves, labels,
                                outdir / "figures" / f"density_{r.gene}.png", r.p_value)


def cmd_test(args) -> int:
    config, dataset = _load(args)
    out = Path(args.out)
    results = run_differential(dataset, config)
    write_results(out / "results.tsv", results, config.p)
    write_curves(out / "curves.tsv", results, dataset.group_labels)
    counts = {s: sum(r.status == s for r in results) for s in ("ok", "singular", "nonconverged",
                                                               "filtered")}
    print(f"{len(results)} genes: " + ", ".join(f"{v} {k}" for k, v in counts.items()))
    if args.figures:
        _density_figures(results, dataset.group_labels, out)
    if args.permute_labels:
        runs = run_permutations(dataset, config, args.permute_labels)
        write_permutations(out / "permutations.tsv", runs, config.alpha)
        fpr = [r.false_positive_rate(config.alpha) for r in runs]
        print(f"label permutations: mean false-positive rate {np.nanmean(fpr):.4f} "
              f"at alpha={config.alpha} over {len(runs)} runs")
    if all_failed_numerically(results):
        log.error("every tested gene failed numerically")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_density(args) -> int:
    config, dataset = _load(args)
    genes = [g.strip() for g in args.genes.split(",") if g.strip()]
    unknown = [g for g in genes if g not in dataset.genes]
    if unknown:
        raise UsageError(f"unknown gene(s): {', '.join(unknown)}")
    results = [analyze_gene(dataset, g, config) for g in genes]
    out = Path(args.out)
    write_curves(out / "curves.tsv", results, dataset.group_labels)
    for r in results:
        if r.status != "ok":
            print(f"{r.gene}: {r.status} ({r.message})")
    if args.figures:
        _density_figures(results, dataset.group_labels, out)
    if all_failed_numerically(results):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if set(methods) - set(METHODS):
        raise UsageError(f"methods must be among {METHODS}")
    config = ExperimentConfig(n_per_group=(args.n, args.n), cell_count_range=tuple(args.cells),
                              replicates=args.replicates, alpha=args.alpha, seed=args.seed,
                              methods=methods, p=args.p, k=args.k)
    out = Path(args.out)
    if args.scenario in NULL_SCENARIOS:
        gen = NULL_SCENARIOS[args.scenario]()
        rows, pv_rows = [], []
        for m in methods:
            cal = null_calibration(replace(config, methods=(m,)), gen, m)
            rows.append([args.scenario, m, cal.rejection_rate(args.alpha), cal.ks_distance,
                         int(np.sum(~np.isfinite(cal.p_values))), args.replicates])
            pv_rows += [[m, r, float(p)] for r, p in enumerate(cal.p_values)]
            print(f"{m}: rejection rate {rows[-1][2]:.4f}, KS distance {rows[-1][3]:.4f}")
            if args.figures:
                from . import plotting
                plotting.qq_figure(cal.expected, cal.observed,
                                   out / "figures" / f"qq_{args.scenario}_{m}.png",
                                   f"{args.scenario}: {m}")
        write_table(out / "calibration.tsv", ["scenario", "method", "rejection_rate",
                                              "ks_distance", "failures", "replicates"], rows)
        write_table(out / "pvalues.tsv", ["method", "replicate", "p_value"], pv_rows)
        return EXIT_OK
    values = None
    if args.values:
        values = [float(v) for v in args.values.split(",")]
    scenarios = PRESETS[args.scenario]() if values is None else PRESETS[args.scenario](values)
    rows = power_experiment(config, scenarios)
    write_table(out / "power.tsv", ["scenario", "value", "method", "rate", "failures",
                                    "replicates"],
                ([r.scenario, float(r.value), r.method, r.rate, r.failures, r.replicates]
                 for r in rows))
    for r in rows:
        print(f"{r.scenario} value={r.value:.4g} {r.method}: {r.rate:.4f}")
    if args.figures:
        from . import plotting
        plotting.power_figure(rows, out / "figures" / f"power_{args.scenario}.png", args.alpha)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "density": cmd_density, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sefdensity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"sefdensity: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # invalid settings (config file values or flags)
        print(f"sefdensity: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
