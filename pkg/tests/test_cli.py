import subprocess
import sys

import numpy as np
import pytest

from sefdensity import __version__
from sefdensity.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from sefdensity.errors import SingularSigma
from sefdensity.pipeline import runner
from sefdensity.pipeline.io import write_counts
from sefdensity.pipeline.runner import synthetic_counts


@pytest.fixture
def files(tmp_path):
    raw = synthetic_counts(4, 15, (30, 60), seed=5, variance_shift=[0])
    counts, meta = tmp_path / "counts.tsv", tmp_path / "meta.tsv"
    write_counts(raw, counts, meta)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("min_cells=0\nmin_nonzero_frac=0\nmin_donors=0\nk=40\n")
    return dict(counts=str(counts), meta=str(meta), cfg=str(cfg), dir=tmp_path)


def _base(files, cmd="test"):
    return [cmd, "--counts", files["counts"], "--metadata", files["meta"],
            "--config", files["cfg"], "--out", str(files["dir"] / "out")]


# ------------------------------------------------------------------ #
# test / density
# ------------------------------------------------------------------ #


class TestTestCommand:
    def test_outputs(self, files, capsys):
        assert main(_base(files) + ["--p", "3", "--figures", "--permute-labels", "2"]) == EXIT_OK
        out = files["dir"] / "out"
        rows = (out / "results.tsv").read_text().splitlines()
        assert len(rows) == 5
        header = rows[0].split("\t")
        assert header[5:10] == ["K", "p", "beta_diff_1", "beta_diff_2", "beta_diff_3"]
        first = rows[1].split("\t")
        assert first[5:7] == ["40", "3"] and first[-1] == "ok"
        assert (out / "curves.tsv").exists() and (out / "permutations.tsv").exists()
        pngs = sorted((out / "figures").glob("density_*.png"))
        assert len(pngs) == 4 and all(p.stat().st_size > 1000 for p in pngs)
        assert "4 ok" in capsys.readouterr().out

    def test_flags_override_config(self, files):
        assert main(_base(files) + ["--k", "25", "--threads", "2"]) == EXIT_OK
        first = (files["dir"] / "out" / "results.tsv").read_text().splitlines()[1].split("\t")
        assert first[5] == "25"

    def test_dense_format(self, files):
        raw = synthetic_counts(6, 6, (20, 30), seed=1)
        write_counts(raw, files["dir"] / "d.tsv", files["dir"] / "dm.tsv", "dense")
        args = ["test", "--counts", str(files["dir"] / "d.tsv"), "--metadata",
                str(files["dir"] / "dm.tsv"), "--format", "dense", "--config", files["cfg"],
                "--out", str(files["dir"] / "dense")]
        assert main(args) == EXIT_OK

    def test_all_genes_failing_numerically(self, files, monkeypatch):
        def boom(*a, **k):
            raise SingularSigma("forced")
        monkeypatch.setattr(runner, "sef_test", boom)
        assert main(_base(files)) == EXIT_NUMERIC
        assert "singular" in (files["dir"] / "out" / "results.tsv").read_text()

    def test_input_errors(self, files, capsys):
        args = _base(files)
        args[2] = str(files["dir"] / "missing.tsv")
        assert main(args) == EXIT_INPUT
        (files["dir"] / "bad.tsv").write_text("g1\tc0\tseven\n")
        args[2] = str(files["dir"] / "bad.tsv")
        assert main(args) == EXIT_INPUT
        assert "line 1" in capsys.readouterr().err
        (files["dir"] / "bad.cfg").write_text("k=1\n")
        args = _base(files)
        args[6] = str(files["dir"] / "bad.cfg")
        assert main(args) == EXIT_INPUT

    def test_usage_errors(self, files):
        with pytest.raises(SystemExit) as ei:
            main(["test", "--counts", files["counts"]])
        assert ei.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as ei:
            main(["frobnicate"])
        assert ei.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as ei:
            main(_base(files) + ["--k", "many"])
        assert ei.value.code == EXIT_USAGE


class TestDensityCommand:
    def test_curves(self, files):
        assert main(_base(files, "density") + ["--genes", "g001,g000", "--figures"]) == EXIT_OK
        lines = (files["dir"] / "out" / "curves.tsv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2 * 40
        assert lines[1].startswith("g001\tA\t")
        dens = np.array([float(l.split("\t")[3]) for l in lines[1:41]])
        mids = np.array([float(l.split("\t")[2]) for l in lines[1:41]])
        assert np.sum(dens) * (mids[1] - mids[0]) == pytest.approx(1.0, abs=1e-8)
        assert len(list((files["dir"] / "out" / "figures").glob("*.png"))) == 2

    def test_unknown_gene(self, files):
        assert main(_base(files, "density") + ["--genes", "nope"]) == EXIT_USAGE


# ------------------------------------------------------------------ #
# simulate / version
# ------------------------------------------------------------------ #


class TestSimulateCommand:
    def test_null(self, tmp_path, capsys):
        args = ["simulate", "--scenario", "null_pg", "--replicates", "4", "--n", "10",
                "--cells", "30", "60", "--methods", "sef,t", "--out", str(tmp_path), "--figures"]
        assert main(args) == EXIT_OK
        cal = (tmp_path / "calibration.tsv").read_text().splitlines()
        assert len(cal) == 3 and cal[0].startswith("scenario\tmethod\trejection_rate")
        assert len((tmp_path / "pvalues.tsv").read_text().splitlines()) == 1 + 8
        assert (tmp_path / "figures" / "qq_null_pg_sef.png").exists()
        assert "sef: rejection rate" in capsys.readouterr().out

    def test_power(self, tmp_path):
        args = ["simulate", "--scenario", "zinb_dispersion_shift", "--values", "1,3",
                "--replicates", "3", "--n", "10", "--cells", "30", "60", "--methods", "sef",
                "--out", str(tmp_path), "--figures"]
        assert main(args) == EXIT_OK
        rows = (tmp_path / "power.tsv").read_text().splitlines()
        assert len(rows) == 3 and rows[1].split("\t")[:3] == ["zinb_dispersion_shift", "1", "sef"]
        assert (tmp_path / "figures" / "power_zinb_dispersion_shift.png").exists()

    def test_bad_method(self, tmp_path):
        args = ["simulate", "--scenario", "null_pg", "--methods", "sef,wilcoxon",
                "--out", str(tmp_path)]
        assert main(args) == EXIT_USAGE


def test_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == __version__


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sefdensity.cli", "version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
