import numpy as np

from sefdensity import plotting
from sefdensity.simgen import Calibration, PowerRow


def _is_png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestFigures:
    def test_density(self, tmp_path):
        x = np.linspace(-3, 3, 50)
        curves = (np.exp(-x**2 / 2), np.exp(-x**2 / 3))
        path = plotting.density_figure("g1", x, curves, ("A", "B"), tmp_path / "a" / "d.png",
                                       p_value=0.012)
        assert path.exists() and _is_png(path)

    def test_qq(self, tmp_path):
        cal = Calibration(np.random.default_rng(0).uniform(size=200))
        path = plotting.qq_figure(cal.expected, cal.observed, tmp_path / "qq.png")
        assert _is_png(path)

    def test_power(self, tmp_path):
        rows = [PowerRow("s", m, v, r, 0, 10) for m in ("sef", "t")
                for v, r in ((1.0, 0.05), (2.0, 0.6))]
        path = plotting.power_figure(rows, tmp_path / "p.png", alpha=0.05)
        assert _is_png(path)
