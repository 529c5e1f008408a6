"""Run configuration: defaults, ``key=value`` files and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..covariance import COUNTS_COV_ESTIMATORS
from ..errors import ParseError
from .preprocess import FilterThresholds

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """Settings for a differential density run.

    Keys accepted in a config file are the field names below; ``#`` starts a
    comment.  ``library_reference`` of ``median`` (the default) scales every
    cell to the median library size.
    """

    k: int = 100
    p: int = 2
    alpha: float = 0.05
    bandwidth_delta: float = 0.0
    min_cells: int = 100
    min_nonzero_frac: float = 0.2
    min_donors: int = 50
    seed: int = 0
    threads: int = 1
    normalize: bool = True
    sqrt: bool = True
    library_reference: float | None = None
    counts_cov: str = "between"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not 1 <= self.p <= 4:
            raise ValueError("p must lie in 1..4")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.bandwidth_delta < 0:
            raise ValueError("bandwidth_delta must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.counts_cov not in COUNTS_COV_ESTIMATORS:
            raise ValueError(f"counts_cov must be one of {COUNTS_COV_ESTIMATORS}")
        if self.library_reference is not None and not self.library_reference > 0:
            raise ValueError("library_reference must be positive")

    @property
    def thresholds(self) -> FilterThresholds:
        return FilterThresholds(self.min_cells, self.min_nonzero_frac, self.min_donors)

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _convert(name: str, text: str):
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    if "bool" in ftype:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if name == "library_reference":
        return None if text.lower() == "median" else float(text)
    if ftype == "int":
        return int(text)
    if ftype == "float":
        return float(text)
    return text


def parse_config(text: str) -> dict:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ParseError(f"unknown config key {key!r}", lineno)
        try:
            out[key] = _convert(key, value)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", lineno, line.index("=") + 2) from None
    return out


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then non-None overrides."""
    values = parse_config(Path(path).read_text()) if path is not None else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
