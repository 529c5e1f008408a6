"""Readers for count matrices and cell metadata, writers for result tables."""

from __future__ import annotations

import csv
import gzip
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from ..errors import MissingMetadata, ParseError

FORMATS = ("dense", "triplet")


@dataclass(frozen=True)
class RawCounts:
    """Genes x cells count matrix with each cell's individual and group."""

    genes: tuple
    cells: tuple
    matrix: sparse.csr_matrix
    individual: np.ndarray
    group: np.ndarray

    @property
    def individuals(self) -> tuple:
        return tuple(dict.fromkeys(self.individual.tolist()))

    def with_matrix(self, matrix) -> "RawCounts":
        return RawCounts(self.genes, self.cells, sparse.csr_matrix(matrix),
                         self.individual, self.group)


def _open(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", newline="")
    return open(path, "r", newline="")


def _delimiter(path) -> str:
    name = str(path).removesuffix(".gz")
    return "," if name.endswith(".csv") else "\t"


def _rows(path):
    with _open(path) as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=_delimiter(path)), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            yield lineno, [c.strip() for c in row]


def _count(text, line, col) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line, col) from None
    if not math.isfinite(v) or v < 0:
        raise ParseError(f"counts must be finite and non-negative, got {text!r}", line, col)
    return v


def read_metadata(path) -> dict:
    """cell -> (individual, group) from a table with columns cell, individual, group."""
    rows = _rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        raise ParseError("metadata file is empty") from None
    cols = [h.lower() for h in header]
    try:
        ic, ii, ig = cols.index("cell"), cols.index("individual"), cols.index("group")
    except ValueError:
        raise ParseError("metadata header must name columns cell, individual, group", line) from None
    meta = {}
    for line, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        cell = row[ic]
        if cell in meta:
            raise ParseError(f"duplicate metadata for cell {cell!r}", line, ic + 1)
        meta[cell] = (row[ii], row[ig])
    return meta


def _read_dense(path):
    rows = _rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("counts file is empty") from None
    cells = header[1:]
    if len(set(cells)) != len(cells):
        raise ParseError("duplicate cell identifiers in header", 1)
    genes, data = [], []
    for line, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        genes.append(row[0])
        data.append([_count(t, line, j + 2) for j, t in enumerate(row[1:])])
    if len(set(genes)) != len(genes):
        raise ParseError("duplicate gene identifiers")
    return genes, cells, sparse.csr_matrix(np.array(data, dtype=float).reshape(len(genes), len(cells)))


def _read_triplet(path):
    seen = {}
    gi, ci = {}, {}
    rows_, cols_, vals = [], [], []
    for line, row in _rows(path):
        if len(row) != 3:
            raise ParseError(f"triplet lines need 3 fields, got {len(row)}", line)
        if not seen and not gi and row[2].lower() in ("count", "counts", "value"):
            continue  # header
        gene, cell = row[0], row[1]
        v = _count(row[2], line, 3)
        key = (gene, cell)
        if key in seen:
            raise ParseError(f"duplicate triplet for gene {gene!r}, cell {cell!r} "
                             f"(first on line {seen[key]})", line)
        seen[key] = line
        rows_.append(gi.setdefault(gene, len(gi)))
        cols_.append(ci.setdefault(cell, len(ci)))
        vals.append(v)
    mat = sparse.csr_matrix((vals, (rows_, cols_)), shape=(len(gi), len(ci)), dtype=float)
    return list(gi), list(ci), mat


def load_counts(path, metadata, fmt: str = "triplet") -> RawCounts:
    """Read a count matrix and attach each cell's individual and group.

    ``fmt='dense'``: header row of cell ids, then one row per gene.
    ``fmt='triplet'``: one ``gene, cell, count`` line per non-zero entry.
    Triplet columns follow the metadata's cell order, and metadata cells that
    never appear in a triplet are kept as all-zero columns.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    meta = metadata if isinstance(metadata, dict) else read_metadata(metadata)
    genes, cells, mat = (_read_dense if fmt == "dense" else _read_triplet)(path)
    missing = [c for c in cells if c not in meta]
    if missing:
        raise MissingMetadata(f"{len(missing)} cell(s) without metadata, e.g. {missing[0]!r}")
    if fmt == "triplet":
        # columns follow the metadata; cells without triplets are all-zero
        order = list(meta)
        pos = {c: j for j, c in enumerate(order)}
        coo = mat.tocoo()
        cols = np.array([pos[cells[c]] for c in coo.col], dtype=int)
        mat = sparse.csr_matrix((coo.data, (coo.row, cols)), shape=(len(genes), len(order)))
        cells = order
    unlabeled = [c for c in cells if not meta[c][0] or not meta[c][1]]
    if unlabeled:
        raise MissingMetadata(f"cell {unlabeled[0]!r} has no individual or group label")
    ind = np.array([meta[c][0] for c in cells], dtype=object)
    grp = np.array([meta[c][1] for c in cells], dtype=object)
    return RawCounts(tuple(genes), tuple(cells), mat, ind, grp)


def fmt_float(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return format(float(x), ".10g")


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) or v is None else v
                        for v in row])
    return path


def write_counts(raw: RawCounts, counts_path, metadata_path, fmt: str = "triplet") -> None:
    """Write ``raw`` in a layout :func:`load_counts` reads back."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    mat = raw.matrix.tocoo() if fmt == "triplet" else raw.matrix.toarray()
    num = lambda v: format(float(v), ".17g")  # noqa: E731
    if fmt == "triplet":
        order = np.lexsort((mat.col, mat.row))
        rows = ([raw.genes[mat.row[j]], raw.cells[mat.col[j]], num(mat.data[j])] for j in order)
        write_table(counts_path, ["gene", "cell", "count"], rows)
    else:
        rows = ([g] + [num(v) for v in mat[i]] for i, g in enumerate(raw.genes))
        write_table(counts_path, ["gene", *raw.cells], rows)
    write_table(metadata_path, ["cell", "individual", "group"],
                zip(raw.cells, raw.individual, raw.group))
