"""Embedding matrices: file I/O, l2 normalisation, distances and kNN lists.

Two on-disk formats are supported:

* ``csv`` -- no header, one point per line, comma separated floats.
* ``bin`` -- ``b"MERSEMB1"`` magic, ``uint32`` n, ``uint32`` d (little endian),
  then ``n*d`` little-endian float32 values in row-major order.

Row positions double as point ids unless ids are given explicitly; every
tie-break in the package resolves to the lower position.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    BudgetError,
    DegenerateInputError,
    ParseError,
    StructuralError,
)

BIN_MAGIC = b"MERSEMB1"
_BIN_HEADER = struct.Struct("<8sII")

METRICS = ("cosine", "euclidean")


@dataclass
class EmbeddingView:
    """n x d feature matrix for one embedding space."""

    points: np.ndarray
    ids: np.ndarray = None
    name: str = "view"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise StructuralError(f"embedding {self.name!r} must be a non-empty 2-D matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise DegenerateInputError(f"embedding {self.name!r} has a non-finite entry in row {bad}")
        self.points = pts
        if self.ids is None:
            self.ids = np.arange(pts.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(self.ids, dtype=np.int64)
            if ids.shape != (pts.shape[0],):
                raise StructuralError(f"embedding {self.name!r}: {ids.size} ids for {pts.shape[0]} rows")
            if np.any(ids < 0):
                raise StructuralError(f"embedding {self.name!r}: ids must be non-negative")
            if np.unique(ids).size != ids.size:
                raise StructuralError(f"embedding {self.name!r}: ids are not unique")
            self.ids = ids

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, rows) -> "EmbeddingView":
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingView(self.points[rows], self.ids[rows], self.name)


@dataclass
class LabeledPool:
    """M aligned views over the same points plus a class label per point."""

    views: list
    labels: np.ndarray

    def __post_init__(self):
        if len(self.views) < 1:
            raise StructuralError("a pool needs at least one embedding view")
        first = self.views[0]
        for v in self.views[1:]:
            if v.n != first.n or not np.array_equal(v.ids, first.ids):
                raise StructuralError(
                    f"view {v.name!r} is not aligned with view {first.name!r} (ids or row count differ)"
                )
        names = [v.name for v in self.views]
        if len(set(names)) != len(names):
            raise StructuralError(f"duplicate view names: {names}")
        labels = np.asarray(self.labels)
        if labels.shape != (first.n,):
            raise StructuralError(f"{labels.size} labels for {first.n} points")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise StructuralError("labels must be integers")
        self.labels = labels.astype(np.int64)

    @property
    def ids(self) -> np.ndarray:
        return self.views[0].ids

    @property
    def classes(self) -> list:
        return sorted(int(c) for c in np.unique(self.labels))

    def class_rows(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def restrict(self, rows) -> "LabeledPool":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledPool([v.subset(rows) for v in self.views], self.labels[rows])


@dataclass
class DistanceMatrix:
    values: np.ndarray
    metric: str = "cosine"
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if self.metric not in METRICS:
            raise StructuralError(f"unknown metric {self.metric!r}")
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise StructuralError(f"distance matrix must be square, got {vals.shape}")
        if self._check:
            if np.any(vals < 0):
                raise StructuralError("distances must be non-negative")
            if np.any(np.diag(vals) != 0):
                raise StructuralError("distance matrix must have a zero diagonal")
            if not np.allclose(vals, vals.T, rtol=0.0, atol=1e-9):
                raise StructuralError("distance matrix is not symmetric")
        self.values = vals

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def scaled(self, c: float) -> "DistanceMatrix":
        return DistanceMatrix(self.values * c, self.metric)

    def subset(self, rows) -> "DistanceMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return DistanceMatrix(self.values[np.ix_(rows, rows)], self.metric, _check=False)


# -- file formats -----------------------------------------------------------


def load_embedding(path, format: str | None = None, name: str | None = None) -> EmbeddingView:
    """Read an (un-normalised) embedding matrix from ``path``.

    ``format`` is ``"csv"`` or ``"bin"``; when omitted it is inferred from the
    file suffix (``.bin`` means binary, anything else csv).
    """
    path = Path(path)
    fmt = format or infer_format(path)
    if name is None:
        name = path.stem
    if fmt == "csv":
        points = _read_csv(path)
    elif fmt == "bin":
        points = _read_bin(path)
    else:
        raise StructuralError(f"unknown embedding format {fmt!r}")
    return EmbeddingView(points, name=name)


def infer_format(path) -> str:
    return "bin" if Path(path).suffix.lower() == ".bin" else "csv"


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not f.strip() for f in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise StructuralError(f"{path}: row {lineno} has {len(record)} fields, expected {width}")
            try:
                rows.append([float(f) for f in record])
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_bin(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _BIN_HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(raw)} bytes, need {_BIN_HEADER.size})")
    magic, n, d = _BIN_HEADER.unpack_from(raw, 0)
    if magic != BIN_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r} at byte 0")
    expected = _BIN_HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise StructuralError(
            f"{path}: header declares {n}x{d} floats ({expected} bytes) but file has {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_BIN_HEADER.size, count=n * d)
    return data.reshape(n, d).astype(np.float64)


def save_embedding(view: EmbeddingView, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or infer_format(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in view.points:
                w.writerow([repr(float(x)) for x in row])
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(BIN_MAGIC, view.n, view.d))
            fh.write(np.ascontiguousarray(view.points, dtype="<f4").tobytes())
    else:
        raise StructuralError(f"unknown embedding format {fmt!r}")


def load_labels(path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                labels.append(int(s))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: {s!r} is not an integer label") from None
    return np.array(labels, dtype=np.int64)


# -- geometry ---------------------------------------------------------------


def l2_normalize(view: EmbeddingView) -> EmbeddingView:
    """Divide every row by its l2 norm; all-zero rows are rejected."""
    norms = np.linalg.norm(view.points, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(
            f"embedding {view.name!r}: point id {int(view.ids[zero[0]])} is an all-zero row"
        )
    out = view.points / norms[:, None]
    # A second pass makes normalisation idempotent to the last bit in practice.
    out /= np.linalg.norm(out, axis=1)[:, None]
    return EmbeddingView(out, view.ids.copy(), view.name)


def pairwise_distances(view, metric: str = "cosine") -> DistanceMatrix:
    """Dense symmetric distance matrix; cosine distance is ``1 - <u, v>``.

    ``view`` may be an :class:`EmbeddingView` or a raw 2-D array. Cosine
    assumes rows are already unit norm.
    """
    pts = view.points if isinstance(view, EmbeddingView) else np.asarray(view, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if metric == "cosine":
        gram = pts @ pts.T
        vals = 1.0 - gram
        np.clip(vals, 0.0, 2.0, out=vals)
    elif metric == "euclidean":
        vals = cdist(pts, pts, metric="euclidean")
    else:
        raise StructuralError(f"unknown metric {metric!r}")
    vals = 0.5 * (vals + vals.T)
    np.fill_diagonal(vals, 0.0)
    return DistanceMatrix(vals, metric, _check=False)


def knn(dist: DistanceMatrix, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points, one row per point.

    Rows are ordered by increasing distance; equal distances resolve to the
    lower index. The point itself is never included.
    """
    n = dist.n
    k = int(k)
    if k < 1 or k >= n:
        raise BudgetError(f"k={k} neighbours requested but only {n - 1} other points exist")
    masked = dist.values.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")
    return order[:, :k]


def knn_distances(dist: DistanceMatrix, k: int) -> np.ndarray:
    """Sorted distances to the ``k`` nearest neighbours (n x k)."""
    nbrs = knn(dist, k)
    return np.take_along_axis(dist.values, nbrs, axis=1)

