"""Continual-learning metrics from a task accuracy matrix.

``A[i][j]`` is the accuracy on task ``i`` after learning task ``j`` (only
``j >= i`` is meaningful). Arithmetic is done in exact rationals over the
decimal values of the entries, so hand-checkable inputs give exact outputs.
"""

from __future__ import annotations

import csv
from fractions import Fraction

import numpy as np

from .errors import DomainError, ParseError, StructuralError


def _exact(x) -> Fraction:
    return Fraction(repr(float(x)))


def compute_cl_metrics(A) -> dict:
    """FAA, AAA, Forgetting and Stability; the last two need at least two tasks."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise StructuralError(f"accuracy matrix must be square and non-empty, got {A.shape}")
    T = A.shape[0]
    for i in range(T):
        for j in range(i, T):
            if not 0.0 <= A[i, j] <= 1.0:
                raise DomainError(f"accuracy A[{i}][{j}] = {A[i, j]} outside [0, 1]")
    Q = [[_exact(A[i, j]) if j >= i else None for j in range(T)] for i in range(T)]

    aa = [sum(Q[i][t] for i in range(t + 1)) / (t + 1) for t in range(T)]
    out = {
        "AA": [float(a) for a in aa],
        "FAA": float(aa[-1]),
        "AAA": float(sum(aa) / T),
    }
    if T >= 2:
        forgetting = sum(max(Q[i][j] for j in range(i, T)) - Q[i][T - 1] for i in range(T - 1)) / (T - 1)
        stability = sum(sum(Q[i][t] for i in range(t)) / t for t in range(1, T)) / (T - 1)
        out["Forgetting"] = float(forgetting)
        out["Stability"] = float(stability)
    return out


def load_accuracy_csv(path) -> np.ndarray:
    """Read T rows; row ``t`` holds accuracies on tasks ``1..t`` after learning task ``t``.

    Entries above the diagonal (tasks not yet seen) are ignored and may be
    blank. An optional non-numeric header row is skipped. The result is
    returned in ``A[task][after]`` orientation.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                float(rec[0])
            except ValueError:
                if not rows and lineno == 1:
                    continue
                raise ParseError(f"{path}: row {lineno}: {rec[0]!r} is not a number") from None
            rows.append((lineno, rec))
    T = len(rows)
    if T == 0:
        raise ParseError(f"{path}: no accuracy rows")
    A = np.full((T, T), np.nan)
    for t, (lineno, rec) in enumerate(rows):
        if len(rec) < t + 1:
            raise StructuralError(f"{path}: row {lineno} needs at least {t + 1} entries, has {len(rec)}")
        for i in range(t + 1):
            try:
                A[i, t] = float(rec[i])
            except ValueError:
                raise ParseError(f"{path}: row {lineno} column {i + 1}: {rec[i]!r} is not a number") from None
    return A
