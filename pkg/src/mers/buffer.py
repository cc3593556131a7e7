"""Class-balanced replay buffer maintained across class-incremental episodes.

File layout (little endian)::

    b"MERSBUF1"            8 bytes magic
    version                1 byte (currently 1)
    header length          uint32
    header                 UTF-8 JSON: capacity, episode_index, views, classes
    blocks                 float32 rows, per class (manifest order) per view

Cached embedding rows are stored as float32 at insertion time so a save/load
round trip is lossless.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import LabeledPool
from .errors import InputError, ParseError, StructuralError
from .pipeline import SelectConfig, select_class

BUF_MAGIC = b"MERSBUF1"
BUF_VERSION = 1


class BudgetWarning(UserWarning):
    """Some classes were granted a zero budget."""


@dataclass
class ClassEntry:
    ids: list
    rows: dict  # view name -> float32 array (len(ids) x d)

    def take(self, positions) -> "ClassEntry":
        pos = np.asarray(positions, dtype=np.int64)
        return ClassEntry([self.ids[p] for p in pos], {k: v[pos] for k, v in self.rows.items()})

    def __eq__(self, other):
        return (
            isinstance(other, ClassEntry)
            and list(self.ids) == list(other.ids)
            and self.rows.keys() == other.rows.keys()
            and all(np.array_equal(self.rows[k], other.rows[k]) for k in self.rows)
        )


@dataclass
class BufferState:
    capacity: int
    view_names: list = field(default_factory=list)
    view_dims: list = field(default_factory=list)
    entries: dict = field(default_factory=dict)  # class label -> ClassEntry
    episode_index: int = -1

    @property
    def size(self) -> int:
        return sum(len(e.ids) for e in self.entries.values())

    def class_sizes(self) -> dict:
        return {c: len(e.ids) for c, e in sorted(self.entries.items())}

    def check_invariants(self) -> None:
        if self.size > self.capacity:
            raise AssertionError(f"buffer holds {self.size} > capacity {self.capacity}")
        for c, e in self.entries.items():
            if len(set(e.ids)) != len(e.ids):
                raise AssertionError(f"class {c} has duplicate ids")
            for name, dim in zip(self.view_names, self.view_dims):
                if e.rows[name].shape != (len(e.ids), dim):
                    raise AssertionError(f"class {c} view {name!r} cache has shape {e.rows[name].shape}")
        if self.entries:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BudgetWarning)
                budgets = _budget_map(self.capacity, self.entries)
            for c, e in self.entries.items():
                if len(e.ids) > budgets[c]:
                    raise AssertionError(f"class {c} holds {len(e.ids)} > budget {budgets[c]}")

    def __eq__(self, other):
        return (
            isinstance(other, BufferState)
            and self.capacity == other.capacity
            and list(self.view_names) == list(other.view_names)
            and [int(d) for d in self.view_dims] == [int(d) for d in other.view_dims]
            and self.episode_index == other.episode_index
            and self.entries.keys() == other.entries.keys()
            and all(self.entries[c] == other.entries[c] for c in self.entries)
        )


@dataclass
class EpisodeBatch:
    pool: LabeledPool | None  # None = an episode with no new data
    episode_index: int


def per_class_budget(capacity: int, classes_seen: int) -> list:
    """Even split; the remainder goes one slot each to the lowest-ranked classes."""
    if classes_seen < 1:
        raise InputError(f"need at least one class, got {classes_seen}")
    if capacity < 0:
        raise InputError(f"capacity must be non-negative, got {capacity}")
    base, rem = divmod(capacity, classes_seen)
    budgets = [base + 1 if i < rem else base for i in range(classes_seen)]
    if base == 0:
        warnings.warn(
            f"capacity {capacity} < {classes_seen} classes: {classes_seen - rem} classes get budget 0",
            BudgetWarning,
            stacklevel=2,
        )
    return budgets


def _budget_map(capacity, labels):
    labels = sorted(labels)
    return dict(zip(labels, per_class_budget(capacity, len(labels))))


def update_buffer(state: BufferState, batch: EpisodeBatch, config: SelectConfig | None = None,
                  shrink: str = "reselect") -> BufferState:
    """Admit the batch's new classes and shrink old ones to the new budgets.

    ``shrink="reselect"`` re-runs the selector on each old class's cached rows;
    ``shrink="random"`` drops a seeded random subset instead. Views are
    expected to be l2-normalised when the metric is cosine.
    """
    config = config or SelectConfig()
    if shrink not in ("reselect", "random"):
        raise InputError(f"unknown shrink rule {shrink!r}")
    pool = batch.pool
    if pool is None or not pool.classes:
        return state
    new_labels = pool.classes

    names = [v.name for v in pool.views]
    dims = [v.d for v in pool.views]
    if state.view_names and (names != list(state.view_names) or dims != [int(d) for d in state.view_dims]):
        raise StructuralError(f"batch views {names}/{dims} do not match buffer views {state.view_names}/{state.view_dims}")
    clash = set(new_labels) & set(state.entries)
    if clash:
        raise StructuralError(f"classes {sorted(clash)} were already seen in an earlier episode")

    budgets = _budget_map(state.capacity, list(state.entries) + new_labels)
    entries = {}
    for c, entry in state.entries.items():
        b = budgets[c]
        if b >= len(entry.ids):
            entries[c] = entry
        elif b == 0:
            entries[c] = entry.take([])
        elif shrink == "random":
            rng = np.random.default_rng([int(config.seed), int(c) & 0xFFFFFFFF, int(batch.episode_index)])
            keep = np.sort(rng.choice(len(entry.ids), size=b, replace=False))
            entries[c] = entry.take(keep)
        else:
            pts = [entry.rows[n].astype(np.float64) for n in names]
            try:
                sel = select_class(pts, names, list(range(len(entry.ids))), c, b, config)
            except InputError as exc:
                raise type(exc)(f"class {c} (shrink): {exc}") from exc
            entries[c] = entry.take(sel.ids)
    for c in new_labels:
        b = budgets[c]
        rows = pool.class_rows(c)
        if b == 0:
            entries[c] = ClassEntry([], {n: np.zeros((0, d), dtype=np.float32) for n, d in zip(names, dims)})
            continue
        pts = [v.points[rows] for v in pool.views]
        try:
            sel = select_class(pts, names, list(range(rows.size)), c, b, config)
        except InputError as exc:
            raise type(exc)(f"class {c}: {exc}") from exc
        picked = rows[np.asarray(sel.ids, dtype=np.int64)]
        entries[c] = ClassEntry(
            [int(i) for i in pool.ids[picked]],
            {v.name: v.points[picked].astype(np.float32) for v in pool.views},
        )
    out = BufferState(state.capacity, names, dims, dict(sorted(entries.items())), batch.episode_index)
    out.check_invariants()
    return out


def save_buffer(state: BufferState, path) -> None:
    header = {
        "capacity": int(state.capacity),
        "episode_index": int(state.episode_index),
        "views": [{"name": n, "dim": int(d)} for n, d in zip(state.view_names, state.view_dims)],
        "classes": [{"label": int(c), "count": len(e.ids), "ids": [int(i) for i in e.ids]}
                    for c, e in sorted(state.entries.items())],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BUF_MAGIC)
        fh.write(struct.pack("<BI", BUF_VERSION, len(blob)))
        fh.write(blob)
        for c, e in sorted(state.entries.items()):
            for n in state.view_names:
                fh.write(np.ascontiguousarray(e.rows[n], dtype="<f4").tobytes())


def load_buffer(path) -> BufferState:
    raw = Path(path).read_bytes()
    if raw[:8] != BUF_MAGIC:
        raise ParseError(f"{path}: bad magic {raw[:8]!r} at byte 0")
    if len(raw) < 13:
        raise ParseError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<BI", raw, 8)
    if version != BUF_VERSION:
        raise ParseError(f"{path}: unsupported buffer version {version} (expected {BUF_VERSION})")
    off = 13
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt JSON header at byte {off}: {exc}") from None
    off += hlen
    names = [v["name"] for v in header["views"]]
    dims = [int(v["dim"]) for v in header["views"]]
    entries = {}
    for cls in header["classes"]:
        count = int(cls["count"])
        rows = {}
        for n, d in zip(names, dims):
            nbytes = 4 * count * d
            if off + nbytes > len(raw):
                raise ParseError(f"{path}: block for class {cls['label']} view {n!r} truncated at byte {off}")
            rows[n] = np.frombuffer(raw, dtype="<f4", count=count * d, offset=off).reshape(count, d).astype(np.float32)
            off += nbytes
        entries[int(cls["label"])] = ClassEntry([int(i) for i in cls["ids"]], rows)
    if off != len(raw):
        raise ParseError(f"{path}: {len(raw) - off} trailing bytes after last block")
    return BufferState(int(header["capacity"]), names, dims, entries, int(header["episode_index"]))
