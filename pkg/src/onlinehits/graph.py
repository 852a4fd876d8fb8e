"""HITS matrix construction.

Two layouts are supported:

* bipartite: rows are transactions, columns are items, entry 1 when the item
  occurs in the transaction. Hubs are transactions, authorities are items.
* item graph: an n-by-n adjacency matrix with a link between two distinct
  items whenever they co-occur in at least ``min_pair_count`` transactions.

Both builders accept an optional per-item weight map that scales columns;
without it every entry is 1.0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .txstore import Cell, TransactionStore

BIPARTITE = "bipartite"
ITEMGRAPH = "itemgraph"
MODES = (BIPARTITE, ITEMGRAPH)


@dataclass(frozen=True)
class SparseMatrix:
    rows: int
    cols: int
    entries: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for (r, c), w in self.entries.items():
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ValueError(f"entry ({r}, {c}) outside {self.rows}x{self.cols}")
            if not (w > 0 and math.isfinite(w)):
                raise ValueError(f"entry ({r}, {c}) has non-positive or non-finite weight {w}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        arr = np.asarray(dense, dtype=float)
        if arr.ndim != 2:
            raise ValueError("expected a 2-d array")
        rr, cc = np.nonzero(arr)
        return cls(arr.shape[0], arr.shape[1],
                   {(int(r), int(c)): float(arr[r, c]) for r, c in zip(rr, cc)})

    def to_csr(self) -> sp.csr_matrix:
        if not self.entries:
            return sp.csr_matrix((self.rows, self.cols), dtype=float)
        keys = list(self.entries)
        r = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
        c = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
        w = np.fromiter(self.entries.values(), dtype=float, count=len(keys))
        return sp.csr_matrix((w, (r, c)), shape=(self.rows, self.cols))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        for (r, c), w in self.entries.items():
            out[r, c] = w
        return out

    def frobenius(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.entries.values()))

    def scaled(self, factor: float) -> "SparseMatrix":
        return SparseMatrix(self.rows, self.cols, {k: w * factor for k, w in self.entries.items()})

    def with_delta(self, delta: "DeltaMatrix", rows: Optional[int] = None,
                   cols: Optional[int] = None) -> "SparseMatrix":
        """Apply ``delta`` on top of this matrix, growing to at least (rows, cols)."""
        entries = dict(self.entries)
        max_r, max_c = self.rows, self.cols
        for (r, c), (_, new) in delta.cells.items():
            if new == 0:
                entries.pop((r, c), None)
            else:
                entries[(r, c)] = new
            max_r, max_c = max(max_r, r + 1), max(max_c, c + 1)
        return SparseMatrix(max(max_r, rows or 0), max(max_c, cols or 0), entries)


@dataclass(frozen=True)
class DeltaMatrix:
    cells: Mapping[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    covers_epochs: Optional[tuple[int, int]] = None

    def __bool__(self):
        return bool(self.cells)

    def __len__(self):
        return len(self.cells)

    def compose(self, later: "DeltaMatrix") -> "DeltaMatrix":
        """Merge a later delta: earliest old weight, latest new weight."""
        cells = dict(self.cells)
        for key, (old, new) in later.cells.items():
            if key in cells:
                old = cells[key][0]
            if old == new:
                cells.pop(key, None)
            else:
                cells[key] = (old, new)
        return DeltaMatrix(cells, _span(self.covers_epochs, later.covers_epochs))

    def frobenius(self) -> float:
        return math.sqrt(math.fsum((new - old) ** 2 for old, new in self.cells.values()))

    def rows(self) -> set[int]:
        return {r for r, _ in self.cells}

    def to_csr(self, shape: tuple[int, int]) -> sp.csr_matrix:
        if not self.cells:
            return sp.csr_matrix(shape, dtype=float)
        keys = list(self.cells)
        r = [k[0] for k in keys]
        c = [k[1] for k in keys]
        d = [new - old for old, new in self.cells.values()]
        return sp.csr_matrix((d, (r, c)), shape=shape)


def _span(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return (min(a[0], b[0]), max(a[1], b[1]))


def delta_from_cells(cells: Iterable[Cell], epochs: Optional[tuple[int, int]] = None) -> DeltaMatrix:
    merged: dict[tuple[int, int], tuple[float, float]] = {}
    for r, c, old, new in cells:
        old = merged[(r, c)][0] if (r, c) in merged else float(old)
        merged[(r, c)] = (old, float(new))
    return DeltaMatrix({k: v for k, v in merged.items() if v[0] != v[1]}, epochs)


def _weight(item_weights, item) -> float:
    if item_weights is None:
        return 1.0
    w = float(item_weights.get(item, 1.0))
    if not (w > 0 and math.isfinite(w)):
        raise ValueError(f"item weight for {item!r} must be positive and finite")
    return w


def build_bipartite(store: TransactionStore,
                    item_weights: Optional[Mapping[str, float]] = None) -> SparseMatrix:
    entries = {}
    for tid, row in store.tx_index.items():
        for item in store.transactions[tid].items:
            entries[(row, store.catalog[item])] = _weight(item_weights, item)
    return SparseMatrix(store.m, store.n, entries)


def pair_counts(store: TransactionStore) -> Counter:
    counts: Counter = Counter()
    for txn in store.transactions.values():
        cols = sorted(store.catalog[i] for i in txn.items)
        counts.update(combinations(cols, 2))
    return counts


def build_item_graph(store: TransactionStore, min_pair_count: int = 1,
                     item_weights: Optional[Mapping[str, float]] = None) -> SparseMatrix:
    floor = max(1, min_pair_count)
    entries = {}
    for (i, j), count in pair_counts(store).items():
        if count >= floor:
            entries[(i, j)] = _weight(item_weights, store.items[j])
            entries[(j, i)] = _weight(item_weights, store.items[i])
    return SparseMatrix(store.n, store.n, entries)


class ItemGraphTracker:
    """Keeps co-occurrence counts current so item-graph edits stay local.

    ``update`` takes a transaction's item set before and after an event and
    returns the adjacency cells whose presence flipped.
    """

    def __init__(self, store: TransactionStore, min_pair_count: int = 1,
                 item_weights: Optional[Mapping[str, float]] = None):
        self.floor = max(1, min_pair_count)
        self.item_weights = item_weights
        self.counts = pair_counts(store)

    def update(self, store: TransactionStore, before: Iterable[str],
               after: Iterable[str]) -> list[Cell]:
        old_pairs = set(combinations(sorted(store.catalog[i] for i in before), 2))
        new_pairs = set(combinations(sorted(store.catalog[i] for i in after), 2))
        cells = []
        for pair in sorted(old_pairs ^ new_pairs):
            was = self.counts[pair] >= self.floor
            self.counts[pair] += 1 if pair in new_pairs else -1
            if self.counts[pair] == 0:
                del self.counts[pair]
            now = self.counts[pair] >= self.floor
            if was != now:
                i, j = pair
                wj = _weight(self.item_weights, store.items[j])
                wi = _weight(self.item_weights, store.items[i])
                if now:
                    cells += [(i, j, 0.0, wj), (j, i, 0.0, wi)]
                else:
                    cells += [(i, j, wj, 0.0), (j, i, wi, 0.0)]
        return cells
