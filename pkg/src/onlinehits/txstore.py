"""Transaction database with stable row/column indexing.

Rows of the HITS matrix are transactions and columns are items. Row and
column indices are handed out densely in order of first appearance and are
never reused while a store lives: removing a transaction zeroes its row
instead of compacting.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .errors import EventError, ParseError

# (row, col, old_weight, new_weight)
Cell = tuple[int, int, float, float]

_SPLIT = re.compile(r"[\s,]+")


def _tokens(line: str) -> list[str]:
    return [tok for tok in _SPLIT.split(line.strip()) if tok]


def _dedup(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


@dataclass(frozen=True)
class Transaction:
    tid: str
    items: frozenset[str]

    def __post_init__(self):
        if not self.items:
            raise ValueError(f"transaction {self.tid!r} has no items")


@dataclass(frozen=True)
class Add:
    tid: str
    items: tuple[str, ...]
    seq: int = 0

    def __post_init__(self):
        object.__setattr__(self, "items", _dedup(self.items))


@dataclass(frozen=True)
class Remove:
    tid: str
    seq: int = 0


@dataclass(frozen=True)
class Modify:
    tid: str
    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    seq: int = 0

    def __post_init__(self):
        object.__setattr__(self, "added", _dedup(self.added))
        object.__setattr__(self, "removed", _dedup(self.removed))
        clash = set(self.added) & set(self.removed)
        if clash:
            raise ValueError(f"items both added and removed: {sorted(clash)}")


UpdateEvent = Union[Add, Remove, Modify]


@dataclass
class TransactionStore:
    transactions: dict[str, Transaction] = field(default_factory=dict)
    catalog: dict[str, int] = field(default_factory=dict)
    items: list[str] = field(default_factory=list)
    tx_index: dict[str, int] = field(default_factory=dict)
    row_tids: list[str] = field(default_factory=list)
    epoch: int = 0

    @property
    def m(self) -> int:
        """Number of row indices ever assigned (retired rows included)."""
        return len(self.row_tids)

    @property
    def n(self) -> int:
        return len(self.items)

    def __len__(self):
        return len(self.transactions)

    @classmethod
    def from_baskets(cls, baskets: Iterable[Iterable[str]]) -> "TransactionStore":
        store = cls()
        for i, basket in enumerate(baskets, start=1):
            store._insert(str(i), _dedup(basket))
        return store

    def copy(self) -> "TransactionStore":
        return copy.deepcopy(self)

    def column(self, item: str) -> int:
        col = self.catalog.get(item)
        if col is None:
            col = len(self.items)
            self.catalog[item] = col
            self.items.append(item)
        return col

    def row_items(self, row: int) -> frozenset[str]:
        tid = self.row_tids[row]
        if self.tx_index.get(tid) != row:
            return frozenset()
        return self.transactions[tid].items

    def live_rows(self) -> list[int]:
        return sorted(self.tx_index.values())

    def _insert(self, tid: str, items: tuple[str, ...]) -> list[Cell]:
        txn = Transaction(tid, frozenset(items))
        row = len(self.row_tids)
        self.row_tids.append(tid)
        self.tx_index[tid] = row
        self.transactions[tid] = txn
        cols = sorted(self.column(item) for item in items)
        return [(row, col, 0.0, 1.0) for col in cols]

    def apply(self, event: UpdateEvent) -> list[Cell]:
        """Apply ``event`` in place and return the changed matrix cells.

        Modify ignores additions of items already present and removals of
        items that are absent; those produce no cells.
        """
        if isinstance(event, Add):
            if event.tid in self.transactions:
                raise EventError(f"transaction {event.tid!r} already exists", event.seq)
            if not event.items:
                raise EventError(f"transaction {event.tid!r} has no items", event.seq)
            cells = self._insert(event.tid, event.items)
        elif isinstance(event, Remove):
            txn = self._require(event)
            row = self.tx_index.pop(event.tid)
            del self.transactions[event.tid]
            cells = [(row, col, 1.0, 0.0) for col in sorted(self.catalog[i] for i in txn.items)]
        elif isinstance(event, Modify):
            txn = self._require(event)
            added = [i for i in event.added if i not in txn.items]
            removed = [i for i in event.removed if i in txn.items]
            new_items = (txn.items - set(removed)) | set(added)
            if not new_items:
                raise EventError(f"modify would empty transaction {event.tid!r}", event.seq)
            row = self.tx_index[event.tid]
            self.transactions[event.tid] = Transaction(event.tid, frozenset(new_items))
            cells = [(row, col, 0.0, 1.0) for col in sorted(self.column(i) for i in added)]
            cells += [(row, col, 1.0, 0.0) for col in sorted(self.catalog[i] for i in removed)]
        else:
            raise TypeError(f"not an update event: {event!r}")
        self.epoch += 1
        return cells

    def _require(self, event) -> Transaction:
        txn = self.transactions.get(event.tid)
        if txn is None:
            raise EventError(f"unknown transaction {event.tid!r}", event.seq)
        return txn


def apply_event(store: TransactionStore, event: UpdateEvent) -> tuple[TransactionStore, list[Cell]]:
    """Mutates ``store``; returns it alongside the changed cells."""
    cells = store.apply(event)
    return store, cells


def parse_baskets(lines: Iterable[str]) -> TransactionStore:
    store = TransactionStore()
    tid = 0
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        items = _dedup(_tokens(stripped))
        if not items:
            raise ParseError("transaction has no items", lineno)
        tid += 1
        store._insert(str(tid), items)
    return store


def load_basket_file(path) -> TransactionStore:
    with open(Path(path), encoding="utf-8") as fh:
        return parse_baskets(fh)


def parse_events(lines: Iterable[str]) -> list[UpdateEvent]:
    events: list[UpdateEvent] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        toks = _tokens(stripped)
        op, args = toks[0].upper(), toks[1:]
        if not args:
            raise ParseError(f"missing transaction id after {toks[0]!r}", lineno)
        tid, rest = args[0], args[1:]
        if op == "A":
            if not rest:
                raise ParseError("add with no items", lineno)
            events.append(Add(tid, tuple(rest), seq=lineno))
        elif op == "D":
            if rest:
                raise ParseError("delete takes only a transaction id", lineno)
            events.append(Remove(tid, seq=lineno))
        elif op == "M":
            added, removed = [], []
            for tok in rest:
                if tok[0] == "+" and len(tok) > 1:
                    added.append(tok[1:])
                elif tok[0] == "-" and len(tok) > 1:
                    removed.append(tok[1:])
                else:
                    raise ParseError(f"modify token {tok!r} must start with + or -", lineno)
            try:
                events.append(Modify(tid, tuple(added), tuple(removed), seq=lineno))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
        else:
            raise ParseError(f"unknown event kind {toks[0]!r}", lineno)
    return events


def load_update_file(path) -> list[UpdateEvent]:
    with open(Path(path), encoding="utf-8") as fh:
        return parse_events(fh)
