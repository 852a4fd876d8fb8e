"""Online HITS: defer eigen-recomputation while a perturbation bound allows.

Each update perturbs A by a sparse Delta, which perturbs S = A^T A by
E = Delta^T A + A^T Delta + Delta^T Delta. With eigengap delta of the last
solve, the principal eigenvector rotates by at most

    sin(theta) <= ||E||_F / (delta - ||E||_F)      (valid while ||E||_F < delta/2)

so updates are held back and the published snapshot keeps serving queries
until that bound exceeds ``tau``. Then every pending change is applied at
once and the solver runs again, warm-started from the previous vectors.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .eigen import DEFAULT_GAP_FLOOR, DEFAULT_TOL, EigenEstimate, block_power_top2
from .errors import NoModelError
from .graph import (BIPARTITE, ITEMGRAPH, MODES, DeltaMatrix, ItemGraphTracker, SparseMatrix,
                    build_bipartite, build_item_graph, delta_from_cells)
from .txstore import Add, TransactionStore, UpdateEvent

log = logging.getLogger(__name__)

SATURATED = math.inf
DEFERRED = "deferred"
RECOMPUTED = "recomputed"


@dataclass(frozen=True)
class PerturbationBudget:
    a_frobenius: float = 0.0
    gap: float = 0.0
    tau: float = 0.01
    pending: DeltaMatrix = field(default_factory=DeltaMatrix)
    delta_frobenius: float = 0.0
    e_norm_bound: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not 0 <= self.tau < 1:
            raise ValueError("tau must lie in [0, 1)")


def cheap_e_bound(a_frobenius: float, delta_frobenius: float) -> float:
    return 2 * a_frobenius * delta_frobenius + delta_frobenius ** 2


def exact_e_norm(base: SparseMatrix, pending: DeltaMatrix) -> float:
    """||A'^T A' - A^T A||_F using only the rows that ``pending`` touches."""
    if not pending:
        return 0.0
    rows = sorted(pending.rows())
    pos = {r: i for i, r in enumerate(rows)}
    ncols = max(base.cols, 1 + max(c for _, c in pending.cells))
    old = {}
    for r in rows:
        if r < base.rows:
            old.update(_row_entries(base, r))
    new = dict(old)
    for (r, c), (_, w) in pending.cells.items():
        if w == 0:
            new.pop((r, c), None)
        else:
            new[(r, c)] = w
    a_old = _rows_csr(old, pos, ncols)
    a_new = _rows_csr(new, pos, ncols)
    e = (a_new.T @ a_new - a_old.T @ a_old).tocoo()
    return float(np.linalg.norm(e.data))


def _row_entries(base: SparseMatrix, row: int):
    index = getattr(base, "_row_index", None)
    if index is None:
        index = {}
        for (r, c), w in base.entries.items():
            index.setdefault(r, {})[(r, c)] = w
        object.__setattr__(base, "_row_index", index)
    return index.get(row, {})


def _rows_csr(entries, pos, ncols) -> sp.csr_matrix:
    if not entries:
        return sp.csr_matrix((len(pos), ncols))
    r = [pos[k[0]] for k in entries]
    c = [k[1] for k in entries]
    return sp.csr_matrix((list(entries.values()), (r, c)), shape=(len(pos), ncols))


def accumulate(budget: PerturbationBudget, delta: DeltaMatrix,
               base: Optional[SparseMatrix] = None) -> PerturbationBudget:
    """Fold ``delta`` into the pending perturbation.

    Passing the matrix of the last solve as ``base`` switches from the
    submultiplicative bound on ||E||_F to its exact value.
    """
    if not delta:
        return budget
    pending = budget.pending.compose(delta)
    d_frob = pending.frobenius()
    if base is not None:
        e_norm = exact_e_norm(base, pending)
    else:
        e_norm = cheap_e_bound(budget.a_frobenius, d_frob)
    return replace(budget, pending=pending, delta_frobenius=d_frob, e_norm_bound=e_norm)


def rotation_bound(budget: PerturbationBudget) -> float:
    """Upper bound on sin(theta) for the principal vector, or ``SATURATED``."""
    if budget.e_norm_bound == 0:
        return 0.0
    if budget.degenerate or budget.e_norm_bound >= budget.gap / 2:
        return SATURATED
    return budget.e_norm_bound / (budget.gap - budget.e_norm_bound)


@dataclass(frozen=True, eq=False)
class RankSnapshot:
    epoch: int
    authority: Mapping[str, float]
    hub: Mapping[str, float]
    staleness_bound: float
    degenerate: bool
    converged: bool = True
    mode: str = BIPARTITE
    lambda1: float = 0.0
    lambda2: float = 0.0
    authority_vector: Optional[np.ndarray] = None
    hub_vector: Optional[np.ndarray] = None
    second_vector: Optional[np.ndarray] = None

    @property
    def gap(self) -> float:
        return self.lambda1 - self.lambda2

    def lookup(self, item: str) -> tuple[float, bool]:
        """Authority weight of ``item`` and whether it is pending (unseen at solve time)."""
        if item in self.authority:
            return self.authority[item], False
        return 0.0, True


@dataclass(frozen=True)
class Decision:
    seq: int
    decision: str
    bound: float


def _readonly(v: np.ndarray) -> np.ndarray:
    v = np.array(v, dtype=float)
    v.flags.writeable = False
    return v


def make_snapshot(store: TransactionStore, est: EigenEstimate, mode: str = BIPARTITE) -> RankSnapshot:
    authority = {item: float(est.authority[col]) for item, col in store.catalog.items()
                 if col < est.authority.size}
    if mode == BIPARTITE:
        hub = {tid: float(est.hub[row]) for tid, row in store.tx_index.items()
               if row < est.hub.size}
    else:
        hub = {item: float(est.hub[col]) for item, col in store.catalog.items()
               if col < est.hub.size}
    return RankSnapshot(
        epoch=store.epoch,
        authority=MappingProxyType(authority),
        hub=MappingProxyType(hub),
        staleness_bound=0.0,
        degenerate=est.degenerate or not est.converged,
        converged=est.converged,
        mode=mode,
        lambda1=est.lambda1,
        lambda2=est.lambda2,
        authority_vector=_readonly(est.authority),
        hub_vector=_readonly(est.hub),
        second_vector=_readonly(est.second) if est.second is not None else None,
    )


class OnlineEngine:
    """Single-writer, multi-reader Online HITS engine.

    ``submit`` calls must be serialised by the caller (a lock guards against
    accidents). ``query`` never takes that lock: snapshots are immutable and
    published by a single reference swap.
    """

    def __init__(self, store: Optional[TransactionStore] = None, mode: str = BIPARTITE,
                 tau: float = 0.01, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None,
                 min_pair_count: int = 1, exact_e: bool = False,
                 gap_floor: float = DEFAULT_GAP_FLOOR,
                 item_weights: Optional[Mapping[str, float]] = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.store = store if store is not None else TransactionStore()
        self.mode = mode
        self.tau = tau
        self.tol = tol
        self.max_iter = max_iter
        self.exact_e = exact_e
        self.gap_floor = gap_floor
        self.item_weights = item_weights
        self.min_pair_count = min_pair_count
        self.solves = 0
        self.solve_iterations = 0
        self.deferrals = 0
        self._write_lock = threading.Lock()
        self._snapshot: Optional[RankSnapshot] = None
        self._force = True
        self._tracker = (ItemGraphTracker(self.store, min_pair_count, item_weights)
                         if mode == ITEMGRAPH else None)
        self.base = self._build()
        self.budget = PerturbationBudget(tau=tau)
        if self.base.nnz:
            with self._write_lock:
                self._recompute(self.base)

    @property
    def recomputes(self) -> int:
        return self.solves

    def _build(self) -> SparseMatrix:
        if self.mode == BIPARTITE:
            return build_bipartite(self.store, self.item_weights)
        return build_item_graph(self.store, self.min_pair_count, self.item_weights)

    def _shape(self) -> tuple[int, int]:
        if self.mode == BIPARTITE:
            return self.store.m, self.store.n
        return self.store.n, self.store.n

    def current_matrix(self) -> SparseMatrix:
        """The matrix with every pending change applied."""
        rows, cols = self._shape()
        return self.base.with_delta(self.budget.pending, rows, cols)

    def query(self) -> RankSnapshot:
        snap = self._snapshot
        if snap is None:
            raise NoModelError()
        return snap

    def _cells(self, event: UpdateEvent):
        if self.mode == BIPARTITE:
            cells = self.store.apply(event)
            if self.item_weights is None:
                return cells
            # store cells are 0/1 presence flags; scale them by the column's item weight
            items = self.store.items
            scale = [self.item_weights.get(items[c], 1.0) for _, c, _, _ in cells]
            return [(r, c, old * w, new * w) for (r, c, old, new), w in zip(cells, scale)]
        txn = self.store.transactions.get(event.tid)
        before = set(txn.items) if txn is not None and not isinstance(event, Add) else set()
        self.store.apply(event)
        txn = self.store.transactions.get(event.tid)
        after = set(txn.items) if txn is not None else set()
        return self._tracker.update(self.store, before, after)

    def submit(self, event: UpdateEvent) -> Decision:
        with self._write_lock:
            cells = self._cells(event)
            epoch = self.store.epoch
            delta = delta_from_cells(cells, (epoch, epoch))
            self.budget = accumulate(self.budget, delta, self.base if self.exact_e else None)
            bound = rotation_bound(self.budget)
            if self._force or self._snapshot is None or self.tau == 0 or bound > self.tau:
                self._recompute(self.current_matrix())
                return Decision(event.seq, RECOMPUTED, bound)
            self.deferrals += 1
            self._snapshot = replace(self._snapshot, staleness_bound=bound)
            return Decision(event.seq, DEFERRED, bound)

    def _recompute(self, matrix: SparseMatrix):
        self.base = matrix
        if matrix.nnz == 0:
            log.debug("matrix is empty at epoch %d; no model", self.store.epoch)
            self._snapshot = None
            self._force = True
            self.budget = PerturbationBudget(tau=self.tau)
            return
        init = None
        prev = self._snapshot
        if prev is not None:
            init = (prev.authority_vector, prev.second_vector)
        est = block_power_top2(matrix, init=init, tol=self.tol, max_iter=self.max_iter,
                               gap_floor=self.gap_floor)
        self.solves += 1
        self.solve_iterations += est.iterations
        if not est.converged:
            log.warning("solve at epoch %d stopped after %d iterations (residual %.3g)",
                        self.store.epoch, est.iterations, est.residual)
        snap = make_snapshot(self.store, est, self.mode)
        self._force = snap.degenerate
        self.budget = PerturbationBudget(a_frobenius=matrix.frobenius(), gap=est.gap,
                                         tau=self.tau, degenerate=snap.degenerate)
        self._snapshot = snap
