"""Synthetic update workloads and the online-vs-baseline replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import block_power_top2
from .graph import BIPARTITE
from .online import OnlineEngine, RankSnapshot
from .txstore import Add, Modify, Remove, TransactionStore

ZIPF_EXPONENT = 1.1
MEAN_EXTRA_ITEMS = 4

BENCH_COLUMNS = ("step", "policy", "recomputes_cum", "solve_iters_cum", "max_rank_error")


@dataclass(frozen=True)
class BenchRow:
    step: int
    policy: str
    recomputes_cum: int
    solve_iters_cum: int
    max_rank_error: float


class Workload:
    """Zipf-skewed baskets and a random Add/Remove/Modify stream, seeded."""

    def __init__(self, n_items: int, seed: int = 0, exponent: float = ZIPF_EXPONENT):
        if n_items < 1:
            raise ValueError("n_items must be positive")
        self.rng = np.random.default_rng(seed)
        self.items = [f"i{j}" for j in range(n_items)]
        p = 1.0 / np.arange(1, n_items + 1) ** exponent
        self.popularity = p / p.sum()

    def basket(self) -> tuple[str, ...]:
        size = min(1 + self.rng.poisson(MEAN_EXTRA_ITEMS), len(self.items))
        idx = self.rng.choice(len(self.items), size=size, replace=False, p=self.popularity)
        return tuple(self.items[j] for j in sorted(idx))

    def store(self, n_tx: int) -> TransactionStore:
        return TransactionStore.from_baskets(self.basket() for _ in range(n_tx))

    def events(self, store: TransactionStore, n_events: int):
        """Yield events valid against ``store``, applying each to a private copy."""
        shadow = store.copy()
        fresh = 0
        for seq in range(1, n_events + 1):
            live = sorted(shadow.transactions, key=shadow.tx_index.__getitem__)
            roll = self.rng.random()
            if roll < 0.3 or len(live) < 2:
                fresh += 1
                event = Add(f"n{fresh}", self.basket(), seq=seq)
            elif roll < 0.5:
                event = Remove(live[self.rng.integers(len(live))], seq=seq)
            else:
                tid = live[self.rng.integers(len(live))]
                have = shadow.transactions[tid].items
                if len(have) > 1 and self.rng.random() < 0.5:
                    event = Modify(tid, removed=(sorted(have)[self.rng.integers(len(have))],), seq=seq)
                else:
                    j = self.rng.choice(len(self.items), p=self.popularity)
                    item = self.items[j]
                    event = Modify(tid, added=(item,) if item not in have else (), seq=seq)
            shadow.apply(event)
            yield event


def rank_error(snapshot: RankSnapshot, fresh: dict[str, float]) -> float:
    """L-infinity distance between two authority maps (absent items count as 0)."""
    keys = set(snapshot.authority) | set(fresh)
    return max((abs(snapshot.authority.get(k, 0.0) - fresh.get(k, 0.0)) for k in keys),
               default=0.0)


def run_bench(n_items: int, n_tx: int, n_events: int, seed: int = 0, tau: float = 0.01,
              tol: float = 1e-10, max_iter=None, exact_e: bool = False) -> list[BenchRow]:
    if n_items < 1 or n_tx < 1 or n_events < 0:
        raise ValueError("sizes must be positive")
    work = Workload(n_items, seed)
    store = work.store(n_tx)
    events = list(work.events(store, n_events))
    engines = {
        "baseline": OnlineEngine(store.copy(), BIPARTITE, tau=0.0, tol=tol, max_iter=max_iter,
                                 exact_e=exact_e),
        "online": OnlineEngine(store.copy(), BIPARTITE, tau=tau, tol=tol, max_iter=max_iter,
                               exact_e=exact_e),
    }
    base = engines["baseline"]
    rows = [BenchRow(0, "cold_start", base.solves, base.solve_iterations, 0.0)]
    for step, event in enumerate(events, start=1):
        for engine in engines.values():
            engine.submit(event)
        # Reference solve from a cold start, independent of both engines.
        est = block_power_top2(base.current_matrix(), tol=tol, max_iter=max_iter)
        st = base.store
        fresh = {item: float(est.authority[col]) for item, col in st.catalog.items()}
        for name, engine in engines.items():
            rows.append(BenchRow(step, name, engine.solves, engine.solve_iterations,
                                 rank_error(engine.query(), fresh)))
    return rows
