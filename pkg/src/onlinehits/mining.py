"""Weighted frequent itemsets and rules, with hub scores as transaction weights.

The weighted support of an itemset X is the share of total hub weight held
by the transactions that contain X:

    ws(X) = sum(hub[t] for t containing X) / sum(hub[t] for all t)

Hub weights are nonnegative, so ws is anti-monotone and Apriori pruning
stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .errors import NoModelError
from .graph import BIPARTITE
from .online import RankSnapshot
from .txstore import TransactionStore

BRUTE_FORCE_MAX_ITEMS = 16


@dataclass(frozen=True)
class WeightedItemset:
    items: tuple[str, ...]
    wsupport: float


@dataclass(frozen=True)
class Rule:
    antecedent: tuple[str, ...]
    consequent: tuple[str, ...]
    wsupport: float
    wconfidence: float


def _check_snapshot(snapshot: RankSnapshot):
    if snapshot.mode != BIPARTITE:
        raise ValueError("mining requires bipartite mode")


def _hub_weights(store: TransactionStore, snapshot: RankSnapshot) -> dict[str, float]:
    _check_snapshot(snapshot)
    # Rows outside the dominant component converge to 0 from either side; the
    # negative round-off would break anti-monotonicity.
    weights = {tid: max(snapshot.hub.get(tid, 0.0), 0.0) for tid in store.transactions}
    if not any(w > 0 for w in weights.values()):
        raise NoModelError("hub weights are all zero")
    return weights


def _sort_key(ws: WeightedItemset):
    return (len(ws.items), -ws.wsupport, ws.items)


def w_support(itemset: Iterable[str], store: TransactionStore, snapshot: RankSnapshot) -> float:
    weights = _hub_weights(store, snapshot)
    wanted = set(itemset)
    covered = (w for tid, w in weights.items() if wanted <= store.transactions[tid].items)
    return math.fsum(covered) / math.fsum(weights.values())


class _Index:
    """Per-item covers (sets of tids) for fast support counting."""

    def __init__(self, store: TransactionStore, snapshot: RankSnapshot):
        self.weights = _hub_weights(store, snapshot)
        self.total = math.fsum(self.weights.values())
        tmp: dict[str, set[str]] = {}
        for tid, txn in store.transactions.items():
            for item in txn.items:
                tmp.setdefault(item, set()).add(tid)
        self.cover = {item: frozenset(tids) for item, tids in tmp.items()}

    def support(self, tids) -> float:
        return math.fsum(self.weights[t] for t in tids) / self.total


def _check_minws(minws: float):
    if not 0 < minws <= 1:
        raise ValueError(f"minws must lie in (0, 1], got {minws}")


def mine_frequent(store: TransactionStore, snapshot: RankSnapshot,
                  minws: float) -> list[WeightedItemset]:
    """Levelwise (Apriori) search for itemsets with ws >= ``minws``."""
    _check_minws(minws)
    index = _Index(store, snapshot)
    level: dict[tuple[str, ...], frozenset[str]] = {}
    found: list[WeightedItemset] = []
    for item in sorted(index.cover):
        tids = index.cover[item]
        ws = index.support(tids)
        if ws >= minws:
            level[(item,)] = tids
            found.append(WeightedItemset((item,), ws))
    while level:
        keys = sorted(level)
        frequent = set(keys)
        nxt: dict[tuple[str, ...], frozenset[str]] = {}
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                if a[:-1] != b[:-1]:
                    break
                cand = a + (b[-1],)
                if any(sub not in frequent for sub in combinations(cand, len(cand) - 1)):
                    continue
                tids = level[a] & level[b]
                ws = index.support(tids)
                if ws >= minws:
                    nxt[cand] = tids
                    found.append(WeightedItemset(cand, ws))
        level = nxt
    return sorted(found, key=_sort_key)


def brute_force_mine(store: TransactionStore, snapshot: RankSnapshot,
                     minws: float) -> list[WeightedItemset]:
    """Exhaustive reference: every nonempty itemset, support from the definition."""
    _check_minws(minws)
    items = sorted(store.catalog)
    if len(items) > BRUTE_FORCE_MAX_ITEMS:
        raise ValueError(f"brute force is capped at {BRUTE_FORCE_MAX_ITEMS} items")
    weights = _hub_weights(store, snapshot)
    total = math.fsum(weights.values())
    found = []
    for size in range(1, len(items) + 1):
        for combo in combinations(items, size):
            wanted = set(combo)
            ws = math.fsum(w for tid, w in weights.items()
                           if wanted <= store.transactions[tid].items) / total
            if ws >= minws:
                found.append(WeightedItemset(combo, ws))
    return sorted(found, key=_sort_key)


def generate_rules(frequent: list[WeightedItemset], minconf: float) -> list[Rule]:
    if not 0 < minconf <= 1:
        raise ValueError(f"minconf must lie in (0, 1], got {minconf}")
    support = {fs.items: fs.wsupport for fs in frequent}
    rules = []
    for fs in frequent:
        if len(fs.items) < 2:
            continue
        for k in range(1, len(fs.items)):
            for ante in combinations(fs.items, k):
                ante_ws = support[ante]
                if ante_ws <= 0:
                    continue
                conf = min(fs.wsupport / ante_ws, 1.0)
                if conf >= minconf:
                    cons = tuple(i for i in fs.items if i not in ante)
                    rules.append(Rule(ante, cons, fs.wsupport, conf))
    rules.sort(key=lambda r: (-r.wconfidence, -r.wsupport, r.antecedent, r.consequent))
    return rules


def item_weight_table(snapshot: RankSnapshot) -> list[tuple[str, float]]:
    """Authority weights sorted for export, heaviest first."""
    return sorted(snapshot.authority.items(), key=lambda kv: (-kv[1], kv[0]))
