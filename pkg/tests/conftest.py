import numpy as np
import pytest

from onlinehits.txstore import Add, Modify, Remove, TransactionStore

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_store():
    """T1={1,2}, T2={2,3}, T3={2}."""
    return TransactionStore.from_baskets([["1", "2"], ["2", "3"], ["2"]])


@pytest.fixture
def abc_store():
    return TransactionStore.from_baskets([["a", "b"], ["b", "c"], ["b"]])


def random_store(rng, n_items, n_tx, density=None):
    items = [f"x{j}" for j in range(n_items)]
    baskets = []
    for _ in range(n_tx):
        p = density if density is not None else rng.uniform(0.1, 0.7)
        basket = [it for it in items if rng.random() < p]
        if not basket:
            basket = [items[rng.integers(n_items)]]
        baskets.append(basket)
    return TransactionStore.from_baskets(baskets)


def random_event(rng, store, n_items, seq, fresh_prefix="r"):
    """An event valid against ``store`` drawn from a small item universe."""
    items = [f"x{j}" for j in range(n_items + 2)]
    live = sorted(store.transactions, key=store.tx_index.__getitem__)
    roll = rng.random()
    if roll < 0.3 or not live:
        size = rng.integers(1, min(4, len(items)) + 1)
        basket = tuple(rng.choice(items, size=size, replace=False))
        return Add(f"{fresh_prefix}{seq}", basket, seq=seq)
    tid = live[rng.integers(len(live))]
    if roll < 0.5 and len(live) > 1:
        return Remove(tid, seq=seq)
    have = store.transactions[tid].items
    add = tuple(i for i in rng.choice(items, size=2, replace=False) if i not in have)[:1]
    drop = ()
    if len(have) > 1 and rng.random() < 0.5:
        drop = (sorted(have)[rng.integers(len(have))],)
    return Modify(tid, add, drop, seq=seq)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
