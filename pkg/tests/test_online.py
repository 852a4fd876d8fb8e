import math
import threading

import numpy as np
import pytest

import onlinehits.online as online
from onlinehits.eigen import block_power_top2
from onlinehits.errors import EventError, NoModelError
from onlinehits.graph import (BIPARTITE, ITEMGRAPH, DeltaMatrix, build_bipartite,
                              build_item_graph, delta_from_cells)
from onlinehits.online import (DEFERRED, RECOMPUTED, SATURATED, OnlineEngine,
                               PerturbationBudget, accumulate, exact_e_norm, rotation_bound)
from onlinehits.txstore import Add, Modify, Remove, TransactionStore

from conftest import random_event, random_store

SQRT3 = math.sqrt(3)
SQRT5 = math.sqrt(5)


def tiny_budget(tau=0.5):
    return PerturbationBudget(a_frobenius=SQRT5, gap=1 + SQRT3, tau=tau)


def dense_e(a_old, a_new):
    rows = max(a_old.shape[0], a_new.shape[0])
    cols = max(a_old.shape[1], a_new.shape[1])
    pad = lambda a: np.pad(a, ((0, rows - a.shape[0]), (0, cols - a.shape[1])))
    a_old, a_new = pad(a_old), pad(a_new)
    return a_new.T @ a_new - a_old.T @ a_old


def test_accumulate_empty_delta_is_noop():
    budget = tiny_budget()
    assert accumulate(budget, DeltaMatrix()) is budget


def test_accumulate_single_cell(tiny_store):
    base = build_bipartite(tiny_store)
    budget = accumulate(tiny_budget(), delta_from_cells([(3, 0, 0, 1)]))
    assert budget.delta_frobenius == 1
    assert budget.e_norm_bound == pytest.approx(2 * SQRT5 + 1)
    assert budget.e_norm_bound == pytest.approx(5.4721, abs=1e-4)
    after = base.with_delta(budget.pending, 4, 3)
    true_e = np.linalg.norm(dense_e(base.to_dense(), after.to_dense()))
    assert true_e <= budget.e_norm_bound
    exact = accumulate(tiny_budget(), delta_from_cells([(3, 0, 0, 1)]), base)
    assert exact.e_norm_bound == pytest.approx(true_e)


def test_accumulate_cancelling_deltas():
    budget = accumulate(tiny_budget(), delta_from_cells([(0, 2, 0, 1)]))
    budget = accumulate(budget, delta_from_cells([(0, 2, 1, 0)]))
    assert budget.delta_frobenius == 0
    assert budget.e_norm_bound == 0
    assert not budget.pending


def test_exact_e_norm_matches_dense(rng):
    for _ in range(50):
        store = random_store(rng, 6, 6)
        base = build_bipartite(store)
        pending = DeltaMatrix()
        for seq in range(1, 6):
            cells = store.apply(random_event(rng, store, 6, seq))
            pending = pending.compose(delta_from_cells(cells))
        after = base.with_delta(pending, store.m, store.n)
        e = np.linalg.norm(dense_e(base.to_dense(), after.to_dense()))
        assert exact_e_norm(base, pending) == pytest.approx(e, abs=1e-12)
        cheap = accumulate(PerturbationBudget(a_frobenius=base.frobenius()), pending)
        assert e <= cheap.e_norm_bound + 1e-12


def test_e_bound_nondecreasing_without_cancellation(rng):
    budget = PerturbationBudget(a_frobenius=3.0, gap=10.0)
    seen = set()
    last = 0.0
    for _ in range(200):
        cell = (int(rng.integers(50)), int(rng.integers(10)))
        if cell in seen:
            continue
        seen.add(cell)
        budget = accumulate(budget, delta_from_cells([(*cell, 0, 1)]))
        assert budget.e_norm_bound >= last
        last = budget.e_norm_bound


def test_rotation_bound_examples():
    assert rotation_bound(tiny_budget()) == 0
    b = PerturbationBudget(gap=2.7320508, e_norm_bound=0.1, pending=DeltaMatrix({(0, 0): (0, 1)}))
    assert rotation_bound(b) == pytest.approx(0.1 / 2.6320508)
    assert rotation_bound(b) == pytest.approx(0.0380, abs=1e-4)
    assert rotation_bound(PerturbationBudget(gap=2.0, e_norm_bound=1.0)) == SATURATED
    assert rotation_bound(PerturbationBudget(gap=2.0, e_norm_bound=0.1,
                                             degenerate=True)) == SATURATED


def test_budget_tau_range():
    with pytest.raises(ValueError):
        PerturbationBudget(tau=1.0)
    with pytest.raises(ValueError):
        PerturbationBudget(tau=-0.1)


def test_cold_start_engine():
    engine = OnlineEngine(tau=0.5)
    with pytest.raises(NoModelError):
        engine.query()
    decision = engine.submit(Add("t1", ("a", "b"), seq=1))
    assert decision.decision == RECOMPUTED
    np.testing.assert_allclose(engine.query().authority_vector, [2 ** -0.5] * 2)


def test_tau_zero_always_recomputes(tiny_store):
    engine = OnlineEngine(tiny_store, tau=0.0)
    events = [Add("t4", ("1",)), Modify("1", added=("3",)), Modify("1", added=("3",)),
              Remove("2")]
    assert [engine.submit(e).decision for e in events] == [RECOMPUTED] * 4


def test_tiny_engine_add_recomputes(tiny_store):
    engine = OnlineEngine(tiny_store, tau=0.5)
    assert engine.budget.a_frobenius == pytest.approx(SQRT5)
    decision = engine.submit(Add("t4", ("2",), seq=1))
    assert decision.decision == RECOMPUTED
    assert decision.bound == SATURATED
    assert engine.query().epoch == 1


def test_query_after_cold_solve(tiny_store):
    snap = OnlineEngine(tiny_store).query()
    assert snap.staleness_bound == 0
    assert snap.epoch == 0
    for item, w in {"1": 0.3251, "2": 0.8881, "3": 0.3251}.items():
        assert snap.authority[item] == pytest.approx(w, abs=1e-4)
    assert snap.hub["3"] == pytest.approx(0.4597, abs=1e-4)


def big_gap_store():
    # 2000 identical baskets {a, b}: lambda1 = 4000, lambda2 = 0, ||A||_F = sqrt(4000).
    return TransactionStore.from_baskets([["a", "b"]] * 2000)


def test_deferred_event_keeps_vectors():
    engine = OnlineEngine(big_gap_store(), tau=0.05)
    before = engine.query()
    decision = engine.submit(Add("new", ("a", "z"), seq=1))
    assert decision.decision == DEFERRED
    e_bound = 2 * math.sqrt(4000) * math.sqrt(2) + 2
    assert decision.bound == pytest.approx(e_bound / (4000 - e_bound))
    after = engine.query()
    assert after.staleness_bound == decision.bound > 0
    assert after.staleness_bound <= engine.tau
    np.testing.assert_array_equal(after.authority_vector, before.authority_vector)
    assert after.epoch == before.epoch == 0
    assert after.lookup("z") == (0.0, True)
    assert after.lookup("a")[1] is False
    assert engine.deferrals == 1 and engine.solves == 1


def test_deferral_then_recompute_applies_all_pending():
    engine = OnlineEngine(big_gap_store(), tau=0.05, exact_e=True)
    decisions = []
    seq = 0
    while not decisions or decisions[-1] == DEFERRED:
        seq += 1
        decisions.append(engine.submit(Add(f"n{seq}", ("c", "d", "e"), seq=seq)).decision)
    assert decisions.count(DEFERRED) >= 1
    fresh = block_power_top2(build_bipartite(engine.store))
    np.testing.assert_allclose(engine.query().authority_vector, fresh.authority, atol=1e-9)
    assert engine.query().staleness_bound == 0
    assert not engine.budget.pending


def test_event_errors_propagate(tiny_store):
    engine = OnlineEngine(tiny_store)
    with pytest.raises(EventError):
        engine.submit(Remove("nope", seq=9))
    assert engine.store.epoch == 0


def test_nonconverged_solve_forces_recompute():
    engine = OnlineEngine(big_gap_store(), tau=0.5, max_iter=1)
    assert not engine.query().converged
    assert engine.query().degenerate
    assert engine.submit(Add("n", ("a",), seq=1)).decision == RECOMPUTED


def test_model_can_vanish_and_return():
    engine = OnlineEngine(TransactionStore.from_baskets([["a"]]), tau=0.5)
    engine.submit(Remove("1", seq=1))
    with pytest.raises(NoModelError):
        engine.query()
    assert engine.submit(Add("2", ("b",), seq=2)).decision == RECOMPUTED
    assert engine.query().authority["b"] == pytest.approx(1)


def test_itemgraph_engine_matches_rebuild(rng):
    store = random_store(rng, 6, 10)
    engine = OnlineEngine(store, ITEMGRAPH, tau=0.0, min_pair_count=2)
    for seq in range(1, 30):
        engine.submit(random_event(rng, store, 6, seq))
        g = build_item_graph(store, 2)
        assert engine.current_matrix() == g
        if g.nnz:
            fresh = block_power_top2(g)
            np.testing.assert_allclose(engine.query().authority_vector, fresh.authority,
                                       atol=1e-7)
            assert engine.query().mode == ITEMGRAPH


def test_item_weights_flow_through_updates(rng):
    weights = {f"x{j}": 1.0 + j for j in range(8)}
    store = random_store(rng, 6, 8)
    engine = OnlineEngine(store, tau=0.0, item_weights=weights)
    for seq in range(1, 20):
        engine.submit(random_event(rng, store, 6, seq))
        assert engine.current_matrix() == build_bipartite(store, weights)


def test_query_does_not_block_on_recompute(monkeypatch):
    engine = OnlineEngine(big_gap_store(), tau=0.0)
    old = engine.query()
    entered, release = threading.Event(), threading.Event()
    real = online.block_power_top2

    def slow(*args, **kwargs):
        entered.set()
        release.wait(5)
        return real(*args, **kwargs)

    monkeypatch.setattr(online, "block_power_top2", slow)
    writer = threading.Thread(target=engine.submit, args=(Add("n", ("c",), seq=1),))
    writer.start()
    assert entered.wait(5)
    assert engine.query() is old
    release.set()
    writer.join(5)
    assert engine.query() is not old
    assert engine.query().epoch == 1


def test_snapshot_atomicity_under_stress():
    rng = np.random.default_rng(99)
    store = random_store(rng, 8, 40)
    engine = OnlineEngine(store, tau=0.3, exact_e=True)
    stop = threading.Event()
    problems = []
    reads = [0]

    def reader():
        while not stop.is_set():
            snap = engine.query()
            reads[0] += 1
            if abs(np.linalg.norm(snap.authority_vector) - 1) > 1e-12:
                problems.append("authority norm")
            if abs(np.linalg.norm(snap.hub_vector) - 1) > 1e-12:
                problems.append("hub norm")
            if len(snap.authority) > snap.authority_vector.size:
                problems.append("map/vector mismatch")
            if snap.staleness_bound > engine.tau:
                problems.append("stale beyond tau")

    threads = [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for seq in range(1, 200):
        engine.submit(random_event(rng, store, 8, seq))
    stop.set()
    for t in threads:
        t.join()
    assert reads[0] > 0
    assert not problems
