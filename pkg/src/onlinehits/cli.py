"""Command-line front end: rank, mine, stream and bench."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import threading
from dataclasses import dataclass, fields, replace
from typing import Mapping, Optional, Sequence

from .bench import BENCH_COLUMNS, run_bench
from .errors import OnlineHitsError
from .graph import BIPARTITE, MODES
from .mining import generate_rules, mine_frequent
from .online import OnlineEngine
from .txstore import load_basket_file, load_update_file


@dataclass(frozen=True)
class RunConfig:
    mode: str = BIPARTITE
    tau: float = 0.01
    tol: float = 1e-10
    max_iter: Optional[int] = None
    minws: float = 0.1
    minconf: float = 0.5
    min_pair_count: int = 1
    seed: int = 0
    exact_e: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if not 0 <= self.tau < 1:
            raise ValueError("tau must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max-iter must be positive")
        if not 0 < self.minws <= 1:
            raise ValueError("minws must lie in (0, 1]")
        if not 0 < self.minconf <= 1:
            raise ValueError("minconf must lie in (0, 1]")
        if self.min_pair_count < 0:
            raise ValueError("min-pair-count must be nonnegative")
        return self


_CASTS = {"mode": str, "tau": float, "tol": float, "max_iter": int, "minws": float,
          "minconf": float, "min_pair_count": int, "seed": int,
          "exact_e": lambda s: s.strip().lower() in ("1", "true", "yes", "on")}


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in _CASTS:
                raise ValueError(f"{path}:{lineno}: expected key=value with a known key")
            values[key] = _CASTS[key](value.strip())
    return values


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def format_weight(w: float) -> str:
    return f"{w:.4f}"


def rank_rows(weights: Mapping[str, float]) -> list[tuple[str, str]]:
    """Rows of the rank table: heaviest first (as printed), ties by item token."""
    shown = [(item, format_weight(w)) for item, w in weights.items()]
    shown.sort(key=lambda row: (-float(row[1]), row[0]))
    return shown


def write_rank_table(weights: Mapping[str, float], out):
    w = _writer(out)
    w.writerow(["item", "weight"])
    w.writerows(rank_rows(weights))


def join_items(items: Sequence[str]) -> str:
    buf = io.StringIO()
    csv.writer(buf, delimiter="|", lineterminator="").writerow(items)
    return buf.getvalue()


def split_items(field: str) -> list[str]:
    return next(csv.reader([field], delimiter="|"))


def _engine(store, config: RunConfig) -> OnlineEngine:
    return OnlineEngine(store, config.mode, tau=config.tau, tol=config.tol,
                        max_iter=config.max_iter, min_pair_count=config.min_pair_count,
                        exact_e=config.exact_e)


def cmd_rank(baskets, config: RunConfig, out=None):
    out = out or sys.stdout
    engine = _engine(load_basket_file(baskets), config)
    write_rank_table(engine.query().authority, out)


def cmd_mine(baskets, config: RunConfig, out=None):
    out = out or sys.stdout
    if config.mode != BIPARTITE:
        raise ValueError("mining requires bipartite mode")
    store = load_basket_file(baskets)
    snapshot = _engine(store, config).query()
    frequent = mine_frequent(store, snapshot, config.minws)
    rules = generate_rules(frequent, config.minconf)
    w = _writer(out)
    w.writerow(["itemset", "wsupport"])
    for fs in frequent:
        w.writerow([join_items(fs.items), format_weight(fs.wsupport)])
    out.write("\n")
    w.writerow(["antecedent", "consequent", "wsupport", "wconfidence"])
    for r in rules:
        w.writerow([join_items(r.antecedent), join_items(r.consequent),
                    format_weight(r.wsupport), format_weight(r.wconfidence)])


def _format_bound(bound: float) -> str:
    return "inf" if math.isinf(bound) else f"{bound:.6g}"


class _SnapshotProbe(threading.Thread):
    """Reader that hammers ``query`` and checks each snapshot's invariants."""

    def __init__(self, engine: OnlineEngine, tau: float):
        super().__init__(daemon=True)
        self.engine, self.tau = engine, tau
        self.stop = threading.Event()
        self.reads = 0
        self.violations: list[str] = []

    def run(self):
        while not self.stop.is_set():
            try:
                snap = self.engine.query()
            except OnlineHitsError:
                continue
            self.reads += 1
            norm = math.sqrt(math.fsum(w * w for w in snap.authority_vector))
            if abs(norm - 1) > 1e-9:
                self.violations.append(f"epoch {snap.epoch}: authority norm {norm}")
            if snap.epoch > self.engine.store.epoch:
                self.violations.append(f"epoch {snap.epoch} ahead of store")
            if snap.staleness_bound > self.tau and self.tau > 0:
                self.violations.append(f"epoch {snap.epoch}: staleness {snap.staleness_bound}")


def cmd_stream(baskets, updates, config: RunConfig, out=None, err=None,
               stress: bool = False):
    out = out or sys.stdout
    err = err or sys.stderr
    store = load_basket_file(baskets)
    events = load_update_file(updates)
    engine = _engine(store, config)
    probe = None
    if stress:
        probe = _SnapshotProbe(engine, config.tau)
        probe.start()
    w = _writer(out)
    w.writerow(["seq", "decision", "bound"])
    counts = {"deferred": 0, "recomputed": 0}
    try:
        for event in events:
            d = engine.submit(event)
            counts[d.decision] += 1
            w.writerow([d.seq, d.decision, _format_bound(d.bound)])
    finally:
        if probe is not None:
            probe.stop.set()
            probe.join()
    out.write("\n")
    write_rank_table(engine.query().authority, out)
    print(f"events={len(events)} deferred={counts['deferred']} "
          f"recomputed={counts['recomputed']}", file=err)
    if probe is not None:
        print(f"stress: reads={probe.reads} violations={len(probe.violations)}", file=err)
        if probe.violations:
            raise OnlineHitsError(f"snapshot invariant violated: {probe.violations[0]}")


def cmd_bench(config: RunConfig, n_items: int, n_tx: int, n_events: int, out=None):
    out = out or sys.stdout
    rows = run_bench(n_items, n_tx, n_events, seed=config.seed, tau=config.tau,
                     tol=config.tol, max_iter=config.max_iter, exact_e=config.exact_e)
    w = _writer(out)
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r.step, r.policy, r.recomputes_cum, r.solve_iters_cum,
                    f"{r.max_rank_error:.6e}"])


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of key=value lines; flags override it")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--tau", type=float, help="rotation tolerance (sin theta)")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--max-iter", type=int)
    common.add_argument("--minws", type=float, help="minimum weighted support")
    common.add_argument("--minconf", type=float, help="minimum weighted confidence")
    common.add_argument("--min-pair-count", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--exact-e", action="store_true", default=None,
                        help="track ||E||_F exactly instead of bounding it")

    parser = argparse.ArgumentParser(prog="onlinehits",
                                     description="Online HITS ranking and weighted rule mining.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", parents=[common], help="authority weights per item")
    p.add_argument("baskets")
    p = sub.add_parser("mine", parents=[common], help="weighted itemsets and rules")
    p.add_argument("baskets")
    p = sub.add_parser("stream", parents=[common], help="replay an update stream")
    p.add_argument("baskets")
    p.add_argument("updates")
    p.add_argument("--stress", action="store_true",
                   help="query snapshots from a second thread while replaying")
    p = sub.add_parser("bench", parents=[common], help="online vs per-update recompute")
    p.add_argument("--n-items", type=_positive_int, default=100)
    p.add_argument("--n-tx", type=_positive_int, default=1000)
    p.add_argument("--n-events", type=int, default=500)
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return replace(RunConfig(), **values).validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    if args.command == "bench" and args.n_events < 0:
        parser.error("--n-events must be nonnegative")
    try:
        if args.command == "rank":
            cmd_rank(args.baskets, config)
        elif args.command == "mine":
            cmd_mine(args.baskets, config)
        elif args.command == "stream":
            cmd_stream(args.baskets, args.updates, config, stress=args.stress)
        else:
            cmd_bench(config, args.n_items, args.n_tx, args.n_events)
    except (OnlineHitsError, OSError, ValueError) as exc:
        print(f"onlinehits: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
