"""Command-line entry points: run, collect-traces, train-clusters, bench-bandit, report.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .bandit import DEFAULT_ACTIONS, ActionSet
from .bench import BENCH_POLICIES, load_env, piecewise_env, run_bench, stationary_env, write_regret_csv
from .clustering import DEFAULT_N_CLUSTERS, ClusteringError, read_traces, train_cluster_model, write_traces
from .fingerprint import BinEdges
from .report import ReportError, build_report
from .scenario import POLICIES, ScenarioError, bundled_scenario, load_scenario
from .slotloop import available_backends

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
THREADS_ENV = "SENSE_BANDITS_THREADS"
log = logging.getLogger("coexsim")


class ConfigError(Exception):
    pass


def parse_seeds(text: str) -> list[int]:
    """``"1..20"`` (inclusive range), ``"3"`` or ``"1,4,9"``; combinations like ``"1..3,7"`` also work."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split(".."))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"--seeds: cannot parse {part!r} (use e.g. 1..20 or 1,2,3)") from None
    if not seeds:
        raise ConfigError("--seeds: need at least one seed")
    return seeds


def parse_actions(text: str | None) -> tuple[float, ...]:
    """``"-82:-62:2"`` (inclusive) or a comma list of dBm values."""
    if text is None:
        return DEFAULT_ACTIONS
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            n = int(round((hi - lo) / step)) + 1
            acts = tuple(lo + i * step for i in range(n))
        else:
            acts = tuple(float(x) for x in text.split(","))
        return ActionSet(acts).thresholds
    except ValueError as exc:
        raise ConfigError(f"--actions: {exc}") from None


def resolve_scenario_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    b = bundled_scenario(name.removesuffix(".json"))
    if b.exists():
        return b
    raise ConfigError(f"--scenario: file not found: {name}")


def max_workers(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return max(1, min(cap, n_jobs))


def _map(fn, jobs):
    workers = max_workers(len(jobs))
    if workers == 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _load(args):
    sc = load_scenario(resolve_scenario_path(args.scenario))
    if getattr(args, "policy", None):
        sc = sc.with_(policy=args.policy)
    if getattr(args, "cluster_model", None):
        sc = sc.with_(bandit=dataclasses.replace(sc.bandit, cluster_model=str(Path(args.cluster_model).resolve())))
    return sc.validate()


def _run_one(sc, seed, out, backend, debug_bandit):
    from .sim import run

    rep = run(sc.with_(seed=seed), backend=backend, debug_bandit=debug_bandit)
    rep.write(Path(out) / f"seed_{seed:04d}", debug_bandit=debug_bandit)
    return seed


def cmd_run(args) -> int:
    sc = _load(args)
    seeds = parse_seeds(args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.backend and args.backend not in available_backends():
        raise ConfigError(f"--backend: {args.backend!r} not available (have {available_backends()})")
    _map(_run_one, [(sc, s, out, args.backend, args.debug_bandit) for s in seeds])
    print(f"wrote {len(seeds)} result set(s) to {out}")
    return EXIT_OK


def _collect_one(sc, seed, backend):
    from .sim import collect_traces

    return collect_traces(sc, [seed], backend=backend)


def cmd_collect_traces(args) -> int:
    sc = _load(args)
    seeds = parse_seeds(args.seeds)
    traces = [t for chunk in _map(_collect_one, [(sc, s, args.backend) for s in seeds]) for t in chunk]
    if not traces:
        raise ConfigError("no traces collected: the scenario has no adapting devices")
    write_traces(args.out, traces)
    print(f"wrote {len(traces)} trace rows to {args.out}")
    return EXIT_OK


def cmd_train_clusters(args) -> int:
    traces = []
    for p in args.traces:
        if not Path(p).exists():
            raise ConfigError(f"--traces: file not found: {p}")
        traces.extend(read_traces(p))
    try:
        edges = BinEdges.uniform(args.bin_low, args.bin_high, args.bin_width)
    except ValueError as exc:
        raise ConfigError(f"--bin-*: {exc}") from None
    model = train_cluster_model(traces, args.clusters, seed=args.seed, actions=parse_actions(args.actions),
                                edges=edges, max_iters=args.max_iters)
    model.save(args.out)
    print(f"wrote {len(model.clusters)}-cluster model to {args.out}")
    return EXIT_OK


def cmd_bench_bandit(args) -> int:
    if args.env == "stationary":
        env = stationary_env()
    elif args.env == "piecewise":
        env = piecewise_env()
    else:
        if not Path(args.env).exists():
            raise ConfigError(f"--env: file not found: {args.env}")
        try:
            env = load_env(args.env)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--env: invalid environment ({exc})") from None
    policies = args.policies.split(",") if args.policies else list(BENCH_POLICIES)
    bad = [p for p in policies if p not in BENCH_POLICIES]
    if bad:
        raise ConfigError(f"--policies: unknown {bad}; choose from {list(BENCH_POLICIES)}")
    seeds = parse_seeds(args.seeds)
    res = run_bench(env, seeds, policies, alpha=args.alpha)
    write_regret_csv(args.out, env, seeds, res)
    for p in policies:
        totals = [tr.total for tr in res[p]]
        print(f"{p}: mean G(T) = {sum(totals) / len(totals):.3f} over {len(seeds)} seed(s)")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        files = build_report(args.results, args.out)
    except ReportError as exc:
        raise ConfigError(str(exc)) from None
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coexsim", description="Wi-Fi / NR-U coexistence simulator with "
                                "sensing-threshold bandits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--scenario", required=True, help="scenario JSON path, or a bundled name (default, desk)")
        sp.add_argument("--seeds", default="1", help="seed list: 1..20, 1,2,3 (default: 1)")
        sp.add_argument("--backend", choices=["cython", "python"], default=None,
                        help="slot-kernel backend (default: compiled if available)")
        sp.add_argument("--cluster-model", default=None, help="override the scenario's cluster model file")

    r = sub.add_parser("run", help="simulate a scenario for each seed and write CSV result sets")
    scenario_args(r)
    r.add_argument("--out", required=True, help="output directory (one seed_NNNN/ subdirectory per seed)")
    r.add_argument("--policy", choices=POLICIES, default=None, help="override the adapting devices' policy")
    r.add_argument("--debug-bandit", action="store_true", help="also write per-epoch agent score logs")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("collect-traces", help="exploration runs producing labeled fingerprints for clustering")
    scenario_args(c)
    c.add_argument("--out", required=True, help="trace CSV to write")
    c.set_defaults(func=cmd_collect_traces)

    t = sub.add_parser("train-clusters", help="fit a cluster model (KL k-means) to trace files")
    t.add_argument("--traces", required=True, nargs="+", help="trace CSV file(s)")
    t.add_argument("--clusters", type=int, default=DEFAULT_N_CLUSTERS, help="number of clusters")
    t.add_argument("--seed", type=int, default=0, help="k-means seeding RNG seed")
    t.add_argument("--out", required=True, help="model JSON to write")
    t.add_argument("--actions", default=None, help="threshold set, e.g. -82:-62:2 (default) or -82,-72,-62")
    t.add_argument("--bin-low", type=float, default=-95.0, help="lowest histogram edge, dBm")
    t.add_argument("--bin-high", type=float, default=-47.0, help="highest histogram edge, dBm")
    t.add_argument("--bin-width", type=float, default=2.0, help="histogram bin width, dB")
    t.add_argument("--max-iters", type=int, default=100, help="k-means iteration cap")
    t.set_defaults(func=cmd_train_clusters)

    b = sub.add_parser("bench-bandit", help="synthetic bandit regret benchmark")
    b.add_argument("--env", default="piecewise", help="'stationary', 'piecewise' or an environment JSON path")
    b.add_argument("--seeds", default="1..20", help="seed list (default: 1..20)")
    b.add_argument("--policies", default=None, help=f"comma list from {','.join(BENCH_POLICIES)} (default: all)")
    b.add_argument("--alpha", type=float, default=2.0, help="exploration weight")
    b.add_argument("--out", required=True, help="regret CSV to write")
    b.set_defaults(func=cmd_bench_bandit)

    rp = sub.add_parser("report", help="aggregate result sets across seeds with bootstrap CIs")
    rp.add_argument("--results", required=True, help="directory written by 'run'")
    rp.add_argument("--out", default=None, help="where to write report CSVs (default: the results directory)")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # unknown flags exit with status 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, ClusteringError) as exc:
        print(f"coexsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"coexsim: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
