"""Compare the compiled and pure-Python slot kernels on the same workload.

    python3 benchmarks/bench_kernel.py [--epochs 50] [--repeat 3]

Runs the bundled desk scenario with each available backend, checks that the
outputs are identical and prints wall time per simulated second.
"""

import argparse
import time

from coexsim.scenario import bundled_scenario, load_scenario
from coexsim.sim import run
from coexsim.slotloop import available_backends


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=50, help="epochs to simulate per run")
    ap.add_argument("--repeat", type=int, default=3, help="timed runs per backend (best is reported)")
    args = ap.parse_args()

    sc = load_scenario(bundled_scenario("desk")).with_(duration_epochs=args.epochs, policy="random")
    sim_seconds = args.epochs * sc.epochs.epoch_s
    times, rows = {}, {}
    for be in available_backends():
        best = float("inf")
        for _ in range(args.repeat):
            t = time.perf_counter()
            rep = run(sc, backend=be)
            best = min(best, time.perf_counter() - t)
        times[be], rows[be] = best, rep.epoch_rows
        print(f"{be:>7}: {best:8.3f} s for {sim_seconds:g} simulated s ({best / sim_seconds:.3f} s/s)")
    if len(times) == 2:
        print(f"speedup: {times['python'] / times['cython']:.1f}x; identical output: {rows['python'] == rows['cython']}")
    else:
        print("compiled kernel not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
