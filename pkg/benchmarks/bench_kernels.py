"""Time the simulator kernels under numba and under the plain-Python fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by XORHASH_DISABLE_NUMBA. Usage:

    python3 benchmarks/bench_kernels.py [--queries N] [--repeat R]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from xorhash import SimConfig, h3_new, run
from xorhash._jit import backend_name
from xorhash.fabric import dispatch_trace
from xorhash.workload import WorkloadSpec, gen_same_bucket

n, repeat = int(sys.argv[1]), int(sys.argv[2])
cfg = SimConfig(p=16, k=16, entries=1024, slots=4, key_bits=64, value_bits=64)
trace = gen_same_bucket(WorkloadSpec(total_queries=n, key_space_bits=64, seed=1), cfg,
                        h3_new(64, cfg.index_bits, cfg.seed))
is_nsq = trace.ops != 0
small = gen_same_bucket(WorkloadSpec(total_queries=64, key_space_bits=64, seed=2), cfg,
                        h3_new(64, cfg.index_bits, cfg.seed))

t = time.perf_counter()
run(cfg, small)  # includes JIT compile or cache load
warm = time.perf_counter() - t

def best(fn):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out

t_dispatch, _ = best(lambda: dispatch_trace(is_nsq, cfg.p, cfg.k, False))
t_run, (report, res) = best(lambda: run(cfg, trace))
print(json.dumps({
    "backend": backend_name(),
    "first_call_s": warm,
    "dispatch_s": t_dispatch,
    "run_s": t_run,
    "mops_steady": report.mops_steady,
    "checksum": int(res.outcome.astype(np.int64).sum() + res.complete_cycle.sum()),
}))
"""


def run_backend(disable, queries, repeat):
    env = dict(os.environ)
    env.pop("XORHASH_DISABLE_NUMBA", None)
    if disable:
        env["XORHASH_DISABLE_NUMBA"] = "1"
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(queries), str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    fast = run_backend(False, args.queries, args.repeat)
    slow = run_backend(True, args.queries, 1)
    print(f"{args.queries} same-bucket queries, p=16 k=16")
    print(f"{'backend':<8} {'dispatch s':>11} {'run s':>9} {'q/s':>12}")
    for r in (fast, slow):
        print(f"{r['backend']:<8} {r['dispatch_s']:>11.4f} {r['run_s']:>9.4f} {args.queries / r['run_s']:>12.0f}")
    print(f"speedup (run): {slow['run_s'] / fast['run_s']:.1f}x")
    if fast["checksum"] != slow["checksum"] or fast["mops_steady"] != slow["mops_steady"]:
        print("backends disagree", file=sys.stderr)
        return 1
    print("results identical across backends")
    return 0


if __name__ == "__main__":
    sys.exit(main())
