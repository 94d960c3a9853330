"""Command-line front end: ``xorhash {simulate,sweep,verify,plan,gen-trace}``.

Machine-readable output goes to files (or stdout with ``--output -``);
logs go to stderr. Exit status: 0 when every requested check passes,
1 when a check fails, 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import experiment
from .config import ConfigError
from .consistency import check_bound
from .engine import run
from .h3hash import h3_new
from .resource import PLAN_HEADER, memory_sweep, get_device, plan_rows, reference_plan
from .workload import TraceFormatError, WorkloadError, gen_same_bucket, gen_uniform, trace_read, trace_write

log = logging.getLogger("xorhash")

SWEEP_HEADER = ("p", "k", "ratio", "entries", "slots", "key_bits", "value_bits", "mops", "mops_steady",
                "deferred_cycles", "search_cycles", "insert_cycles", "status")


class CheckFailed(Exception):
    pass


def _sim_overrides(args):
    sim = {}
    for name in ("p", "k", "entries", "slots", "key_bits", "value_bits", "clock_mhz", "overflow_mode"):
        val = getattr(args, name, None)
        if val is not None:
            sim[name] = val
    over = {"sim": sim} if sim else {}
    if getattr(args, "queries", None) is not None:
        over.setdefault("workload", {})["total_queries"] = args.queries
    if getattr(args, "nsq_fraction", None) is not None:
        over.setdefault("workload", {})["nsq_fraction"] = args.nsq_fraction
    if getattr(args, "key_space_bits", None) is not None:
        over.setdefault("workload", {})["key_space_bits"] = args.key_space_bits
    if getattr(args, "distribution", None) is not None:
        over.setdefault("workload", {})["distribution"] = args.distribution
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "theta", None):
        over["thetas"] = args.theta
    return over


def _load(args):
    cfg = experiment.load(args.config, args.preset, _sim_overrides(args))
    if args.seed is not None:
        cfg = experiment.with_seed(cfg, args.seed)
    return cfg


def _make_trace(sim, workload, trace_path=None):
    if trace_path:
        return trace_read(trace_path, sim.key_bits, sim.value_bits)
    if workload.distribution == "same_bucket":
        matrix = h3_new(sim.key_bits, sim.index_bits, sim.seed)
        return gen_same_bucket(workload, sim, matrix)
    return gen_uniform(workload, sim)


def _open_out(output, name):
    if output == "-":
        return _Stdout()
    os.makedirs(output, exist_ok=True)
    return open(os.path.join(output, name), "w", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def _write_table(output, name, header, rows, fmt):
    if fmt == "json-tree":
        with _open_out(output, name.rsplit(".", 1)[0] + ".json") as fh:
            json.dump([dict(zip(header, r)) for r in rows], fh, indent=2)
            fh.write("\n")
        return
    with _open_out(output, name) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(args):
    cfg = _load(args)
    trace = _make_trace(cfg.sim, cfg.workload, args.trace or cfg.trace)
    log.info("simulating %d queries on p=%d k=%d", len(trace), cfg.sim.p, cfg.sim.k)
    report, result = run(cfg.sim, trace)
    if args.format in (None, "json-tree"):
        with _open_out(args.output, "report.json") as fh:
            fh.write(report.to_json() + "\n")
    if args.format in (None, "csv"):
        with _open_out(args.output, "report.csv") as fh:
            fh.write(report.to_csv())
    if args.per_query:
        with _open_out(args.output, "queries.csv") as fh:
            result.write_csv(fh)
    log.info("steady-state %.1f MOPS, %d deferred cycles", report.mops_steady, report.deferred_cycles)
    if report.discipline_violations:
        raise CheckFailed(f"{report.discipline_violations} discipline violations")


def _sweep_point(args):
    cfg, point = args
    p, k, entries, slots, key_bits, value_bits = point
    try:
        sim = cfg.sim.replace(p=p, k=k, entries=entries, slots=slots, key_bits=key_bits, value_bits=value_bits)
        wl = replace(
            cfg.workload,
            nsq_fraction=min(cfg.workload.nsq_fraction, k / p),
            key_space_bits=min(cfg.workload.key_space_bits, key_bits),
        )
        report, _ = run(sim, _make_trace(sim, wl))
        lat = report.latency
        return (p, k, k / p, entries, slots, key_bits, value_bits, report.mops, report.mops_steady,
                report.deferred_cycles, lat["search"].get("cycles_max", ""), lat["insert"].get("cycles_max", ""), "ok")
    except Exception as exc:  # one bad grid point must not stop the sweep
        return (p, k, k / p if p else "", entries, slots, key_bits, value_bits, "", "", "", "", "",
                f"error: {exc}")


def sweep_grid(cfg):
    s = cfg.sweep
    ps = s.get("p", [cfg.sim.p])
    slots = s.get("slots", [cfg.sim.slots])
    entries = s.get("entries", [cfg.sim.entries])
    key_bits = s.get("key_bits", [cfg.sim.key_bits])
    value_bits = s.get("value_bits", [cfg.sim.value_bits])
    points = []
    for p in ps:
        if "nsq_ratio" in s:
            ks = sorted({max(1, round(r * p)) for r in s["nsq_ratio"]})
        else:
            ks = [k for k in s.get("k", [min(cfg.sim.k, p)]) if k <= p]
        for k, e, sl, kb, vb in itertools.product(ks, entries, slots, key_bits, value_bits):
            points.append((p, k, e, sl, kb, vb))
    return points


def run_sweep(cfg, jobs=1):
    points = sweep_grid(cfg)
    work = [(cfg, pt) for pt in points]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, work))
    return [_sweep_point(w) for w in work]


def cmd_sweep(args):
    cfg = _load(args)
    rows = run_sweep(cfg, args.jobs)
    _write_table(args.output, "sweep.csv", SWEEP_HEADER, rows, args.format)
    failed = [r for r in rows if r[-1] != "ok"]
    for r in failed:
        log.warning("grid point p=%s k=%s failed: %s", r[0], r[1], r[-1])
    log.info("%d grid points, %d failed", len(rows), len(failed))


def cmd_verify(args):
    cfg = _load(args)
    if cfg.workload.distribution != "uniform":
        raise ConfigError("workload.distribution", "verify draws uniform workloads")
    fault = 0 if args.inject_fault else -1
    log.info("verifying %d trials on p=%d t0=%d", cfg.trials, cfg.sim.p, cfg.sim.t0)
    check = check_bound(cfg.sim, cfg.workload, cfg.trials, cfg.thetas, jobs=args.jobs, fault_upsert=fault)
    _write_table(args.output, "trials.csv", check.TRIAL_HEADER, check.trials, args.format)
    _write_table(args.output, "bound.csv", check.BOUND_HEADER, check.table, args.format)
    unexplained = sum(t[3] for t in check.trials)
    for theta, emp, bnd in check.table:
        log.info("theta=%g empirical=%.4f bound=%.4f %s", theta, emp, bnd, "ok" if emp <= bnd else "VIOLATED")
    if unexplained:
        raise CheckFailed(f"{unexplained} unexplained mismatches")
    if not check.ok:
        raise CheckFailed("tail bound violated")


def cmd_plan(args):
    cfg = _load(args)
    plan = dict(cfg.plan)
    device = get_device(args.device or plan.get("device", "u250"))
    if args.preset_plan == "memory":
        rows = [(r["p"], r["k"], r["ratio"], r["entries"], r["bytes"]) for r in memory_sweep()]
        _write_table(args.output, "plan.csv", ("p", "k", "ratio", "entries", "bytes"), rows, args.format)
        return
    if args.preset_plan == "reference":
        rows = [tuple(r.values()) for r in reference_plan(device)]
        _write_table(args.output, "plan.csv", tuple(reference_plan(device)[0]), rows, args.format)
        return
    widths = [tuple(w) for w in plan.get("widths", [[cfg.sim.key_bits, cfg.sim.value_bits]])]
    rows = plan_rows(
        device,
        plan.get("p", [cfg.sim.p]),
        plan.get("k", [cfg.sim.k]),
        plan.get("entries", [cfg.sim.entries]),
        plan.get("slots", [cfg.sim.slots]),
        widths,
        plan.get("budget", 1.0),
    )
    _write_table(args.output, "plan.csv", PLAN_HEADER, rows, args.format)
    bad = sum(1 for r in rows if not r[11])
    if bad:
        log.warning("%d infeasible rows flagged", bad)


def cmd_gen_trace(args):
    cfg = _load(args)
    trace = _make_trace(cfg.sim, cfg.workload)
    path = args.output if args.output != "-" else "/dev/stdout"
    trace_write(path, trace)
    log.info("wrote %d queries to %s", len(trace), path)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--preset", choices=sorted(experiment.PRESETS))
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--output", default=".", help="output directory, or '-' for stdout")
    common.add_argument("--format", choices=("csv", "json-tree"))
    common.add_argument("-v", "--verbose", action="store_true")
    for name, typ in (("p", int), ("k", int), ("entries", int), ("slots", int), ("key-bits", int),
                      ("value-bits", int), ("clock-mhz", float), ("queries", int), ("nsq-fraction", float),
                      ("key-space-bits", int)):
        common.add_argument(f"--{name}", type=typ)
    common.add_argument("--overflow-mode", choices=("defer", "reject"))
    common.add_argument("--distribution", choices=("uniform", "same_bucket"))

    parser = argparse.ArgumentParser(prog="xorhash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="run one simulation")
    p.add_argument("--trace", help="trace file (default: generate from the workload config)")
    p.add_argument("--per-query", action="store_true", help="also write queries.csv")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", parents=[common], help="one simulation per grid point")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify", parents=[common], help="relaxed-consistency tail bound check")
    p.add_argument("--trials", type=int)
    p.add_argument("--theta", type=float, action="append")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("plan", parents=[common], help="SRAM capacity planning")
    p.add_argument("--device", help="built-in device name or JSON profile path")
    p.add_argument("--table", dest="preset_plan", choices=("memory", "reference"))
    p.set_defaults(func=cmd_plan)
    p = sub.add_parser("gen-trace", parents=[common], help="write a generated trace file")
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except CheckFailed as exc:
        log.error("check failed: %s", exc)
        return 1
    except (ConfigError, WorkloadError, TraceFormatError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
