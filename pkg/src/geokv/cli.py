"""Command-line entry point: optimize, simulate, check, sweep.

Exit codes: 0 success (and `check`: linearizable), 1 bad input (and `check`:
not linearizable), 2 infeasible optimization (and `check`: malformed
history). Every command is a pure function of its inputs, flags and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import checker, core, optimizer, simnet


def _fail_input(path: str, exc: Exception) -> "NoReturn":
    print(f"error: {path}: {exc}", file=sys.stderr)
    raise SystemExit(1)


def _load_model(path: str, theta_v: float | None):
    try:
        if ":" in path and path.endswith(".csv"):
            rtt_path, price_path = path.split(":", 1)
            model = core.load_model_csv(rtt_path, price_path)
        elif path.startswith("builtin:"):
            model = core.load_builtin_model(path.removeprefix("builtin:"))
        else:
            model = core.load_model(path)
    except (OSError, ValueError, KeyError) as exc:
        _fail_input(path, exc)
    if theta_v is not None:
        model = dataclasses.replace(model, theta_v=theta_v)
    return model


def _load_workload(path: str, args) -> core.WorkloadSpec:
    try:
        spec = core.load_workload(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail_input(path, exc)
    updates = {}
    if args.slo_get is not None:
        updates["slo_get"] = args.slo_get
    if args.slo_put is not None:
        updates["slo_put"] = args.slo_put
    if args.f is not None:
        updates["f"] = args.f
    return dataclasses.replace(spec, **updates) if updates else spec


def cmd_optimize(args) -> int:
    model = _load_model(args.model, args.theta_v)
    spec = _load_workload(args.workload, args)
    try:
        policy = optimizer.parse_policy(args.policy)
    except ValueError as exc:
        _fail_input(args.policy, exc)
    decision = optimizer.optimize(spec, model, policy, pool_size=args.pool)
    print(json.dumps(decision.to_dict(), indent=2, sort_keys=True))
    return 0 if decision.feasible else 2


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario) as fh:
            doc = json.load(fh)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.duration is not None:
            doc["duration_s"] = args.duration
        scenario = simnet.scenario_from_dict(doc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail_input(args.scenario, exc)
    history, stats = simnet.run(scenario)
    if args.history_out:
        core.write_history(history, args.history_out)
    if args.stats_out:
        with open(args.stats_out, "w") as fh:
            fh.write(stats.to_json(indent=2) + "\n")
    dollars_per_s = stats.network_dollars / (stats.duration_ms / 1e3)
    print(f"ops={stats.ops_total} completed={stats.ops_completed} "
          f"incomplete={stats.ops_incomplete}")
    print(f"network $/s={dollars_per_s:.3e} optimized-get={stats.optimized_get_fraction:.3f} "
          f"max-concurrency={stats.max_concurrency}")
    for origin, kinds in stats.latency.items():
        line = " ".join(f"{kind.lower()} p99={v['p99']:.1f}ms avg={v['avg']:.1f}ms"
                        for kind, v in kinds.items())
        print(f"origin {origin}: {line}")
    for report in stats.reconfig_reports:
        print(f"reconfig {report['key']} epoch {report['old_epoch']}->"
              f"{report['new_epoch']} in {report['duration_ms']:.0f}ms "
              f"blocked={report['ops_blocked']} failed-over={report['ops_failed_over']}")
    return 0


def cmd_check(args) -> int:
    try:
        history = core.read_history(args.history)
    except (OSError, ValueError, KeyError) as exc:
        _fail_input(args.history, exc)
    try:
        verdict = checker.check(history, pending_put=args.pending_put,
                                pending_get=args.pending_get)
    except ValueError as exc:
        print(f"error: malformed history: {exc}", file=sys.stderr)
        return 2
    if verdict.linearizable:
        print(f"linearizable ({len(verdict.witness)} ops in witness)")
        return 0
    print(f"not linearizable: {verdict.reason}")
    print("conflicting ops: " + " ".join(verdict.violation))
    return 1


def cmd_sweep(args) -> int:
    model = _load_model(args.model, args.theta_v)
    spec = _load_workload(args.workload, args)
    try:
        lo, hi = (float(x) for x in args.slo_range.split(":"))
        policies = [optimizer.parse_policy(p) for p in args.policies.split(",")]
    except ValueError as exc:
        _fail_input(args.slo_range, exc)
    rows = ["slo_ms,policy,protocol,n,k,cost"]
    slo = lo
    while slo <= hi + 1e-9:
        swept = dataclasses.replace(spec, slo_get=slo, slo_put=slo)
        for policy in policies:
            decision = optimizer.optimize(swept, model, policy, pool_size=args.pool)
            if decision.feasible:
                cfg = decision.configuration
                rows.append(f"{slo:g},{policy.name},{cfg.protocol},{cfg.n},"
                            f"{cfg.code_k},{decision.cost:.6e}")
            else:
                rows.append(f"{slo:g},{policy.name},infeasible,,,")
        slo += args.step
    out = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geokv")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="pick a minimal-cost configuration")
    p_opt.add_argument("model", help="cluster model JSON (or rtt.csv:price.csv)")
    p_opt.add_argument("workload", help="workload spec JSON")
    p_opt.add_argument("--slo-get", type=float, default=None)
    p_opt.add_argument("--slo-put", type=float, default=None)
    p_opt.add_argument("--f", type=int, default=None)
    p_opt.add_argument("--policy", default="full")
    p_opt.add_argument("--theta-v", type=float, default=None)
    p_opt.add_argument("--pool", type=int, default=6)
    p_opt.set_defaults(fn=cmd_optimize)

    p_sim = sub.add_parser("simulate", help="run a scenario deterministically")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--duration", type=float, default=None, help="seconds")
    p_sim.add_argument("--history-out", default=None)
    p_sim.add_argument("--stats-out", default=None)
    p_sim.set_defaults(fn=cmd_simulate)

    p_chk = sub.add_parser("check", help="decide linearizability of a history")
    p_chk.add_argument("history")
    p_chk.add_argument("--pending-put", default=checker.PENDING_POSSIBLE,
                       choices=[checker.PENDING_POSSIBLE, checker.PENDING_DISCARD])
    p_chk.add_argument("--pending-get", default=checker.PENDING_DISCARD,
                       choices=[checker.PENDING_POSSIBLE, checker.PENDING_DISCARD])
    p_chk.set_defaults(fn=cmd_check)

    p_swp = sub.add_parser("sweep", help="cost vs latency-SLO sweep (CSV)")
    p_swp.add_argument("model")
    p_swp.add_argument("workload")
    p_swp.add_argument("--slo-range", required=True, help="lo:hi in ms")
    p_swp.add_argument("--step", type=float, default=100.0)
    p_swp.add_argument("--policies", default="full,abd-only,cas-only")
    p_swp.add_argument("--slo-get", type=float, default=None)
    p_swp.add_argument("--slo-put", type=float, default=None)
    p_swp.add_argument("--f", type=int, default=None)
    p_swp.add_argument("--theta-v", type=float, default=None)
    p_swp.add_argument("--pool", type=int, default=6)
    p_swp.add_argument("--out", default=None)
    p_swp.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
