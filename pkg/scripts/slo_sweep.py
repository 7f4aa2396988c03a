#!/usr/bin/env python3
"""Sweep the latency SLO and record each policy's chosen configuration.

Reproduces the protocol-choice-vs-SLO picture on the bundled 9-region
model: tighten the SLO and replication wins; relax it and erasure coding
takes over on read-heavy traffic.

Usage: python scripts/slo_sweep.py [read_ratio] [out.csv]
"""

import dataclasses
import sys

from geokv import core, optimizer


def main():
    read_ratio = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
    out = sys.argv[2] if len(sys.argv) > 2 else None
    model = core.load_builtin_model()
    spec = core.WorkloadSpec(rate=500.0, read_ratio=read_ratio,
                             origin_dist=(0.5, 0.5, 0, 0, 0, 0, 0, 0, 0),
                             obj_size=1000, meta_size=100,
                             slo_get=1000.0, slo_put=1000.0, f=1)
    rows = ["slo_ms,policy,protocol,n,k,cost"]
    for slo in range(200, 1001, 100):
        swept = dataclasses.replace(spec, slo_get=float(slo), slo_put=float(slo))
        for policy in (optimizer.FULL, optimizer.ABD_ONLY, optimizer.CAS_ONLY):
            decision = optimizer.optimize(swept, model, policy)
            if decision.feasible:
                cfg = decision.configuration
                rows.append(f"{slo},{policy.name},{cfg.protocol},{cfg.n},"
                            f"{cfg.code_k},{decision.cost:.6e}")
            else:
                rows.append(f"{slo},{policy.name},infeasible,,,")
    text = "\n".join(rows) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
