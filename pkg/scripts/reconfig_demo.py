#!/usr/bin/env python3
"""Two-reconfiguration timeline on the bundled 9-region model.

A key starts on CAS(5,3) spanning Tokyo/Sydney/Singapore/Virginia/Oregon
with a read-write workload from four Asian/European origins. A load change
prompts a switch to ABD(3) on the three Asian regions; later the Singapore
region fails and the key is reconfigured around it onto CAS(4,2). The
controller sits in Los Angeles.

Usage: python scripts/reconfig_demo.py [out_dir]
"""

import sys
from pathlib import Path

from geokv import checker, core, simnet
from geokv.core import make_uniform_config


def build_scenario(duration_s=60.0, seed=1):
    model = core.load_builtin_model()
    origins = [0, 1, 2, 3]  # tokyo, sydney, singapore, frankfurt
    spec = core.WorkloadSpec(rate=100.0, read_ratio=0.5,
                             origin_dist=(0.3, 0.3, 0.3, 0.1, 0, 0, 0, 0, 0),
                             obj_size=1000, meta_size=100,
                             slo_get=700.0, slo_put=800.0, f=1)
    initial = make_uniform_config("cas", (0, 1, 2, 5, 8), 3, (3, 4, 3, 4),
                                  origins=origins)
    to_abd = make_uniform_config("abd", (0, 1, 2), 1, (2, 2), origins=origins)
    around_failure = make_uniform_config("cas", (0, 1, 5, 8), 2, (3, 3, 2, 3),
                                         origins=origins)
    return simnet.Scenario(
        model=model,
        keys=[simnet.KeyScenario("wkey", initial, spec)],
        duration_ms=duration_s * 1e3,
        seed=seed,
        controller_dc=7,  # los angeles
        failures=[simnet.Failure(dc=2, at_ms=0.6 * duration_s * 1e3)],
        reconfigs=[
            simnet.ScheduledReconfig(duration_s * 1e3 / 3, "wkey", to_abd),
            simnet.ScheduledReconfig(duration_s * 2e3 / 3, "wkey", around_failure),
        ],
    )


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = build_scenario()
    history, stats = simnet.run(scenario)
    core.write_history(history, str(out_dir / "reconfig_demo_history.jsonl"))
    (out_dir / "reconfig_demo_stats.json").write_text(stats.to_json(indent=2))
    verdict = checker.check(history)
    print(f"ops={stats.ops_total} incomplete={stats.ops_incomplete} "
          f"linearizable={verdict.linearizable}")
    for report in stats.reconfig_reports:
        phases = " ".join(f"{name}={end - start:.0f}ms"
                          for name, start, end in report["phases"])
        print(f"epoch {report['old_epoch']}->{report['new_epoch']}: "
              f"{report['duration_ms']:.0f}ms [{phases}] "
              f"blocked={report['ops_blocked']} failed-over={report['ops_failed_over']}")


if __name__ == "__main__":
    main()
