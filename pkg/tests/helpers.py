"""Shared builders for models, configurations, and randomized scenarios."""

from __future__ import annotations

import random

from geokv import core, simnet
from geokv.core import CAS, ABD, Configuration, WorkloadSpec


def uniform_model(d, rtt_ms=100.0, pn_gb=0.1, ps_gbmo=0.05, pv_hr=0.03,
                  theta=1e-5, bandwidth_gbps=1.0, self_price=0.0):
    doc = {
        "names": [f"d{i}" for i in range(d)],
        "rtt_ms": [[2 if i == j else rtt_ms for j in range(d)] for i in range(d)],
        "net_price_per_gb": [[self_price if i == j else pn_gb for j in range(d)]
                             for i in range(d)],
        "storage_price_gb_month": [ps_gbmo] * d,
        "vm_price_hour": [pv_hr] * d,
        "bandwidth_gbps": bandwidth_gbps,
        "theta_v": theta,
    }
    return core.model_from_dict(doc)


def random_model(rng: random.Random, d: int, rtt_lo=40, rtt_hi=240,
                 theta=1e-5, bandwidth_gbps=1.0):
    rtt = [[0.0] * d for _ in range(d)]
    price = [[0.0] * d for _ in range(d)]
    for i in range(d):
        rtt[i][i] = 2
        price[i][i] = rng.choice([0.0, 0.08])
        for j in range(i + 1, d):
            rtt[i][j] = rtt[j][i] = rng.uniform(rtt_lo, rtt_hi)
        for j in range(d):
            if i != j:
                price[i][j] = rng.choice([0.08, 0.09, 0.12, 0.15])
    doc = {
        "names": [f"d{i}" for i in range(d)],
        "rtt_ms": rtt,
        "net_price_per_gb": price,
        "storage_price_gb_month": [rng.uniform(0.04, 0.06) for _ in range(d)],
        "vm_price_hour": [rng.uniform(0.02, 0.032) for _ in range(d)],
        "bandwidth_gbps": bandwidth_gbps,
        "theta_v": theta,
    }
    return core.model_from_dict(doc)


def random_sizes(rng: random.Random, protocol: str, n: int, k: int, f: int):
    q1 = rng.randint(f + 1, n - f)
    if protocol == ABD:
        return (q1, n + 1 - q1)
    q3 = n + 1 - q1
    q4 = rng.randint(max(k + f, n + 1 - q1), n - f)
    return (q1, n + k - q4, q3, q4)


def random_config(rng: random.Random, d: int, f: int, origins,
                  protocol: str | None = None, epoch: int = 0,
                  exclude=(), shared_quorums: bool = False) -> Configuration:
    """A uniformly random valid configuration over the d-DC fleet."""
    protocol = protocol or rng.choice([ABD, CAS])
    pool = [i for i in range(d) if i not in exclude]
    n_max = min(len(pool), 2 * f + 3)
    n = rng.randint(2 * f + 1, n_max)
    servers = tuple(sorted(rng.sample(pool, n)))
    k = 1 if protocol == ABD else rng.randint(1, n - 2 * f)
    sizes = random_sizes(rng, protocol, n, k, f)
    quorums_by_origin = {}
    shared = tuple(tuple(sorted(rng.sample(servers, q))) for q in sizes)
    for origin in origins:
        if shared_quorums:
            quorums_by_origin[int(origin)] = shared
        else:
            quorums_by_origin[int(origin)] = tuple(
                tuple(sorted(rng.sample(servers, q))) for q in sizes)
    config = Configuration(epoch=epoch, protocol=protocol, servers=servers,
                           code_k=k, quorum_sizes=sizes,
                           quorums_by_origin=quorums_by_origin)
    assert core.config_validate(config, f).ok
    return config


def random_scenario(seed: int, *, with_reconfig: bool = False,
                    transitions=None, with_crash: bool | None = None,
                    d: int = 6, f: int = 1) -> simnet.Scenario:
    """A randomized single-key scenario with jitter, optional crashes and
    1-3 chained reconfigurations."""
    rng = random.Random(f"scenario:{seed}")
    model = random_model(rng, d)
    rate = rng.uniform(20, 500)
    duration_ms = max(3_000.0, min(20_000.0, 900.0 / rate * 1e3))
    n_origins = rng.randint(1, 3)
    origin_ids = sorted(rng.sample(range(d), n_origins))
    alphas = [rng.random() for _ in origin_ids]
    dist = [0.0] * d
    for o, a in zip(origin_ids, alphas):
        dist[o] = a / sum(alphas)
    dist[origin_ids[0]] += 1.0 - sum(dist)  # exact within float error
    spec = WorkloadSpec(rate=rate, read_ratio=rng.choice([0.1, 0.5, 0.9]),
                        origin_dist=tuple(dist), obj_size=rng.choice([400, 1000, 4000]),
                        meta_size=100, slo_get=5000, slo_put=5000, f=f)
    controller_dc = rng.choice([i for i in range(d) if dist[i] == 0])

    reconfigs = []
    protocols = [rng.choice([ABD, CAS])]
    if with_reconfig:
        if transitions is None:
            count = rng.randint(1, 3)
            transitions = [(rng.choice([ABD, CAS]), rng.choice([ABD, CAS]))
                           for _ in range(count)]
        protocols = [transitions[0][0]] + [t[1] for t in transitions]
    config = random_config(rng, d, f, origin_ids, protocol=protocols[0])

    crash_dc, crash_at = None, None
    if with_crash is None:
        with_crash = rng.random() < 0.5
    if with_crash:
        candidates = [s for s in range(d) if s != controller_dc and dist[s] == 0]
        if candidates:
            crash_dc = rng.choice(candidates)
            crash_at = rng.uniform(0.3, 0.7) * duration_ms

    for i, proto in enumerate(protocols[1:]):
        at = duration_ms * (i + 1) / (len(protocols))
        new = random_config(rng, d, f, origin_ids, protocol=proto,
                            exclude=() if crash_dc is None else (crash_dc,))
        reconfigs.append(simnet.ScheduledReconfig(at, "k", new))

    failures = []
    if crash_dc is not None:
        failures.append(simnet.Failure(crash_dc, crash_at))
    return simnet.Scenario(
        model=model,
        keys=[simnet.KeyScenario("k", config, spec)],
        duration_ms=duration_ms,
        seed=seed,
        jitter_ms=rng.uniform(0.5, 5.0),
        controller_dc=controller_dc,
        failures=failures,
        reconfigs=reconfigs,
    )
