"""Per-key cost model and configuration search.

The cost of a configuration is evaluated from the same per-phase byte
accounting the protocols use on the wire (request bytes priced client->server,
reply bytes server->client, each over the origin's quorum members), plus
storage priced at each hosting DC and a VM term proportional to arrival rate
times quorum memberships. Worst-case latency sums, per phase, the slowest
quorum member's round trip plus transfer time; one-phase GETs are never
credited.

The search enumerates protocol, placement, code dimension and quorum sizes
exactly; per origin it only considers quorums built from the cheapest members
within a latency prefix (DCs ranked per origin, by inbound network price for
cost objectives and by RTT for the latency baselines), which keeps the scan
polynomial while staying exact whenever member orderings agree across phases
(always true with uniform bandwidth). A full brute-force enumerator over all
per-origin quorum subsets serves as the oracle for small fleets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import abd, cas
from .core import (ABD, CAS, ClusterModel, Configuration, WorkloadSpec,
                   quorum_sizes_ok)

PROTOCOL_RANK = {ABD: 0, CAS: 1}


# ---------------------------------------------------------------------------
# policies

@dataclass(frozen=True)
class Policy:
    """Search policy: which protocols to consider and what to minimize."""

    kind: str  # "full" | "abd_only" | "cas_only" | "nearest" | "fixed"
    protocol: str | None = None  # restriction for nearest/fixed
    n: int | None = None  # fixed replication degree / code length
    k: int | None = None  # fixed code dimension

    @property
    def latency_objective(self) -> bool:
        return self.kind == "nearest"

    def protocols(self) -> tuple[str, ...]:
        if self.kind == "abd_only":
            return (ABD,)
        if self.kind == "cas_only":
            return (CAS,)
        if self.protocol is not None:
            return (self.protocol,)
        return (ABD, CAS)

    @property
    def name(self) -> str:
        parts = [self.kind]
        if self.protocol:
            parts.append(self.protocol)
        if self.n is not None:
            parts.append(f"n{self.n}")
        if self.k is not None:
            parts.append(f"k{self.k}")
        return "-".join(parts)


FULL = Policy("full")
ABD_ONLY = Policy("abd_only")
CAS_ONLY = Policy("cas_only")
NEAREST = Policy("nearest")


def parse_policy(text: str) -> Policy:
    text = text.strip().lower().replace("_", "-")
    if text == "full":
        return FULL
    if text == "abd-only":
        return ABD_ONLY
    if text == "cas-only":
        return CAS_ONLY
    if text == "nearest":
        return NEAREST
    if text in ("nearest-abd", "nearest-cas"):
        return Policy("nearest", protocol=text.split("-")[1])
    if text.startswith("fixed:"):
        parts = text.split(":")
        protocol = parts[1]
        n = int(parts[2])
        k = int(parts[3]) if protocol == CAS and len(parts) > 3 else 1
        return Policy("fixed", protocol=protocol, n=n, k=k)
    raise ValueError(f"unknown policy {text!r}")


# ---------------------------------------------------------------------------
# cost and latency of a concrete configuration

@dataclass(frozen=True)
class CostBreakdown:
    c_get: float
    c_put: float
    c_storage: float
    c_vm: float

    @property
    def total(self) -> float:
        return self.c_get + self.c_put + self.c_storage + self.c_vm

    def to_dict(self) -> dict:
        return {"c_get": self.c_get, "c_put": self.c_put,
                "c_storage": self.c_storage, "c_vm": self.c_vm,
                "total": self.total}


def _phase_tables(protocol: str, obj_size: int, meta_size: int, k: int):
    mod = abd if protocol == ABD else cas
    return mod.put_phases(obj_size, meta_size, k), mod.get_phases(obj_size, meta_size, k)


def _network_cost(config: Configuration, spec: WorkloadSpec, model: ClusterModel,
                  phases, rate: float) -> float:
    p = model.net_price
    total = 0.0
    for origin, alpha in enumerate(spec.origin_dist):
        if alpha <= 0:
            continue
        quorums = config.quorums(origin)
        per_op = 0.0
        for qidx, out_b, in_b in phases:
            for j in quorums[qidx]:
                per_op += out_b * p[origin][j] + in_b * p[j][origin]
        total += alpha * per_op
    return rate * total


def cost_put(config: Configuration, spec: WorkloadSpec, model: ClusterModel) -> float:
    put_t, _ = _phase_tables(config.protocol, spec.obj_size, spec.meta_size, config.code_k)
    return _network_cost(config, spec, model, put_t, (1.0 - spec.read_ratio) * spec.rate)


def cost_get(config: Configuration, spec: WorkloadSpec, model: ClusterModel) -> float:
    _, get_t = _phase_tables(config.protocol, spec.obj_size, spec.meta_size, config.code_k)
    return _network_cost(config, spec, model, get_t, spec.read_ratio * spec.rate)


def cost_storage(config: Configuration, spec: WorkloadSpec, model: ClusterModel) -> float:
    stored = config.chunk_size(spec.obj_size)
    return float(sum(model.storage_price[j] * stored for j in config.servers))


def cost_vm(config: Configuration, spec: WorkloadSpec, model: ClusterModel) -> float:
    total = 0.0
    for origin, alpha in enumerate(spec.origin_dist):
        if alpha <= 0:
            continue
        for quorum in config.quorums(origin):
            total += alpha * sum(model.vm_price[j] for j in quorum)
    return model.theta_v * spec.rate * total


def cost_breakdown(config: Configuration, spec: WorkloadSpec,
                   model: ClusterModel) -> CostBreakdown:
    return CostBreakdown(cost_get(config, spec, model), cost_put(config, spec, model),
                         cost_storage(config, spec, model), cost_vm(config, spec, model))


def _phase_latency(model: ClusterModel, i: int, j: int, out_b: int, in_b: int) -> float:
    return (model.latency_oneway[i][j] + model.transfer_ms(i, j, out_b)
            + model.latency_oneway[j][i] + model.transfer_ms(j, i, in_b))


def latency_worstcase(config: Configuration, origin: int, spec: WorkloadSpec,
                      model: ClusterModel) -> tuple[float, float]:
    """(get_ms, put_ms): per-phase maxima over the origin's quorum members."""
    put_t, get_t = _phase_tables(config.protocol, spec.obj_size, spec.meta_size,
                                 config.code_k)
    quorums = config.quorums(origin)
    get_ms = sum(max(_phase_latency(model, origin, j, out_b, in_b)
                     for j in quorums[qidx])
                 for qidx, out_b, in_b in get_t)
    put_ms = sum(max(_phase_latency(model, origin, j, out_b, in_b)
                     for j in quorums[qidx])
                 for qidx, out_b, in_b in put_t)
    return get_ms, put_ms


# ---------------------------------------------------------------------------
# decisions

@dataclass(frozen=True)
class OptimizerDecision:
    feasible: bool
    policy: str
    configuration: Configuration | None = None
    breakdown: CostBreakdown | None = None
    latency: dict = field(default_factory=dict)  # origin -> (get_ms, put_ms)
    reason: str = ""

    @property
    def cost(self) -> float:
        return self.breakdown.total if self.breakdown else math.inf

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "policy": self.policy,
            "configuration": self.configuration.to_dict() if self.configuration else None,
            "breakdown": self.breakdown.to_dict() if self.breakdown else None,
            "latency_ms": {str(o): {"get": g, "put": p}
                           for o, (g, p) in sorted(self.latency.items())},
            "reason": self.reason,
        }


# ---------------------------------------------------------------------------
# per-origin quorum selection

class _QuorumEval:
    """Per-(origin, quorum-index) member weights and phase latencies."""

    def __init__(self, model, spec, origin, alpha, qidx, put_t, get_t):
        self.put_entry = next((e for e in put_t if e[0] == qidx), None)
        self.get_entry = next((e for e in get_t if e[0] == qidx), None)
        self.model = model
        self.spec = spec
        self.origin = origin
        self.alpha = alpha

    def weight(self, j: int) -> float:
        spec, model, i = self.spec, self.model, self.origin
        w = model.theta_v * spec.rate * self.alpha * model.vm_price[j]
        p = model.net_price
        if self.put_entry is not None:
            _, out_b, in_b = self.put_entry
            w += (1 - spec.read_ratio) * spec.rate * self.alpha * \
                (out_b * p[i][j] + in_b * p[j][i])
        if self.get_entry is not None:
            _, out_b, in_b = self.get_entry
            w += spec.read_ratio * spec.rate * self.alpha * \
                (out_b * p[i][j] + in_b * p[j][i])
        return w

    def lat_get(self, j: int) -> float:
        if self.get_entry is None:
            return 0.0
        _, out_b, in_b = self.get_entry
        return _phase_latency(self.model, self.origin, j, out_b, in_b)

    def lat_put(self, j: int) -> float:
        if self.put_entry is None:
            return 0.0
        _, out_b, in_b = self.put_entry
        return _phase_latency(self.model, self.origin, j, out_b, in_b)


def _quorum_candidates(ev: _QuorumEval, members: list[int], q: int):
    """Pareto set of q-member quorums: for each latency prefix, the cheapest
    q members inside it. Returns [(members, cost, lat_get, lat_put)]."""
    ranked = sorted(members, key=lambda j: (max(ev.lat_get(j), ev.lat_put(j)),
                                            ev.lat_get(j), j))
    out = []
    seen = set()
    for prefix in range(q, len(ranked) + 1):
        window = ranked[:prefix]
        chosen = tuple(sorted(sorted(window, key=lambda j: (ev.weight(j), j))[:q]))
        if chosen in seen:
            continue
        seen.add(chosen)
        cost = sum(ev.weight(j) for j in chosen)
        lg = max((ev.lat_get(j) for j in chosen), default=0.0)
        lp = max((ev.lat_put(j) for j in chosen), default=0.0)
        out.append((chosen, cost, lg, lp))
    # cheapest-first scan keeps only the Pareto frontier over (cost, lat)
    out.sort(key=lambda c: (c[1], c[2], c[3], c[0]))
    pruned = []
    for cand in out:
        if any(o[2] <= cand[2] and o[3] <= cand[3] for o in pruned):
            continue
        pruned.append(cand)
    return pruned


def _select_origin(model, spec, origin, alpha, members, sizes, put_t, get_t,
                   slo_get, slo_put, latency_objective):
    """Best per-origin quorum assignment, or None if no combo meets the SLOs.

    Returns (quorums, cost, get_ms, put_ms)."""
    evs = [_QuorumEval(model, spec, origin, alpha, qidx, put_t, get_t)
           for qidx in range(len(sizes))]
    cand_lists = []
    for qidx, q in enumerate(sizes):
        if q > len(members):
            return None
        cands = _quorum_candidates(evs[qidx], members, q)
        # cheapest-last ordering lets the unconstrained-first shortcut work
        cands.sort(key=lambda c: -c[1])
        cand_lists.append(cands)

    unconstrained = tuple(c[-1] for c in cand_lists)
    best = None
    options = [unconstrained] if _combo_feasible(unconstrained, put_t, get_t,
                                                 slo_get, slo_put) else None
    if options is not None and not latency_objective:
        combos = options
    else:
        combos = itertools.product(*cand_lists)
    for combo in combos:
        if not _combo_feasible(combo, put_t, get_t, slo_get, slo_put):
            continue
        cost = sum(c[1] for c in combo)
        get_ms = sum(combo[qidx][2] for qidx, _, _ in get_t)
        put_ms = sum(combo[qidx][3] for qidx, _, _ in put_t)
        if latency_objective:
            key = (spec.read_ratio * get_ms + (1 - spec.read_ratio) * put_ms,
                   cost, tuple(c[0] for c in combo))
        else:
            key = (cost, get_ms + put_ms, tuple(c[0] for c in combo))
        if best is None or key < best[0]:
            best = (key, combo, cost, get_ms, put_ms)
    if best is None:
        return None
    _, combo, cost, get_ms, put_ms = best
    return tuple(c[0] for c in combo), cost, get_ms, put_ms


def _combo_feasible(combo, put_t, get_t, slo_get, slo_put) -> bool:
    get_ms = sum(combo[qidx][2] for qidx, _, _ in get_t)
    put_ms = sum(combo[qidx][3] for qidx, _, _ in put_t)
    return get_ms <= slo_get and put_ms <= slo_put


# ---------------------------------------------------------------------------
# size enumeration

def _size_tuples(protocol: str, n: int, k: int, f: int):
    """Pareto-minimal quorum size tuples (growing any size never helps)."""
    out = []
    if protocol == ABD:
        for q1 in range(f + 1, n - f + 1):
            q2 = n + 1 - q1
            if 1 <= q2 <= n - f:
                out.append((q1, q2))
    else:
        if n - k < 2 * f:
            return []
        for q1 in range(f + 1, n - f + 1):
            q3 = n + 1 - q1
            if not 1 <= q3 <= n - f:
                continue
            for q4 in range(max(k, k + f, n + 1 - q1), n - f + 1):
                q2 = n + k - q4
                if 1 <= q2 <= n - f:
                    out.append((q1, q2, q3, q4))
    return out


# ---------------------------------------------------------------------------
# heuristic search

def optimize(spec: WorkloadSpec, model: ClusterModel, policy: Policy = FULL,
             pool_size: int = 6) -> OptimizerDecision:
    """Minimal-cost (or, for `nearest`, minimal-latency) feasible decision."""
    spec.validate()
    best = None
    for protocol in policy.protocols():
        found = _search_protocol(protocol, spec, model, policy, pool_size)
        if found is None:
            continue
        if best is None or found[0] < best[0]:
            best = found
    if best is None:
        return OptimizerDecision(False, policy.name,
                                 reason="no configuration meets the latency SLOs "
                                        "and quorum constraints")
    return _materialize(best, spec, model, policy)


def _origin_ranking(model: ClusterModel, origin: int, latency_objective: bool):
    price = model.net_price
    if latency_objective:
        return sorted(range(model.d),
                      key=lambda j: (model.rtt(origin, j), price[j][origin], j))
    return sorted(range(model.d),
                  key=lambda j: (price[j][origin], model.rtt(origin, j), j))


def _fixed_placement(model: ClusterModel, spec: WorkloadSpec, n: int) -> tuple[int, ...]:
    """Fixed baselines: the n DCs with the lowest mean price toward users."""
    origins = [i for i, a in enumerate(spec.origin_dist) if a > 0]
    def avg_price(j):
        return sum(model.net_price[j][i] for i in origins) / len(origins)
    ranked = sorted(range(model.d), key=lambda j: (avg_price(j), j))
    return tuple(sorted(ranked[:n]))


def _search_protocol(protocol: str, spec: WorkloadSpec, model: ClusterModel,
                     policy: Policy, pool_size: int):
    origins = [i for i, a in enumerate(spec.origin_dist) if a > 0]
    topm = {i: _origin_ranking(model, i, policy.latency_objective)[:pool_size]
            for i in origins}
    pool = sorted(set().union(*[set(v) for v in topm.values()]))
    f = spec.f

    if policy.kind == "fixed":
        n = policy.n
        placements = [_fixed_placement(model, spec, n)] if n <= model.d else []
        n_range = [n] if placements else []
    else:
        n_min = 2 * f + 1
        n_range = range(n_min, len(pool) + 1)
        placements = None

    put_t_cache = {}
    best = None
    for n in n_range:
        server_sets = placements if placements is not None \
            else itertools.combinations(pool, n)
        server_sets = list(server_sets)
        if protocol == ABD:
            k_range = [1]
        elif policy.k is not None:
            k_range = [policy.k] if n - policy.k >= 2 * f else []
        else:
            k_range = range(1, n - 2 * f + 1)
        for servers in server_sets:
            members_by_origin = {}
            for i in origins:
                within = [s for s in servers if s in topm[i]]
                members_by_origin[i] = within if len(within) >= 1 else list(servers)
            for k in k_range:
                if (protocol, k) not in put_t_cache:
                    put_t_cache[(protocol, k)] = _phase_tables(
                        protocol, spec.obj_size, spec.meta_size, k)
                put_t, get_t = put_t_cache[(protocol, k)]
                storage = sum(model.storage_price[j] for j in servers) * \
                    (math.ceil(spec.obj_size / k) if protocol == CAS else spec.obj_size)
                for sizes in _size_tuples(protocol, n, k, f):
                    max_q = max(sizes)
                    picks = {}
                    total_cost = storage
                    lat_obj = 0.0
                    ok = True
                    for i in origins:
                        members = members_by_origin[i]
                        if len(members) < max_q:
                            members = list(servers)
                        sel = _select_origin(
                            model, spec, i, spec.origin_dist[i], members, sizes,
                            put_t, get_t, spec.slo_get, spec.slo_put,
                            policy.latency_objective)
                        if sel is None:
                            ok = False
                            break
                        picks[i] = sel
                        total_cost += sel[1]
                        lat_obj += spec.origin_dist[i] * (
                            spec.read_ratio * sel[2] + (1 - spec.read_ratio) * sel[3])
                    if not ok:
                        continue
                    tiebreak = (PROTOCOL_RANK[protocol], n, k, tuple(servers), sizes,
                                tuple(picks[i][0] for i in origins))
                    objective = (lat_obj, total_cost) if policy.latency_objective \
                        else (total_cost, lat_obj)
                    key = (objective, tiebreak)
                    if best is None or key < best[0]:
                        best = (key, protocol, tuple(servers), k, sizes, picks)
    return best


def _materialize(found, spec: WorkloadSpec, model: ClusterModel,
                 policy: Policy) -> OptimizerDecision:
    _, protocol, servers, k, sizes, picks = found
    put_t, get_t = _phase_tables(protocol, spec.obj_size, spec.meta_size, k)
    quorums_by_origin = {}
    latencies = {}
    for i in range(model.d):
        if i in picks:
            quorums_by_origin[i] = picks[i][0]
            latencies[i] = (picks[i][2], picks[i][3])
            continue
        # origins with no traffic get the latency-minimal assignment and
        # carry no cost or SLO constraint
        sel = _select_origin(model, spec, i, 0.0, list(servers), sizes,
                             put_t, get_t, math.inf, math.inf, True)
        quorums_by_origin[i] = sel[0]
    config = Configuration(epoch=0, protocol=protocol, servers=servers,
                           code_k=k, quorum_sizes=sizes,
                           quorums_by_origin=quorums_by_origin)
    return OptimizerDecision(True, policy.name, config,
                             cost_breakdown(config, spec, model), latencies)


# ---------------------------------------------------------------------------
# brute force (oracle)

def optimize_bruteforce(spec: WorkloadSpec, model: ClusterModel,
                        policy: Policy = FULL) -> OptimizerDecision:
    """Exhaustive search over placements, sizes, and per-origin subsets."""
    if model.d > 5:
        raise ValueError("brute force is guarded to D <= 5")
    spec.validate()
    origins = [i for i, a in enumerate(spec.origin_dist) if a > 0]
    f = spec.f
    best = None
    for protocol in policy.protocols():
        n_quorums = 2 if protocol == ABD else 4
        for n in range(2 * f + 1, model.d + 1):
            for servers in itertools.combinations(range(model.d), n):
                k_range = [1] if protocol == ABD else range(1, n - 2 * f + 1)
                if policy.k is not None and protocol == CAS:
                    k_range = [policy.k] if n - policy.k >= 2 * f else []
                for k in k_range:
                    storage = sum(model.storage_price[j] for j in servers) * \
                        (math.ceil(spec.obj_size / k) if protocol == CAS else spec.obj_size)
                    put_t, get_t = _phase_tables(protocol, spec.obj_size,
                                                 spec.meta_size, k)
                    for sizes in itertools.product(range(1, n + 1), repeat=n_quorums):
                        if quorum_sizes_ok(protocol, n, k, sizes, f):
                            continue  # non-empty list means violations
                        total = storage
                        picks = {}
                        ok = True
                        for i in origins:
                            sel = _brute_origin(model, spec, i, servers, sizes,
                                                put_t, get_t)
                            if sel is None:
                                ok = False
                                break
                            picks[i] = sel
                            total += sel[1]
                        if not ok:
                            continue
                        tiebreak = (PROTOCOL_RANK[protocol], n, k, servers, sizes,
                                    tuple(picks[i][0] for i in origins))
                        key = ((total, 0.0), tiebreak)
                        if best is None or key < best[0]:
                            best = (key, protocol, servers, k, sizes, picks)
    if best is None:
        return OptimizerDecision(False, f"bruteforce-{policy.name}",
                                 reason="no feasible configuration")
    decision = _materialize(best, spec, model, policy)
    return OptimizerDecision(True, f"bruteforce-{policy.name}",
                             decision.configuration, decision.breakdown,
                             decision.latency)


def _brute_origin(model, spec, origin, servers, sizes, put_t, get_t):
    evs = [_QuorumEval(model, spec, origin, spec.origin_dist[origin], qidx,
                       put_t, get_t)
           for qidx in range(len(sizes))]
    per_quorum = []
    for qidx, q in enumerate(sizes):
        subsets = list(itertools.combinations(servers, q))
        ev = evs[qidx]
        cost = np.array([sum(ev.weight(j) for j in s) for s in subsets])
        lg = np.array([max(ev.lat_get(j) for j in s) for s in subsets])
        lp = np.array([max(ev.lat_put(j) for j in s) for s in subsets])
        per_quorum.append((subsets, cost, lg, lp))
    shape = tuple(len(pq[0]) for pq in per_quorum)
    total_cost = np.zeros(shape)
    get_ms = np.zeros(shape)
    put_ms = np.zeros(shape)
    for axis, (_, cost, lg, lp) in enumerate(per_quorum):
        idx = [None] * len(shape)
        idx[axis] = slice(None)
        total_cost = total_cost + cost[tuple(idx)]
        qidx_in_get = any(e[0] == axis for e in get_t)
        qidx_in_put = any(e[0] == axis for e in put_t)
        if qidx_in_get:
            get_ms = get_ms + lg[tuple(idx)]
        if qidx_in_put:
            put_ms = put_ms + lp[tuple(idx)]
    feasible = (get_ms <= spec.slo_get) & (put_ms <= spec.slo_put)
    if not feasible.any():
        return None
    masked = np.where(feasible, total_cost, np.inf)
    flat = int(np.argmin(masked))
    pos = np.unravel_index(flat, shape)
    quorums = tuple(tuple(sorted(per_quorum[a][0][pos[a]])) for a in range(len(shape)))
    return (quorums, float(total_cost[pos]), float(get_ms[pos]), float(put_ms[pos]))


# ---------------------------------------------------------------------------
# analytic model of cost versus code dimension

def analytic_cost_k(k: float, o: float, lam: float, f: int,
                    c1: float, c2: float, c3: float, c4bar: float = 0.0) -> float:
    """Uniform-fleet cost model with N = K + 2f and minimal quorums."""
    return c1 * lam * k + c2 * o * lam * f / k + c3 * o * 2 * f / k + c4bar


def k_opt(o: float, lam: float, f: int, c1: float, c2: float, c3: float) -> float:
    return math.sqrt(o * f * (c2 * lam + 2 * c3) / (c1 * lam))
