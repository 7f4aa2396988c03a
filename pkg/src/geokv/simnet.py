"""Deterministic discrete-event simulator for the quorum protocols.

One global event timeline; messages are envelopes delivered after
one-way latency plus payload transfer time (plus optional seeded jitter),
with per-link byte and dollar accounting priced at the sender. Actors are
one server and one client host per DC plus a reconfiguration controller and
an in-process metadata map served from the controller's DC.

Replaying the same Scenario (model, workloads, failure/reconfig schedules,
seed) yields bit-identical histories and statistics.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from . import abd, cas, reconfig as reconfig_mod, workload as workload_mod
from .core import (ABD, CAS, ClusterModel, Configuration, OpRecord,
                   WorkloadSpec, config_validate, load_builtin_model,
                   model_from_dict, workload_from_dict)
from .protocol_base import (Complete, OpContext, RsCodec, Send, SymbolicCodec,
                            Timer)

OPERATION_FAIL = "operation_fail"


# ---------------------------------------------------------------------------
# scenario description

@dataclass
class SimOptions:
    abd_opt: bool = True
    cas_opt: bool = True
    timeout_mult: float = 3.0  # phase timeout = mult * max model RTT
    gc_enabled: bool = True
    gc_threshold_mult: float = 50.0  # threshold = mult * max model RTT
    cache_capacity: int = 1024
    real_codec: bool = False  # push actual Reed-Solomon bytes through CAS


@dataclass
class KeyScenario:
    key: str
    config: Configuration
    workload: WorkloadSpec


@dataclass
class Failure:
    dc: int
    at_ms: float
    recover_ms: float | None = None


@dataclass
class ScheduledReconfig:
    at_ms: float
    key: str
    new_config: Configuration  # epoch is re-stamped when the plan runs
    controller_dc: int | None = None


@dataclass
class Scenario:
    model: ClusterModel
    keys: list[KeyScenario]
    duration_ms: float
    seed: int = 0
    jitter_ms: float = 0.0
    controller_dc: int = 0
    failures: list[Failure] = field(default_factory=list)
    reconfigs: list[ScheduledReconfig] = field(default_factory=list)
    options: SimOptions = field(default_factory=SimOptions)
    arrivals: list | None = None  # explicit (t_ms, key, kind, origin) stream

    def validate(self) -> None:
        for ks in self.keys:
            ks.workload.validate()
            result = config_validate(ks.config, ks.workload.f)
            if not result.ok:
                raise ValueError(f"{ks.key}: invalid config: {result.violations}")
            for i, alpha in enumerate(ks.workload.origin_dist):
                if alpha > 0 and i not in ks.config.quorums_by_origin:
                    raise ValueError(f"{ks.key}: origin {i} has no quorums")


def inject_failure(scenario: Scenario, dc: int, at_ms: float,
                   recover_ms: float | None = None) -> Scenario:
    if not 0 <= at_ms <= scenario.duration_ms:
        raise ValueError("failure time outside scenario duration")
    return replace(scenario, failures=scenario.failures + [Failure(dc, at_ms, recover_ms)])


def scenario_from_dict(doc: dict) -> Scenario:
    model = doc["model"]
    if isinstance(model, str):
        model = load_builtin_model(model.removeprefix("builtin:"))
    else:
        model = model_from_dict(model)
    keys = [KeyScenario(k["key"], Configuration.from_dict(k["config"]),
                        workload_from_dict(k["workload"]))
            for k in doc["keys"]]
    failures = [Failure(int(f["dc"]), float(f["at_s"]) * 1e3,
                        None if f.get("recover_s") is None else float(f["recover_s"]) * 1e3)
                for f in doc.get("failures", [])]
    reconfigs = [ScheduledReconfig(float(r["at_s"]) * 1e3, r["key"],
                                   Configuration.from_dict(r["config"]),
                                   r.get("controller_dc"))
                 for r in doc.get("reconfigs", [])]
    options = SimOptions(**doc.get("options", {}))
    arrivals = None
    if doc.get("trace"):
        key_specs = {k.key: k.workload for k in keys}
        arrivals = workload_mod.trace_arrivals(
            workload_mod.replay_trace(doc["trace"]), key_specs,
            seed=int(doc.get("seed", 0)))
    return Scenario(
        model=model,
        keys=keys,
        duration_ms=float(doc["duration_s"]) * 1e3,
        seed=int(doc.get("seed", 0)),
        jitter_ms=float(doc.get("jitter_ms", 0.0)),
        controller_dc=int(doc.get("controller_dc", 0)),
        failures=failures,
        reconfigs=reconfigs,
        options=options,
        arrivals=arrivals,
    )


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# run statistics

@dataclass
class RunStats:
    duration_ms: float
    seed: int
    ops_total: int
    ops_completed: int
    ops_incomplete: int
    per_link_bytes: list  # DxD
    per_link_dollars: list
    network_dollars: float
    network_dollars_by_bucket: dict
    latency: dict  # origin -> kind -> {count, avg, p99, max}
    optimized_get_fraction: float
    optimized_get_fraction_by_origin: dict
    max_concurrency: int
    reconfig_reports: list
    vm_dollars_per_s: float  # analytic, final configurations
    avg_storage_bytes_by_dc: list

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _percentile(sorted_vals: list[float], q: float) -> float:
    if not sorted_vals:
        return 0.0
    idx = max(0, int(-(-q * len(sorted_vals) // 1)) - 1)
    return sorted_vals[idx]


# ---------------------------------------------------------------------------
# simulator kernel

class Simulator:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.model = scenario.model
        self.options = scenario.options
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        d = self.model.d
        self.max_rtt = self.model.max_rtt()
        self.timeout_ms = scenario.options.timeout_mult * self.max_rtt
        self.gc_threshold_ms = scenario.options.gc_threshold_mult * self.max_rtt
        self.jitter_rng = random.Random(f"{scenario.seed}:jitter")

        self.key_specs = {k.key: k.workload for k in scenario.keys}
        self.configs: dict[tuple[str, int], Configuration] = {}
        self.metadata = reconfig_mod.MetadataMap()
        for ks in scenario.keys:
            self.configs[(ks.key, ks.config.epoch)] = ks.config
            self.metadata.set_initial(ks.key, ks.config)
        self.codecs = {
            k.key: (RsCodec(k.workload.obj_size) if scenario.options.real_codec
                    else SymbolicCodec())
            for k in scenario.keys
        }

        self.bytes = [[0] * d for _ in range(d)]
        self.dollars = [[0.0] * d for _ in range(d)]
        self.dollars_by_bucket = {"ops": 0.0, "reconfig": 0.0, "meta": 0.0}
        self.per_op_bytes: dict[str, int] = {}
        # flattened link parameters for the delivery fast path
        self._lat = self.model.latency_oneway
        self._price = self.model.net_price
        self._xfer_ms = tuple(tuple((1000.0 / b if b > 0 else 0.0) for b in row)
                              for row in self.model.bandwidth)
        self._crashes_by_dc: dict[int, list[Failure]] = {}
        for failure in scenario.failures:
            self._crashes_by_dc.setdefault(failure.dc, []).append(failure)

        self.storage_cur = [0.0] * d
        self.storage_integral = [0.0] * d  # byte*ms
        self.storage_last = [0.0] * d

        self.in_flight = 0
        self.max_concurrency = 0
        self.records: list[OpRecord] = []
        self.reconfig_reports: list = []

        self.servers = [ServerActor(self, dc) for dc in range(d)]
        self.clients = [ClientHost(self, dc) for dc in range(d)]
        self.controller = reconfig_mod.Controller(self)

    # -- scheduling ---------------------------------------------------------
    def schedule(self, at_ms: float, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (at_ms, self._seq, fn))

    def crashed(self, dc: int, t: float) -> bool:
        for f in self._crashes_by_dc.get(dc, ()):
            if f.at_ms <= t and (f.recover_ms is None or t < f.recover_ms):
                return True
        return False

    def send(self, src: int, dst: int, kind: str, size: float, payload: dict,
             op_id: str | None = None, bucket: str = "ops") -> None:
        """Account and deliver a message; drops it if dst is down on arrival."""
        size = int(size)
        self.bytes[src][dst] += size
        cost = size * self._price[src][dst]
        self.dollars[src][dst] += cost
        self.dollars_by_bucket[bucket] += cost
        if op_id is not None:
            self.per_op_bytes[op_id] = self.per_op_bytes.get(op_id, 0) + size
        delay = self._lat[src][dst] + size * self._xfer_ms[src][dst]
        if self.scenario.jitter_ms > 0:
            delay += self.jitter_rng.uniform(0.0, self.scenario.jitter_ms)
        deliver = self.now + delay

        def deliver_event():
            if self._crashes_by_dc and self.crashed(dst, self.now):
                return
            self.dispatch(src, dst, kind, payload)
        self.schedule(deliver, deliver_event)

    def dispatch(self, src: int, dst: int, kind: str, payload: dict) -> None:
        if kind.startswith(("abd.", "cas.", "rc.query", "rc.get", "rc.write", "rc.finish")):
            self.servers[dst].on_message(src, kind, payload)
        elif kind in ("reply", OPERATION_FAIL, "meta.reply"):
            self.clients[dst].on_message(src, kind, payload)
        elif kind == "rc.reply":
            self.controller.on_reply(src, payload)
        elif kind == "meta.get":
            self.serve_metadata(src, payload)
        else:
            raise ValueError(f"unroutable message kind {kind!r}")

    def serve_metadata(self, src: int, payload: dict) -> None:
        key = payload["key"]
        spec = self.key_specs[key]
        config = self.metadata.get(key)
        self.send(self.scenario.controller_dc, src, "meta.reply", spec.meta_size,
                  {"key": key, "config": config, "op_id": payload["op_id"],
                   "attempt": payload["attempt"]},
                  op_id=payload["op_id"], bucket="meta")

    # -- config registry ----------------------------------------------------
    def config_of(self, key: str, epoch: int) -> Configuration:
        return self.configs[(key, epoch)]

    def register_config(self, key: str, config: Configuration) -> None:
        self.configs[(key, config.epoch)] = config

    def codec_for(self, key: str):
        return self.codecs[key]

    # -- storage accounting ---------------------------------------------------
    def storage_delta(self, dc: int, delta_bytes: float) -> None:
        self.storage_integral[dc] += self.storage_cur[dc] * (self.now - self.storage_last[dc])
        self.storage_last[dc] = self.now
        self.storage_cur[dc] += delta_bytes

    # -- op bookkeeping -------------------------------------------------------
    def op_started(self) -> None:
        self.in_flight += 1
        self.max_concurrency = max(self.max_concurrency, self.in_flight)

    def op_finished(self, record: OpRecord) -> None:
        self.in_flight -= 1
        self.records.append(record)

    # -- main loop ------------------------------------------------------------
    def run(self) -> tuple[list[OpRecord], RunStats]:
        scenario = self.scenario
        arrivals = scenario.arrivals
        if arrivals is None:
            arrivals = []
            for ks in scenario.keys:
                arrivals.extend(workload_mod.gen_workload(
                    ks.workload, seed=f"{scenario.seed}:wl:{ks.key}",
                    duration_ms=scenario.duration_ms, key=ks.key))
            arrivals.sort(key=lambda a: (a[0], a[1], a[2], a[3]))
        for t_ms, key, kind, origin in arrivals:
            if t_ms >= scenario.duration_ms:
                continue
            self.schedule(t_ms, self._arrival(key, kind, origin))
        for rc in scenario.reconfigs:
            self.schedule(rc.at_ms, self._submit_reconfig(rc))
        cas_possible = any(ks.config.protocol == CAS for ks in scenario.keys) or \
            any(rc.new_config.protocol == CAS for rc in scenario.reconfigs)
        if self.options.gc_enabled and cas_possible:
            period = self.gc_threshold_ms / 2.0
            for server in self.servers:
                self.schedule(period, self._gc_tick(server, period))

        drain = 5.0 * self.timeout_ms + 10.0 * self.max_rtt
        cutoff = scenario.duration_ms + drain
        while self._queue:
            t, _, fn = heapq.heappop(self._queue)
            if t > cutoff:
                break
            self.now = t
            fn()
        self.now = max(self.now, scenario.duration_ms)

        for host in self.clients:
            self.records.extend(host.incomplete_records())
        self.records.sort(key=lambda r: (r.t_invoke, r.op_id))
        return self.records, self._stats()

    def _arrival(self, key, kind, origin):
        def fire():
            if self.crashed(origin, self.now):
                return
            self.clients[origin].start_op(key, kind)
        return fire

    def _submit_reconfig(self, rc: ScheduledReconfig):
        def fire():
            controller_dc = rc.controller_dc
            if controller_dc is None:
                controller_dc = self.scenario.controller_dc
            self.controller.submit(rc.key, rc.new_config, controller_dc)
        return fire

    def _gc_tick(self, server, period):
        def fire():
            if not self.crashed(server.dc, self.now):
                server.run_gc(self.gc_threshold_ms)
            if self.now + period <= self.scenario.duration_ms:
                self.schedule(self.now + period, self._gc_tick(server, period))
        return fire

    # -- stats ------------------------------------------------------------------
    def _stats(self) -> RunStats:
        from . import optimizer

        duration_s = self.scenario.duration_ms / 1e3
        for dc in range(self.model.d):
            self.storage_delta(dc, 0.0)

        latency: dict = {}
        opt_counts: dict[int, list[int]] = {}
        completed = 0
        for rec in self.records:
            if not rec.completed:
                continue
            completed += 1
            bucket = latency.setdefault(rec.origin, {}).setdefault(rec.kind, [])
            bucket.append(rec.latency)
            if rec.kind == "GET":
                got = opt_counts.setdefault(rec.origin, [0, 0])
                got[1] += 1
                got[0] += 1 if rec.one_phase else 0
        latency_summary = {}
        for origin, kinds in sorted(latency.items()):
            latency_summary[origin] = {}
            for kind, vals in sorted(kinds.items()):
                vals.sort()
                latency_summary[origin][kind] = {
                    "count": len(vals),
                    "avg": sum(vals) / len(vals),
                    "p99": _percentile(vals, 0.99),
                    "max": vals[-1],
                }
        total_opt = sum(v[0] for v in opt_counts.values())
        total_get = sum(v[1] for v in opt_counts.values())

        vm = sum(optimizer.cost_vm(self.metadata.get(ks.key), ks.workload, self.model)
                 for ks in self.scenario.keys)
        return RunStats(
            duration_ms=self.scenario.duration_ms,
            seed=self.scenario.seed,
            ops_total=len(self.records),
            ops_completed=completed,
            ops_incomplete=len(self.records) - completed,
            per_link_bytes=[list(row) for row in self.bytes],
            per_link_dollars=[list(row) for row in self.dollars],
            network_dollars=float(sum(map(sum, self.dollars))),
            network_dollars_by_bucket=dict(self.dollars_by_bucket),
            latency=latency_summary,
            optimized_get_fraction=(total_opt / total_get) if total_get else 0.0,
            optimized_get_fraction_by_origin={
                o: v[0] / v[1] for o, v in sorted(opt_counts.items()) if v[1]},
            max_concurrency=self.max_concurrency,
            reconfig_reports=[r.to_dict() for r in self.reconfig_reports],
            vm_dollars_per_s=vm,
            avg_storage_bytes_by_dc=[
                self.storage_integral[dc] / self.scenario.duration_ms
                for dc in range(self.model.d)],
        )


def run(scenario: Scenario) -> tuple[list[OpRecord], RunStats]:
    return Simulator(scenario).run()


# ---------------------------------------------------------------------------
# server actor

class _Pause:
    __slots__ = ("epoch", "queue")

    def __init__(self, epoch: int):
        self.epoch = epoch
        self.queue: list[tuple[int, str, dict]] = []


class ServerActor:
    def __init__(self, sim: Simulator, dc: int):
        self.sim = sim
        self.dc = dc
        self.states: dict[tuple[str, int], Any] = {}
        self.paused: dict[str, _Pause] = {}
        # retired epoch -> the tag transferred out of it; tagged messages at
        # or below it are still served so their ops finish in the old epoch
        self.retired: dict[tuple[str, int], Any] = {}
        self._size_cache: dict[tuple[str, int], dict[str, int]] = {}

    # -- state management ---------------------------------------------------
    def _sizes(self, key: str, config: Configuration) -> dict[str, int]:
        cached = self._size_cache.get((key, config.epoch))
        if cached is None:
            spec = self.sim.key_specs[key]
            cached = {"ack": 0, "meta": spec.meta_size,
                      "meta_value": spec.meta_size + spec.obj_size,
                      "chunk": config.chunk_size(spec.obj_size)}
            self._size_cache[(key, config.epoch)] = cached
        return cached

    def ensure_state(self, key: str, epoch: int):
        state = self.states.get((key, epoch))
        if state is not None:
            return state
        config = self.sim.config_of(key, epoch)
        codec = self.sim.codec_for(key)
        spec = self.sim.key_specs[key]
        if config.protocol == ABD:
            state = abd.initial_state(key, codec)
            self.sim.storage_delta(self.dc, spec.obj_size)
        else:
            row = config.servers.index(self.dc)
            state = cas.initial_state(key, row, config.n, config.code_k, codec)
            self.sim.storage_delta(self.dc, config.chunk_size(spec.obj_size))
        self.states[(key, epoch)] = state
        return state

    # -- dispatch -------------------------------------------------------------
    def on_message(self, src: int, kind: str, payload: dict) -> None:
        if kind.startswith("rc."):
            getattr(self, "_" + kind.replace(".", "_"))(src, payload)
            return
        key, epoch = payload["key"], payload["epoch"]
        if (key, epoch) in self.retired:
            # a value at or below the transferred tag is already covered by
            # the new configuration, so its straggling messages may still be
            # answered; anything else restarts in the new configuration
            if self._at_or_below_transfer(kind, payload):
                self._serve(src, kind, payload)
            else:
                self._fail(src, payload)
            return
        pause = self.paused.get(key)
        if pause is not None and pause.epoch == epoch:
            pause.queue.append((src, kind, payload))
            return
        self._serve(src, kind, payload)

    def _at_or_below_transfer(self, kind: str, payload: dict) -> bool:
        if kind in abd.QUERY_KINDS or kind in cas.QUERY_KINDS:
            return False
        t_high = self.retired[(payload["key"], payload["epoch"])]
        return payload["tag"] <= t_high

    def _serve(self, src: int, kind: str, payload: dict) -> None:
        key, epoch = payload["key"], payload["epoch"]
        config = self.sim.config_of(key, epoch)
        state = self.ensure_state(key, epoch)
        spec = self.sim.key_specs[key]
        if kind.startswith("abd."):
            state2, fields, size_class = abd.server_handle(state, kind, payload)
        else:
            before = state.payload_count()
            state2, fields, size_class = cas.server_handle(state, kind, payload, self.sim.now)
            delta = state2.payload_count() - before
            if delta:
                self.sim.storage_delta(self.dc, delta * config.chunk_size(spec.obj_size))
        self.states[(key, epoch)] = state2
        reply = {"op_id": payload["op_id"], "attempt": payload["attempt"],
                 "phase": payload["phase"]}
        reply.update(fields)
        size = self._sizes(key, config)[size_class]
        self.sim.send(self.dc, src, "reply", size, reply, op_id=payload["op_id"])

    def _fail(self, src: int, payload: dict) -> None:
        self.sim.send(self.dc, src, OPERATION_FAIL, 0,
                      {"op_id": payload["op_id"], "attempt": payload["attempt"],
                       "key": payload["key"]}, op_id=payload["op_id"])

    # -- reconfiguration (Algorithm: server side) ------------------------------
    def _rc_query(self, src: int, payload: dict) -> None:
        key, epoch = payload["key"], payload["epoch"]
        config = self.sim.config_of(key, epoch)
        if (key, epoch) not in self.retired:
            self.paused[key] = _Pause(epoch)
        state = self.ensure_state(key, epoch)
        reply = {"plan": payload["plan"], "phase": "query"}
        if config.protocol == ABD:
            reply.update(tag=state.tag, value=state.value)
            size = self._sizes(key, config)["meta_value"]
        else:
            reply.update(tag=state.highest_fin())
            size = self._sizes(key, config)["meta"]
        self.sim.send(self.dc, src, "rc.reply", size, reply, bucket="reconfig")

    def _rc_get(self, src: int, payload: dict) -> None:
        key, epoch, tag = payload["key"], payload["epoch"], payload["tag"]
        config = self.sim.config_of(key, epoch)
        state = self.ensure_state(key, epoch)
        reply = {"plan": payload["plan"], "phase": "get"}
        state, fields, size_class = cas.server_handle(state, cas.FIN_READ,
                                                      {"tag": tag}, self.sim.now)
        if "piece" in fields:
            reply["piece"] = fields["piece"]
        size = self._sizes(key, config)["chunk" if size_class == "chunk" else "meta"]
        self.sim.send(self.dc, src, "rc.reply", size, reply, bucket="reconfig")

    def _rc_write(self, src: int, payload: dict) -> None:
        key, epoch = payload["key"], payload["epoch"]
        config = self.sim.config_of(key, epoch)
        state = self.ensure_state(key, epoch)
        spec = self.sim.key_specs[key]
        tag = payload["tag"]
        if config.protocol == ABD:
            if tag > state.tag:
                state.tag = tag
                state.value = payload["value"]
        else:
            before = state.payload_count()
            cas.apply_transfer(state, tag, payload["piece"], self.sim.now)
            delta = state.payload_count() - before
            if delta:
                self.sim.storage_delta(self.dc, delta * config.chunk_size(spec.obj_size))
        self.sim.send(self.dc, src, "rc.reply", self._sizes(key, config)["meta"],
                      {"plan": payload["plan"], "phase": "write"}, bucket="reconfig")

    def _rc_finish(self, src: int, payload: dict) -> None:
        key, old_epoch, t_high = payload["key"], payload["epoch"], payload["tag"]
        pause = self.paused.pop(key, None)
        served, failed, blocked = set(), set(), set()
        if pause is not None and pause.epoch == old_epoch:
            for q_src, q_kind, q_payload in pause.queue:
                blocked.add(q_payload["op_id"])
                is_query = q_kind in abd.QUERY_KINDS or q_kind in cas.QUERY_KINDS
                if not is_query and q_payload["tag"] <= t_high:
                    self._serve(q_src, q_kind, q_payload)
                    served.add(q_payload["op_id"])
                else:
                    self._fail(q_src, q_payload)
                    failed.add(q_payload["op_id"])
        self.retired[(key, old_epoch)] = t_high
        self.sim.send(self.dc, src, "rc.reply", self._sizes(
            key, self.sim.config_of(key, old_epoch))["meta"],
            {"plan": payload["plan"], "phase": "finish", "served_ops": sorted(served),
             "failed_ops": sorted(failed), "blocked_ops": sorted(blocked)},
            bucket="reconfig")

    # -- garbage collection -----------------------------------------------------
    def run_gc(self, threshold_ms: float) -> None:
        for (key, epoch), state in self.states.items():
            if not isinstance(state, cas.CasState):
                continue
            if key in self.paused and self.paused[key].epoch == epoch:
                continue
            config = self.sim.config_of(key, epoch)
            spec = self.sim.key_specs[key]
            before = state.payload_count()
            cas.cas_gc(state, self.sim.now, threshold_ms)
            delta = state.payload_count() - before
            if delta:
                self.sim.storage_delta(self.dc, delta * config.chunk_size(spec.obj_size))


# ---------------------------------------------------------------------------
# client host

class _User:
    __slots__ = ("uid", "cache")

    def __init__(self, uid: str, cache_capacity: int):
        self.uid = uid
        self.cache = cas.ClientCache(cache_capacity)


class _OpRun:
    __slots__ = ("op_id", "key", "kind", "user", "machine", "attempt",
                 "t_invoke", "value", "fetching")

    def __init__(self, op_id, key, kind, user, t_invoke, value):
        self.op_id = op_id
        self.key = key
        self.kind = kind
        self.user = user
        self.machine = None
        self.attempt = 1
        self.t_invoke = t_invoke
        self.value = value
        self.fetching = False


class ClientHost:
    def __init__(self, sim: Simulator, dc: int):
        self.sim = sim
        self.dc = dc
        self.configs = sim.metadata.snapshot()  # local MDS cache, seeded at CREATE
        self.free_users: list[_User] = []
        self.user_count = 0
        self.inflight: dict[str, _OpRun] = {}
        self._op_seq = 0

    # -- op lifecycle ---------------------------------------------------------
    def start_op(self, key: str, kind: str) -> None:
        self._op_seq += 1
        op_id = f"d{self.dc}o{self._op_seq:06d}"
        user = self.free_users.pop() if self.free_users else self._new_user()
        codec = self.sim.codec_for(key)
        value = codec.make_value(op_id) if kind == "PUT" else None
        op = _OpRun(op_id, key, kind, user, self.sim.now, value)
        self.inflight[op_id] = op
        self.sim.op_started()
        self._launch(op, self.configs[key])

    def _new_user(self) -> _User:
        self.user_count += 1
        return _User(f"c{self.dc}.{self.user_count}",
                     self.sim.options.cache_capacity)

    def _launch(self, op: _OpRun, config: Configuration) -> None:
        spec = self.sim.key_specs[op.key]
        opts = self.sim.options
        ctx = OpContext(
            key=op.key, op_id=op.op_id, client_id=op.user.uid, origin=self.dc,
            config=config, obj_size=spec.obj_size, meta_size=spec.meta_size,
            opt_get=opts.abd_opt if config.protocol == ABD else opts.cas_opt,
            timeout_ms=self.sim.timeout_ms, codec=self.sim.codec_for(op.key))
        if config.protocol == ABD:
            op.machine = (abd.AbdPut(ctx, op.value) if op.kind == "PUT"
                          else abd.AbdGet(ctx))
        else:
            op.machine = (cas.CasPut(ctx, op.value) if op.kind == "PUT"
                          else cas.CasGet(ctx, op.user.cache))
        self._execute(op, op.machine.start())

    def _execute(self, op: _OpRun, effects) -> None:
        for eff in effects:
            if isinstance(eff, Send):
                payload = dict(eff.payload)
                payload["attempt"] = op.attempt
                self.sim.send(self.dc, eff.dst, eff.kind, eff.size, payload,
                              op_id=op.op_id)
            elif isinstance(eff, Timer):
                self._set_timer(op, eff)
            elif isinstance(eff, Complete):
                self._complete(op, eff)

    def _set_timer(self, op: _OpRun, timer: Timer) -> None:
        attempt, machine = op.attempt, op.machine

        def fire():
            if self.sim.crashed(self.dc, self.sim.now):
                return
            cur = self.inflight.get(op.op_id)
            if cur is op and op.attempt == attempt and op.machine is machine:
                self._execute(op, machine.on_timer(timer.token))
        self.sim.schedule(self.sim.now + timer.delay_ms, fire)

    def _complete(self, op: _OpRun, eff: Complete) -> None:
        del self.inflight[op.op_id]
        self.free_users.append(op.user)
        codec = self.sim.codec_for(op.key)
        value = op.value if op.kind == "PUT" else eff.value
        self.sim.op_finished(OpRecord(
            op_id=op.op_id, kind=op.kind, key=op.key, origin=self.dc,
            t_invoke=op.t_invoke, t_respond=self.sim.now,
            value=codec.value_id(value),
            epoch_completed=op.machine.ctx.config.epoch,
            one_phase=eff.one_phase))

    # -- message handling -------------------------------------------------------
    def on_message(self, src: int, kind: str, payload: dict) -> None:
        op = self.inflight.get(payload["op_id"])
        if op is None or payload.get("attempt") != op.attempt:
            return
        if kind == "reply":
            if not op.fetching:
                self._execute(op, op.machine.on_reply(src, payload))
        elif kind == OPERATION_FAIL:
            self._failover(op)
        elif kind == "meta.reply":
            op.fetching = False
            op.attempt += 1
            config = payload["config"]
            self.configs[op.key] = config
            self._launch(op, config)

    def _failover(self, op: _OpRun) -> None:
        """Old epoch retired under us: fetch the new configuration from the
        metadata service at the controller DC, then restart the operation."""
        if op.fetching:
            return
        op.fetching = True
        self.sim.send(self.dc, self.sim.scenario.controller_dc, "meta.get", 0,
                      {"key": op.key, "op_id": op.op_id, "attempt": op.attempt},
                      op_id=op.op_id, bucket="meta")

    def incomplete_records(self) -> list[OpRecord]:
        out = []
        for op in self.inflight.values():
            out.append(OpRecord(
                op_id=op.op_id, kind=op.kind, key=op.key, origin=self.dc,
                t_invoke=op.t_invoke, t_respond=None,
                value=(self.sim.codec_for(op.key).value_id(op.value)
                       if op.kind == "PUT" else None),
                epoch_completed=None, one_phase=False))
        return out
