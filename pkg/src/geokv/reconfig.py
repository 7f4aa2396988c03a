"""Controller-driven reconfiguration between arbitrary configurations.

The controller reads a consistent (tag, value) out of the old configuration
while pausing it, writes the value into the new configuration (re-encoding
if it is erasure coded), publishes the new configuration in the metadata
map, and finally releases the old servers, which complete paused operations
with tags at or below the transferred tag and fail the rest over.

Also provides the reactive cost-benefit rule (`should_reconfigure`) and the
network-transfer cost of one reconfiguration (`recost`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import ABD, CAS, ClusterModel, Configuration, chunk_bytes, tag_max


@dataclass(frozen=True)
class ReconfigPlan:
    key: str
    old_config: Configuration
    new_config: Configuration
    controller_dc: int


@dataclass
class ReconfigReport:
    key: str
    old_epoch: int
    new_epoch: int
    controller_dc: int
    t_start: float
    t_end: float = 0.0
    phases: list = field(default_factory=list)  # (name, start_ms, end_ms) in order
    ops_blocked: int = 0
    ops_failed_over: int = 0
    ops_served_old: int = 0

    @property
    def duration_ms(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "old_epoch": self.old_epoch,
            "new_epoch": self.new_epoch,
            "controller_dc": self.controller_dc,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "duration_ms": self.duration_ms,
            "phases": [list(p) for p in self.phases],
            "ops_blocked": self.ops_blocked,
            "ops_failed_over": self.ops_failed_over,
            "ops_served_old": self.ops_served_old,
        }


class MetadataMap:
    """key -> current configuration; epochs strictly increase on update."""

    def __init__(self):
        self._configs: dict[str, Configuration] = {}

    def set_initial(self, key: str, config: Configuration) -> None:
        self._configs[key] = config

    def update(self, key: str, config: Configuration) -> None:
        cur = self._configs.get(key)
        if cur is not None and config.epoch <= cur.epoch:
            raise ValueError(f"metadata epoch must increase: {cur.epoch} -> {config.epoch}")
        self._configs[key] = config

    def get(self, key: str) -> Configuration:
        return self._configs[key]

    def snapshot(self) -> dict[str, Configuration]:
        return dict(self._configs)


def should_reconfigure(cost_exist: float, cost_new: float, t_new_s: float,
                       recost_dollars: float, alpha: float) -> bool:
    """Reconfigure when projected savings clearly outweigh the transfer cost."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return t_new_s * (cost_exist - cost_new) > recost_dollars * (1.0 + alpha)


def recost(old: Configuration, new: Configuration, model: ClusterModel,
           obj_size: int, meta_size: int = 100, controller_dc: int = 0) -> float:
    """Network dollars for one reconfiguration: the controller's read out of
    the old configuration plus its write into the new one.

    Query requests/acks carry metadata; the old-ABD query reply carries the
    value, while old-CAS chunks come back from the q4 servers that answer
    first (nearest by RTT). The finish round is metadata-only and excluded.
    """
    p = model.net_price
    c = controller_dc
    total = 0.0
    # read leg
    for s in old.servers:
        total += meta_size * p[c][s]  # reconfig query out
    if old.protocol == ABD:
        for s in old.servers:
            total += (meta_size + obj_size) * p[s][c]
    else:
        chunk = chunk_bytes(obj_size, old.code_k)
        q4 = old.quorum_sizes[3]
        for s in old.servers:
            total += meta_size * p[s][c]  # query reply
            total += meta_size * p[c][s]  # reconfig_get out
        by_rtt = sorted(old.servers, key=lambda s: (model.rtt(c, s), s))
        for i, s in enumerate(by_rtt):
            total += (chunk if i < q4 else meta_size) * p[s][c]
    # write leg
    wsize = obj_size if new.protocol == ABD else chunk_bytes(obj_size, new.code_k)
    for s in new.servers:
        total += wsize * p[c][s]
        total += meta_size * p[s][c]  # ack
    return total


# ---------------------------------------------------------------------------
# controller actor (lives inside the simulator)

class _PlanRun:
    def __init__(self, plan_id: int, plan: ReconfigPlan, spec, report: ReconfigReport):
        self.plan_id = plan_id
        self.plan = plan
        self.spec = spec
        self.report = report
        self.phase = ""
        self.phase_start = 0.0
        self.replies: list = []
        self.reply_srcs: set = set()
        self.tag = None
        self.value = None
        self.blocked_ops: set = set()
        self.failed_ops: set = set()
        self.served_ops: set = set()


class Controller:
    """Serializes reconfigurations and runs each per the controller algorithm."""

    def __init__(self, sim):
        self.sim = sim
        self.pending: deque = deque()
        self.active: _PlanRun | None = None
        self._finished: dict[int, _PlanRun] = {}
        self._seq = 0

    def submit(self, key: str, new_config: Configuration,
               controller_dc: int) -> None:
        self.pending.append((key, new_config, controller_dc))
        if self.active is None:
            self._start_next()

    def _start_next(self) -> None:
        if not self.pending:
            self.active = None
            return
        key, new_config, controller_dc = self.pending.popleft()
        old = self.sim.metadata.get(key)
        new = new_config.with_epoch(old.epoch + 1)
        self.sim.register_config(key, new)
        self._seq += 1
        report = ReconfigReport(key=key, old_epoch=old.epoch, new_epoch=new.epoch,
                                controller_dc=controller_dc, t_start=self.sim.now)
        self.active = _PlanRun(self._seq, ReconfigPlan(key, old, new, controller_dc),
                               self.sim.key_specs[key], report)
        self._enter("query")

    # -- phase machinery ------------------------------------------------------
    def _enter(self, phase: str) -> None:
        run = self.active
        run.phase = phase
        run.phase_start = self.sim.now
        run.replies = []
        run.reply_srcs = set()
        plan = run.plan
        c = run.plan.controller_dc
        meta = run.spec.meta_size
        if phase == "query":
            for s in plan.old_config.servers:
                self.sim.send(c, s, "rc.query", meta,
                              {"key": plan.key, "epoch": plan.old_config.epoch,
                               "plan": run.plan_id}, bucket="reconfig")
        elif phase == "get":
            for s in plan.old_config.servers:
                self.sim.send(c, s, "rc.get", meta,
                              {"key": plan.key, "epoch": plan.old_config.epoch,
                               "tag": run.tag, "plan": run.plan_id}, bucket="reconfig")
        elif phase == "write":
            new = plan.new_config
            codec = self.sim.codec_for(plan.key)
            if new.protocol == CAS:
                pieces = dict(codec.encode(run.value, new.n, new.code_k))
                chunk = new.chunk_size(run.spec.obj_size)
                for row, s in enumerate(new.servers):
                    self.sim.send(c, s, "rc.write", chunk,
                                  {"key": plan.key, "epoch": new.epoch, "tag": run.tag,
                                   "piece": (row, pieces[row]), "plan": run.plan_id},
                                  bucket="reconfig")
            else:
                for s in new.servers:
                    self.sim.send(c, s, "rc.write", run.spec.obj_size,
                                  {"key": plan.key, "epoch": new.epoch, "tag": run.tag,
                                   "value": run.value, "plan": run.plan_id},
                                  bucket="reconfig")
        elif phase == "metadata":
            # single in-process metadata map: instantaneous
            self.sim.metadata.update(plan.key, plan.new_config)
            self._close_phase()
            self._enter("finish")
            return
        elif phase == "finish":
            for s in plan.old_config.servers:
                self.sim.send(c, s, "rc.finish", meta,
                              {"key": plan.key, "epoch": plan.old_config.epoch,
                               "tag": run.tag, "plan": run.plan_id}, bucket="reconfig")

    def _close_phase(self) -> None:
        run = self.active
        run.report.phases.append((run.phase, run.phase_start, self.sim.now))

    def _await_count(self) -> int:
        run = self.active
        old, new = run.plan.old_config, run.plan.new_config
        if run.phase == "query":
            if old.protocol == ABD:
                return old.n - old.quorum_sizes[1] + 1
            return max(old.n - old.quorum_sizes[2] + 1, old.n - old.quorum_sizes[3] + 1)
        if run.phase == "get":
            return old.quorum_sizes[3]
        if run.phase == "write":
            if new.protocol == ABD:
                return new.quorum_sizes[1]
            return max(new.quorum_sizes[1], new.quorum_sizes[2])
        if run.phase == "finish":
            return old.n - run.spec.f
        raise AssertionError(run.phase)

    def on_reply(self, src: int, payload: dict) -> None:
        run = self.active
        if run is None or payload.get("plan") != run.plan_id \
                or payload.get("phase") != run.phase or src in run.reply_srcs:
            # straggling finish acks still contribute their blocked-op counts
            done = self._finished.get(payload.get("plan"))
            if done is not None and payload.get("phase") == "finish":
                self._merge_finish(done, payload)
            return
        run.reply_srcs.add(src)
        run.replies.append(payload)
        if run.phase == "get":
            pieces = {p["piece"][0] for p in run.replies if "piece" in p}
            if len(run.reply_srcs) < self._await_count() \
                    or len(pieces) < run.plan.old_config.code_k:
                return
        elif len(run.reply_srcs) < self._await_count():
            return
        self._close_phase()
        self._advance()

    def _advance(self) -> None:
        run = self.active
        plan = run.plan
        if run.phase == "query":
            run.tag = tag_max(r["tag"] for r in run.replies)
            if plan.old_config.protocol == ABD:
                run.value = next(r["value"] for r in run.replies if r["tag"] == run.tag)
                self._enter("write")
            else:
                self._enter("get")
        elif run.phase == "get":
            pieces = [r["piece"] for r in run.replies if "piece" in r]
            codec = self.sim.codec_for(plan.key)
            run.value = codec.decode(pieces, plan.old_config.n, plan.old_config.code_k)
            self._enter("write")
        elif run.phase == "write":
            self._enter("metadata")
        elif run.phase == "finish":
            run.failed_ops = set()
            run.served_ops = set()
            for r in run.replies:
                self._merge_finish(run, r)
            run.report.t_end = self.sim.now
            self.sim.reconfig_reports.append(run.report)
            self._finished[run.plan_id] = run
            self._start_next()

    @staticmethod
    def _merge_finish(run: "_PlanRun", payload: dict) -> None:
        run.blocked_ops.update(payload.get("blocked_ops", ()))
        run.failed_ops.update(payload.get("failed_ops", ()))
        run.served_ops.update(payload.get("served_ops", ()))
        run.report.ops_blocked = len(run.blocked_ops)
        run.report.ops_failed_over = len(run.failed_ops)
        run.report.ops_served_old = len(run.served_ops)
