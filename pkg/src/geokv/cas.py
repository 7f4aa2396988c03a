"""Coded atomic storage: 3-phase PUT, 2-phase GET, cached one-phase GET, GC.

Servers store a list of (tag, coded element, label) triples; queries only
reveal the highest 'fin' tag. A PUT queries Q1, pre-writes coded elements to
Q2, then finalizes to Q3; a GET queries Q1 and fetches elements for the
winning tag from Q4, whose members upgrade 'pre' to 'fin' as they answer.
The GET write-back therefore carries only metadata, never the value.

The one-phase GET path queries Q1 u Q4 and, when at least q4 of max(q1, q4)
responses agree on the maximal fin tag, serves the value from a per-client
cache filled by earlier two-phase reads.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

from .core import T0, Tag, chunk_bytes, tag_max
from .protocol_base import OpContext, ProtocolOp, Send, Timer

QUERY = "cas.query"
PRE_WRITE = "cas.pre_write"
FIN_WRITE = "cas.fin_write"
FIN_READ = "cas.fin_read"

CLIENT_KINDS = (QUERY, PRE_WRITE, FIN_WRITE, FIN_READ)
QUERY_KINDS = (QUERY,)

PRE = "pre"
FIN = "fin"


def put_phases(obj_size: int, meta_size: int, k: int):
    chunk = chunk_bytes(obj_size, k)
    return ((0, 0, meta_size), (1, chunk, 0), (2, meta_size, 0))


def get_phases(obj_size: int, meta_size: int, k: int):
    chunk = chunk_bytes(obj_size, k)
    return ((0, 0, meta_size), (3, meta_size, chunk))


# ---------------------------------------------------------------------------
# server

@dataclass
class Triple:
    tag: Tag
    piece: Any  # (row, payload) or None
    label: str
    recv_time: float


@dataclass
class CasState:
    """Triple list with the hot aggregates maintained incrementally."""

    triples: dict[Tag, Triple] = field(default_factory=dict)
    hi_fin: Tag = T0
    payloads: int = 0

    def highest_fin(self) -> Tag:
        return self.hi_fin

    def payload_count(self) -> int:
        return self.payloads

    def _add(self, tag: Tag, piece, label: str, now: float) -> Triple:
        tr = Triple(tag, piece, label, now)
        self.triples[tag] = tr
        if piece is not None:
            self.payloads += 1
        if label == FIN and tag > self.hi_fin:
            self.hi_fin = tag
        return tr

    def _finalize(self, tr: Triple) -> None:
        tr.label = FIN
        if tr.tag > self.hi_fin:
            self.hi_fin = tr.tag


def initial_state(key: str, row: int, n: int, k: int, codec) -> CasState:
    st = CasState()
    st._add(T0, codec.initial_piece(key, row, n, k), FIN, 0.0)
    return st


def apply_transfer(state: CasState, tag: Tag, piece, now: float) -> None:
    """Install a finalized (tag, coded element) moved in by a reconfiguration."""
    tr = state.triples.get(tag)
    if tr is None:
        state._add(tag, piece, FIN, now)
        return
    if tr.piece is None:
        tr.piece = piece
        state.payloads += 1
    state._finalize(tr)


def server_handle(state: CasState, kind: str, payload: dict, now: float):
    """Pure server transition: (state', reply_fields, size_class)."""
    if kind == QUERY:
        return state, {"tag": state.hi_fin}, "meta"
    tag = payload["tag"]
    if kind == PRE_WRITE:
        if tag not in state.triples:
            state._add(tag, payload["piece"], PRE, now)
        return state, {}, "ack"
    if kind == FIN_WRITE:
        tr = state.triples.get(tag)
        if tr is None:
            state._add(tag, None, FIN, now)
        else:
            state._finalize(tr)
        return state, {}, "ack"
    if kind == FIN_READ:
        tr = state.triples.get(tag)
        if tr is not None and tr.piece is not None:
            state._finalize(tr)
            return state, {"tag": tag, "piece": tr.piece}, "chunk"
        if tr is None:
            state._add(tag, None, FIN, now)
        else:
            state._finalize(tr)
        return state, {}, "ack"
    raise ValueError(f"unknown cas message {kind!r}")


def cas_gc(state: CasState, now: float, threshold_ms: float) -> CasState:
    """Garbage-collect versions strictly dominated by the highest fin tag.

    A first pass strips a dominated triple's coded element once it is older
    than the threshold (its tag stays, so late duplicate pre-writes still
    dedupe); a later pass removes the then payload-free triple outright,
    leaving no tombstone. The highest fin triple is never touched.
    """
    horizon = state.hi_fin
    drop = []
    for tag, tr in state.triples.items():
        if not (tag < horizon and now - tr.recv_time > threshold_ms):
            continue
        if tr.piece is not None:
            tr.piece = None
            state.payloads -= 1
        else:
            drop.append(tag)
    for tag in drop:
        del state.triples[tag]
    return state


# ---------------------------------------------------------------------------
# client cache

class ClientCache:
    """Per-client LRU of decoded values keyed by (key, tag)."""

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._entries: OrderedDict[tuple, Any] = OrderedDict()

    def get(self, key: str, tag: Tag):
        entry = self._entries.get((key, tag))
        if entry is not None:
            self._entries.move_to_end((key, tag))
        return entry

    def put(self, key: str, tag: Tag, value) -> None:
        self._entries[(key, tag)] = value
        self._entries.move_to_end((key, tag))
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)


# ---------------------------------------------------------------------------
# client operations

class CasPut(ProtocolOp):
    kind = "PUT"

    def __init__(self, ctx: OpContext, value):
        super().__init__(ctx)
        self.value = value
        self.tag: Tag | None = None
        self.pieces: dict[int, Any] = {}

    def start(self):
        return self._enter_phase(1)

    def _phase_message(self):
        payload = self._base_payload()
        if self.phase == 1:
            return QUERY, 0, payload
        if self.phase == 2:
            # per-target piece is attached in _enter_phase override below
            payload.update(tag=self.tag)
            return PRE_WRITE, self.ctx.chunk_size, payload
        payload.update(tag=self.tag)
        return FIN_WRITE, self.ctx.meta_size, payload

    def _phase_targets(self):
        return self.ctx.quorum(self.phase - 1)

    def _phase_ready(self):
        return len(self.replies) >= self.ctx.q(self.phase - 1)

    def _enter_phase(self, phase):
        if phase != 2:
            return super()._enter_phase(phase)
        # pre-write sends each server its own codeword row
        self.phase = 2
        self.replies = {}
        self.broadcast_done = False
        cfg = self.ctx.config
        encoded = dict(self.ctx.codec.encode(self.value, cfg.n, cfg.code_k))
        self.pieces = {dc: (row, encoded[row])
                       for row, dc in enumerate(cfg.servers)}
        effects = [self._pre_write_send(dst) for dst in self._phase_targets()]
        effects.append(Timer(self.ctx.timeout_ms, ("phase", 2)))
        return effects

    def _pre_write_send(self, dst):
        payload = self._base_payload()
        payload.update(tag=self.tag, piece=self.pieces[dst])
        return Send(dst, PRE_WRITE, self.ctx.chunk_size, payload)

    def on_timer(self, token):
        if self.phase == 2 and token == ("phase", 2) and not self.done and not self.broadcast_done:
            self.broadcast_done = True
            return [self._pre_write_send(dst) for dst in self.ctx.config.servers
                    if dst not in self.replies]
        return super().on_timer(token)

    def _phase_conclude(self):
        if self.phase == 1:
            top = tag_max(r["tag"] for r in self.replies.values())
            self.tag = Tag(top.seq + 1, self.ctx.client_id)
            return self._enter_phase(2)
        if self.phase == 2:
            return self._enter_phase(3)
        return self._finish(self.value)


class CasGet(ProtocolOp):
    kind = "GET"

    def __init__(self, ctx: OpContext, cache: ClientCache):
        super().__init__(ctx)
        self.cache = cache
        self.tag: Tag | None = None

    def start(self):
        return self._enter_phase(1)

    def _phase_message(self):
        payload = self._base_payload()
        if self.phase == 1:
            return QUERY, 0, payload
        payload.update(tag=self.tag)
        return FIN_READ, self.ctx.meta_size, payload

    def _phase_targets(self):
        if self.phase == 1:
            q1 = self.ctx.quorum(0)
            if not self.ctx.opt_get:
                return q1
            return q1 + tuple(s for s in self.ctx.quorum(3) if s not in q1)
        return self.ctx.quorum(3)

    def _await_count(self):
        if self.phase == 1:
            q1, q4 = self.ctx.q(0), self.ctx.q(3)
            return max(q1, q4) if self.ctx.opt_get else q1
        return self.ctx.q(3)

    def _phase_ready(self):
        if self.phase == 1:
            return len(self.replies) >= self._await_count()
        if len(self.replies) < self.ctx.q(3):
            return False
        return self._piece_count() >= self.ctx.config.code_k

    def _piece_count(self):
        rows = {r["piece"][0] for r in self.replies.values() if "piece" in r}
        return len(rows)

    def _phase_conclude(self):
        if self.phase == 1:
            top = tag_max(r["tag"] for r in self.replies.values())
            self.tag = top
            if self.ctx.opt_get:
                agree = sum(1 for r in self.replies.values() if r["tag"] == top)
                cached = self.cache.get(self.ctx.key, top)
                if agree >= self.ctx.q(3) and cached is not None:
                    return self._finish(cached, one_phase=True)
            return self._enter_phase(2)
        pieces = [r["piece"] for r in self.replies.values() if "piece" in r]
        cfg = self.ctx.config
        value = self.ctx.codec.decode(pieces, cfg.n, cfg.code_k)
        self.cache.put(self.ctx.key, self.tag, value)
        return self._finish(value)
