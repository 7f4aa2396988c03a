"""Multi-writer ABD client and server state machines.

PUT: a tag query to quorum Q1, then the (tag, value) write to Q2.
GET: a (tag, value) query to Q1, then a value write-back to Q2. With the
one-phase optimization enabled, the query goes to Q1 u Q2 and the read
returns immediately when at least q2 of max(q1, q2) responses already carry
the maximal tag.

Servers keep one (tag, value) pair per key and replace it only on a strictly
larger tag, so duplicate delivery is harmless and the stored tag is monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .core import T0, Tag, tag_max
from .protocol_base import OpContext, ProtocolOp

WRITE_QUERY = "abd.write_query"
WRITE_VALUE = "abd.write_value"
READ_QUERY = "abd.read_query"
READ_WRITEBACK = "abd.read_writeback"

CLIENT_KINDS = (WRITE_QUERY, WRITE_VALUE, READ_QUERY, READ_WRITEBACK)
#: phases whose messages carry no tag (failed over wholesale on reconfig)
QUERY_KINDS = (WRITE_QUERY, READ_QUERY)


def put_phases(obj_size: int, meta_size: int, k: int = 1):
    """(quorum index, request bytes, reply bytes) per contacted member."""
    return ((0, 0, meta_size), (1, obj_size, 0))


def get_phases(obj_size: int, meta_size: int, k: int = 1):
    return ((0, 0, meta_size + obj_size), (1, obj_size, 0))


# ---------------------------------------------------------------------------
# server

@dataclass
class AbdState:
    tag: Tag
    value: Any


def initial_state(key: str, codec) -> AbdState:
    return AbdState(T0, codec.initial_value(key))


def server_handle(state: AbdState, kind: str, payload: dict):
    """Pure server transition: returns (state', reply_fields, size_class).

    size_class is one of "meta", "meta_value", "ack"; the hosting actor maps
    it to bytes for the key's workload.
    """
    if kind == READ_QUERY:
        return state, {"tag": state.tag, "value": state.value}, "meta_value"
    if kind == WRITE_QUERY:
        return state, {"tag": state.tag}, "meta"
    if kind in (WRITE_VALUE, READ_WRITEBACK):
        if payload["tag"] > state.tag:
            state = AbdState(payload["tag"], payload["value"])
        return state, {}, "ack"
    raise ValueError(f"unknown abd message {kind!r}")


# ---------------------------------------------------------------------------
# client operations

class AbdPut(ProtocolOp):
    kind = "PUT"

    def __init__(self, ctx: OpContext, value):
        super().__init__(ctx)
        self.value = value
        self.tag: Tag | None = None

    def start(self):
        return self._enter_phase(1)

    def _phase_message(self):
        if self.phase == 1:
            return WRITE_QUERY, 0, self._base_payload()
        payload = self._base_payload()
        payload.update(tag=self.tag, value=self.value)
        return WRITE_VALUE, self.ctx.obj_size, payload

    def _phase_targets(self):
        return self.ctx.quorum(0) if self.phase == 1 else self.ctx.quorum(1)

    def _phase_ready(self):
        need = self.ctx.q(0) if self.phase == 1 else self.ctx.q(1)
        return len(self.replies) >= need

    def _phase_conclude(self):
        if self.phase == 1:
            top = tag_max(r["tag"] for r in self.replies.values())
            self.tag = Tag(top.seq + 1, self.ctx.client_id)
            return self._enter_phase(2)
        return self._finish(self.value)


class AbdGet(ProtocolOp):
    kind = "GET"

    def __init__(self, ctx: OpContext):
        super().__init__(ctx)
        self.chosen: tuple[Tag, Any] | None = None

    def start(self):
        return self._enter_phase(1)

    def _phase_message(self):
        if self.phase == 1:
            return READ_QUERY, 0, self._base_payload()
        payload = self._base_payload()
        payload.update(tag=self.chosen[0], value=self.chosen[1])
        return READ_WRITEBACK, self.ctx.obj_size, payload

    def _phase_targets(self):
        if self.phase == 1:
            q1 = self.ctx.quorum(0)
            if not self.ctx.opt_get:
                return q1
            return q1 + tuple(s for s in self.ctx.quorum(1) if s not in q1)
        return self.ctx.quorum(1)

    def _await_count(self):
        if self.phase == 1:
            q1, q2 = self.ctx.q(0), self.ctx.q(1)
            return max(q1, q2) if self.ctx.opt_get else q1
        return self.ctx.q(1)

    def _phase_ready(self):
        return len(self.replies) >= self._await_count()

    def _phase_conclude(self):
        if self.phase == 1:
            top = tag_max(r["tag"] for r in self.replies.values())
            value = next(r["value"] for r in self.replies.values() if r["tag"] == top)
            self.chosen = (top, value)
            if self.ctx.opt_get:
                agree = sum(1 for r in self.replies.values() if r["tag"] == top)
                if agree >= self.ctx.q(1):
                    return self._finish(value, one_phase=True)
            return self._enter_phase(2)
        return self._finish(self.chosen[1])
