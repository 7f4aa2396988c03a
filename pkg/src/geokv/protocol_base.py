"""Common plumbing for the quorum protocol state machines.

Client operations are state machines that emit effects; the simulator (or a
unit test) owns all scheduling and feeds replies/timers back in. Protocol
modules also publish their per-phase byte accounting, which is the single
source of truth shared by the simulator's envelopes and the cost model, so
measured traffic reconciles with modeled cost exactly.

A phase entry is (quorum_index, request_bytes, reply_bytes) per contacted
quorum member. Requests whose bytes the cost model folds into the reply are
zero-sized on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from . import core
from .core import Configuration

GET = "GET"
PUT = "PUT"


@dataclass(frozen=True)
class Send:
    dst: int  # server DC index
    kind: str
    size: float
    payload: dict


@dataclass(frozen=True)
class Timer:
    delay_ms: float
    token: Any


@dataclass(frozen=True)
class Complete:
    value: Any
    one_phase: bool = False


@dataclass(frozen=True)
class OpContext:
    key: str
    op_id: str
    client_id: str
    origin: int
    config: Configuration
    obj_size: int
    meta_size: int
    opt_get: bool
    timeout_ms: float
    codec: Any

    @property
    def chunk_size(self) -> int:
        return self.config.chunk_size(self.obj_size)

    def quorum(self, idx: int) -> tuple[int, ...]:
        return self.config.quorums(self.origin)[idx]

    def q(self, idx: int) -> int:
        return self.config.quorum_sizes[idx]


class ProtocolOp:
    """Base client op: per-phase reply collection with one broadcast retry."""

    kind = ""

    def __init__(self, ctx: OpContext):
        self.ctx = ctx
        self.phase = 0
        self.replies: dict[int, dict] = {}  # src dc -> payload, current phase
        self.broadcast_done = False
        self.done = False

    # -- subclass hooks ----------------------------------------------------
    def start(self) -> list:
        raise NotImplementedError

    def _phase_message(self) -> tuple[str, float, dict]:
        """(kind, size, payload) of the current phase's request."""
        raise NotImplementedError

    def _phase_targets(self) -> tuple[int, ...]:
        raise NotImplementedError

    def _phase_ready(self) -> bool:
        """True once the collected replies let the phase conclude."""
        raise NotImplementedError

    def _phase_conclude(self) -> list:
        raise NotImplementedError

    # -- shared machinery --------------------------------------------------
    def _base_payload(self) -> dict:
        return {
            "key": self.ctx.key,
            "epoch": self.ctx.config.epoch,
            "op_id": self.ctx.op_id,
            "phase": self.phase,
        }

    def _enter_phase(self, phase: int) -> list:
        self.phase = phase
        self.replies = {}
        self.broadcast_done = False
        kind, size, payload = self._phase_message()
        effects = [Send(dst, kind, size, payload) for dst in self._phase_targets()]
        effects.append(Timer(self.ctx.timeout_ms, ("phase", phase)))
        return effects

    def on_reply(self, src: int, payload: dict) -> list:
        if self.done or payload.get("phase") != self.phase:
            return []
        self.replies.setdefault(src, payload)
        if self._phase_ready():
            return self._phase_conclude()
        return []

    def on_timer(self, token) -> list:
        if self.done or token != ("phase", self.phase) or self.broadcast_done:
            return []
        # Quorum member unresponsive: fall back to broadcasting the phase
        # message to every server in the configuration.
        self.broadcast_done = True
        kind, size, payload = self._phase_message()
        pending = [s for s in self.ctx.config.servers if s not in self.replies]
        return [Send(dst, kind, size, payload) for dst in pending]

    def _finish(self, value, one_phase=False) -> list:
        self.done = True
        return [Complete(value, one_phase)]


class PayloadCodec:
    """Maps abstract values to wire payloads (and back) for the simulator."""

    def make_value(self, op_id: str):
        raise NotImplementedError

    def value_id(self, value) -> str:
        raise NotImplementedError

    def initial_value(self, key: str):
        raise NotImplementedError

    def encode(self, value, n: int, k: int) -> list:
        raise NotImplementedError

    def decode(self, pieces, n: int, k: int):
        raise NotImplementedError

    def initial_piece(self, key: str, row: int, n: int, k: int):
        raise NotImplementedError


class SymbolicCodec(PayloadCodec):
    """Values are opaque ids; chunks are (row, id) pairs. Fast default."""

    def make_value(self, op_id: str):
        return f"v:{op_id}"

    def value_id(self, value) -> str:
        return value

    def initial_value(self, key: str):
        return core.initial_value(key)

    def encode(self, value, n, k):
        return [(row, value) for row in range(n)]

    def decode(self, pieces, n, k):
        rows = {}
        for row, payload in pieces:
            rows.setdefault(row, payload)
        if len(rows) < k:
            raise ValueError(f"decode needs {k} distinct rows, got {len(rows)}")
        ids = set(rows.values())
        if len(ids) != 1:
            raise ValueError(f"mixed chunk identities: {ids}")
        return ids.pop()

    def initial_piece(self, key: str, row: int, n: int, k: int):
        return (row, core.initial_value(key))


class RsCodec(PayloadCodec):
    """Real Reed-Solomon payloads; values are obj_size byte strings that
    embed their id up front so histories stay comparable."""

    def __init__(self, obj_size: int):
        self.obj_size = obj_size

    def _pad(self, ident: str) -> bytes:
        raw = ident.encode()
        if len(raw) + 1 > self.obj_size:
            raise ValueError("obj_size too small to embed value id")
        return raw + b"\x00" * (self.obj_size - len(raw))

    def make_value(self, op_id: str):
        return self._pad(f"v:{op_id}")

    def value_id(self, value) -> str:
        return value.split(b"\x00", 1)[0].decode()

    def initial_value(self, key: str):
        return self._pad(core.initial_value(key))

    def encode(self, value, n, k):
        from . import gfcodec

        return [(c.index, c.data) for c in gfcodec.rs_encode(value, n, k)]

    def decode(self, pieces, n, k):
        from . import gfcodec

        chunks = [gfcodec.Chunk(row, data) for row, data in pieces]
        return gfcodec.rs_decode(chunks, n, k, self.obj_size)

    def initial_piece(self, key: str, row: int, n: int, k: int):
        return self.encode(self.initial_value(key), n, k)[row]
