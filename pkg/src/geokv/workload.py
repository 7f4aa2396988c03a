"""Synthetic workload generation, trace replay, and driver-level statistics.

Arrivals are an open-loop Poisson process; every arrival is a GET with the
spec's read probability and originates at a DC drawn from the origin
distribution. Traces are CSV rows (t_offset_seconds, kind, key, size_bytes)
with an optional trailing origin column; replaying a trace emits operations
at the recorded offsets.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import OpRecord, WorkloadSpec

TRACE_HEADER = ("t_offset_seconds", "kind", "key", "size_bytes")


def gen_workload(spec: WorkloadSpec, seed, duration_ms: float,
                 key: str = "k") -> list[tuple[float, str, str, int]]:
    """Timed op stream [(t_ms, key, kind, origin)] for one key."""
    spec.validate()
    rng = random.Random(seed)
    origins = [i for i, a in enumerate(spec.origin_dist) if a > 0]
    weights = [spec.origin_dist[i] for i in origins]
    out = []
    t = 0.0
    while True:
        t += rng.expovariate(spec.rate) * 1e3
        if t >= duration_ms:
            break
        kind = "GET" if rng.random() < spec.read_ratio else "PUT"
        origin = rng.choices(origins, weights)[0]
        out.append((t, key, kind, origin))
    return out


@dataclass(frozen=True)
class TraceOp:
    t_s: float
    kind: str
    key: str
    size_bytes: int
    origin: int | None = None


def replay_trace(path: str) -> list[TraceOp]:
    """Parse a trace CSV; rejects malformed rows with their line number."""
    ops = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0] == TRACE_HEADER[0]:
                continue
            try:
                if len(row) not in (4, 5):
                    raise ValueError("expected 4 or 5 columns")
                t_s = float(row[0])
                kind = row[1].strip().upper()
                if kind not in ("GET", "PUT"):
                    raise ValueError(f"kind must be GET or PUT, got {row[1]!r}")
                size = int(row[3])
                origin = int(row[4]) if len(row) == 5 else None
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace row: {exc}") from exc
            ops.append(TraceOp(t_s, kind, row[2].strip(), size, origin))
    ops.sort(key=lambda o: (o.t_s, o.key, o.kind))
    return ops


def export_trace(ops: Iterable[TraceOp], path: str, include_origin: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for op in ops:
            row = [repr(op.t_s), op.kind, op.key, op.size_bytes]
            if include_origin and op.origin is not None:
                row.append(op.origin)
            writer.writerow(row)


def stream_to_trace(arrivals: Sequence[tuple], obj_size: int) -> list[TraceOp]:
    """Convert a generated (t_ms, key, kind, origin) stream to trace rows."""
    return [TraceOp(t_ms / 1e3, kind, key, obj_size, origin)
            for t_ms, key, kind, origin in arrivals]


def trace_arrivals(ops: Sequence[TraceOp], key_specs: Mapping[str, WorkloadSpec],
                   seed=0) -> list[tuple[float, str, str, int]]:
    """Map trace rows to simulator arrivals; origins missing from the trace
    are sampled from the key's origin distribution."""
    rng = random.Random(f"{seed}:trace")
    out = []
    for op in ops:
        if op.key not in key_specs:
            raise ValueError(f"trace references unknown key {op.key!r}")
        origin = op.origin
        if origin is None:
            spec = key_specs[op.key]
            origins = [i for i, a in enumerate(spec.origin_dist) if a > 0]
            weights = [spec.origin_dist[i] for i in origins]
            origin = rng.choices(origins, weights)[0]
        out.append((op.t_s * 1e3, op.key, op.kind, origin))
    return out


@dataclass
class WorkloadStats:
    ops_total: int
    ops_completed: int
    optimized_get_fraction: float
    optimized_get_fraction_by_origin: dict
    slo_violation_fraction: float
    violation_windows: list  # (window_start_s, violating_fraction)
    windows_total: int


def measure(history: Iterable[OpRecord], spec: WorkloadSpec, *,
            window_s: float = 10.0, violation_frac: float = 0.01) -> WorkloadStats:
    """Driver-level statistics: one-phase GET fractions and the windows in
    which the fraction of SLO-violating ops exceeds the reactive threshold."""
    records = list(history)
    completed = [r for r in records if r.completed]
    get_by_origin: dict[int, list[int]] = {}
    windows: dict[int, list[int]] = {}
    violating_total = 0
    for rec in completed:
        if rec.kind == "GET":
            got = get_by_origin.setdefault(rec.origin, [0, 0])
            got[1] += 1
            got[0] += 1 if rec.one_phase else 0
        slo = spec.slo_get if rec.kind == "GET" else spec.slo_put
        win = int(rec.t_respond // (window_s * 1e3))
        cell = windows.setdefault(win, [0, 0])
        cell[1] += 1
        if rec.latency > slo:
            cell[0] += 1
            violating_total += 1
    total_opt = sum(v[0] for v in get_by_origin.values())
    total_get = sum(v[1] for v in get_by_origin.values())
    violation_windows = [
        (win * window_s, cell[0] / cell[1])
        for win, cell in sorted(windows.items())
        if cell[1] and cell[0] / cell[1] > violation_frac
    ]
    return WorkloadStats(
        ops_total=len(records),
        ops_completed=len(completed),
        optimized_get_fraction=(total_opt / total_get) if total_get else 0.0,
        optimized_get_fraction_by_origin={
            o: v[0] / v[1] for o, v in sorted(get_by_origin.items()) if v[1]},
        slo_violation_fraction=violating_total / len(completed) if completed else 0.0,
        violation_windows=violation_windows,
        windows_total=len(windows),
    )


def cost_overshoot(measured_dollars_per_s: float, modeled_dollars_per_s: float,
                   threshold: float = 0.2) -> bool:
    """Reactive cost-suboptimality rule: observed exceeds modeled by more
    than the threshold fraction."""
    if modeled_dollars_per_s <= 0:
        return measured_dollars_per_s > 0
    return measured_dollars_per_s > modeled_dollars_per_s * (1.0 + threshold)
