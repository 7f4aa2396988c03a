"""Shared domain types: tags, cluster model, workload spec, configurations.

Everything here is an immutable value object; the rest of the package builds
on these plus the quorum validity rules in `config_validate`.

Units used throughout the package:
  time      milliseconds (simulated), except workload rates (per second)
  sizes     bytes
  prices    $/byte (network), $/(byte*second) (storage), $/second (VM)
Ingestion converts from the table-level units ($/GB, $/GB-month, $/hour).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from functools import total_ordering
from typing import Mapping, Sequence

GB = 1e9
MONTH_SECONDS = 730 * 3600.0  # cloud billing convention: 730 h/month
HOUR_SECONDS = 3600.0

ABD = "abd"
CAS = "cas"


@total_ordering
@dataclass(frozen=True)
class Tag:
    """Logical timestamp (seq, client); lexicographic total order."""

    seq: int
    client: str

    def __lt__(self, other: "Tag") -> bool:
        return (self.seq, self.client) < (other.seq, other.client)

    def next(self, client: str) -> "Tag":
        return Tag(self.seq + 1, client)


#: Initial tag, smaller than any tag a write can produce.
T0 = Tag(0, "")


def tag_compare(a: Tag, b: Tag) -> int:
    """-1, 0 or 1 as a <, ==, > b."""
    if a == b:
        return 0
    return -1 if a < b else 1


def tag_max(tags) -> Tag:
    best = None
    for t in tags:
        if best is None or t > best:
            best = t
    if best is None:
        raise ValueError("tag_max of empty sequence")
    return best


@dataclass(frozen=True)
class DcId:
    index: int
    name: str = ""

    def __str__(self) -> str:
        return self.name or f"dc{self.index}"


@dataclass(frozen=True)
class ClusterModel:
    """Inter-DC latency/bandwidth and the three price tables.

    latency_oneway[i][j] is the one-way latency i->j in ms (RTT/2).
    net_price[i][j] is $/byte for a transfer i->j, priced at the sender.
    """

    names: tuple[str, ...]
    latency_oneway: tuple[tuple[float, ...], ...]
    bandwidth: tuple[tuple[float, ...], ...]  # bytes/second
    net_price: tuple[tuple[float, ...], ...]  # $/byte
    storage_price: tuple[float, ...]  # $/(byte*second) per DC
    vm_price: tuple[float, ...]  # $/second per DC
    theta_v: float = 0.0  # VM-seconds of capacity per request

    @property
    def d(self) -> int:
        return len(self.names)

    def dc(self, i: int) -> DcId:
        return DcId(i, self.names[i])

    def dc_index(self, name_or_index) -> int:
        if isinstance(name_or_index, int):
            return name_or_index
        if isinstance(name_or_index, DcId):
            return name_or_index.index
        return self.names.index(str(name_or_index))

    def rtt(self, i: int, j: int) -> float:
        return self.latency_oneway[i][j] + self.latency_oneway[j][i]

    def max_rtt(self) -> float:
        return max(self.rtt(i, j) for i in range(self.d) for j in range(self.d))

    def transfer_ms(self, i: int, j: int, size_bytes: float) -> float:
        b = self.bandwidth[i][j]
        if b <= 0 or size_bytes <= 0:
            return 0.0
        return size_bytes / b * 1000.0

    def validate(self) -> None:
        d = self.d
        for name, mat in (("latency_oneway", self.latency_oneway),
                          ("bandwidth", self.bandwidth),
                          ("net_price", self.net_price)):
            if len(mat) != d or any(len(row) != d for row in mat):
                raise ValueError(f"{name} must be {d}x{d}")
        if any(self.latency_oneway[i][i] < 0 for i in range(d)):
            raise ValueError("diagonal latency must be >= 0")
        if any(p < 0 for row in self.net_price for p in row):
            raise ValueError("network prices must be >= 0")
        if any(p < 0 for p in self.storage_price) or any(p < 0 for p in self.vm_price):
            raise ValueError("prices must be >= 0")


def _matrix(rows) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(x) for x in row) for row in rows)


def model_from_dict(doc: Mapping) -> ClusterModel:
    """Build a ClusterModel from the JSON ingestion schema.

    Accepts either `latency_oneway_ms` directly or `rtt_ms` (halved per
    direction). Network prices come in as $/GB, storage as $/GB-month, VM as
    $/hour; bandwidth as `bandwidth_gbps` (scalar or matrix, default 1 Gbps).
    """
    names = tuple(str(n) for n in doc["names"])
    d = len(names)
    if "latency_oneway_ms" in doc:
        lat = _matrix(doc["latency_oneway_ms"])
    else:
        rtt = doc["rtt_ms"]
        lat = _matrix([[rtt[i][j] / 2.0 for j in range(d)] for i in range(d)])
    bw = doc.get("bandwidth_gbps", 1.0)
    if isinstance(bw, (int, float)):
        bw_mat = _matrix([[bw * 1e9 / 8.0] * d for _ in range(d)])
    else:
        bw_mat = _matrix([[cell * 1e9 / 8.0 for cell in row] for row in bw])
    net = _matrix([[cell / GB for cell in row] for row in doc["net_price_per_gb"]])
    storage = tuple(float(p) / GB / MONTH_SECONDS for p in doc["storage_price_gb_month"])
    vm = tuple(float(p) / HOUR_SECONDS for p in doc["vm_price_hour"])
    model = ClusterModel(
        names=names,
        latency_oneway=lat,
        bandwidth=bw_mat,
        net_price=net,
        storage_price=storage,
        vm_price=vm,
        theta_v=float(doc.get("theta_v", 0.0)),
    )
    model.validate()
    return model


def load_model(path: str) -> ClusterModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def load_model_csv(rtt_path: str, net_price_path: str, *, names=None,
                   storage_price_gb_month=0.0, vm_price_hour=0.0,
                   bandwidth_gbps=1.0, theta_v=0.0) -> ClusterModel:
    """Ingest the CSV-pair form: an RTT matrix (ms) and a price matrix ($/GB).

    Row/column order is the DC declaration order. Storage/VM prices are not
    part of the CSV pair and default to the scalars given here.
    """
    def read_matrix(path):
        with open(path, newline="") as fh:
            rows = [[float(c) for c in row] for row in csv.reader(fh) if row]
        if any(len(r) != len(rows) for r in rows):
            raise ValueError(f"{path}: matrix must be square")
        return rows

    rtt = read_matrix(rtt_path)
    price = read_matrix(net_price_path)
    d = len(rtt)
    if len(price) != d:
        raise ValueError("RTT and price matrices must have the same dimension")
    doc = {
        "names": list(names) if names else [f"dc{i}" for i in range(d)],
        "rtt_ms": rtt,
        "net_price_per_gb": price,
        "storage_price_gb_month": [storage_price_gb_month] * d,
        "vm_price_hour": [vm_price_hour] * d,
        "bandwidth_gbps": bandwidth_gbps,
        "theta_v": theta_v,
    }
    return model_from_dict(doc)


def load_builtin_model(name: str = "gcp9") -> ClusterModel:
    import importlib.resources as res

    with res.files("geokv.data").joinpath(f"{name}.json").open() as fh:
        return model_from_dict(json.load(fh))


@dataclass(frozen=True)
class WorkloadSpec:
    """Per-key workload features and SLOs."""

    rate: float  # requests/second (JSON key: "lambda")
    read_ratio: float
    origin_dist: tuple[float, ...]  # fraction per DC, sums to 1
    obj_size: int  # bytes, value payload incl. per-message metadata
    meta_size: int = 100  # bytes per metadata-only message
    slo_get: float = 1000.0  # ms
    slo_put: float = 1000.0  # ms
    f: int = 1

    def validate(self) -> None:
        if self.rate <= 0:
            raise ValueError("lambda must be > 0")
        if not 0.0 <= self.read_ratio <= 1.0:
            raise ValueError("read_ratio must be in [0,1]")
        if abs(sum(self.origin_dist) - 1.0) > 1e-9:
            raise ValueError("origin_dist must sum to 1")
        if any(a < 0 for a in self.origin_dist):
            raise ValueError("origin_dist fractions must be >= 0")
        if self.f < 1:
            raise ValueError("f must be >= 1")
        if self.obj_size <= 0 or self.meta_size < 0:
            raise ValueError("sizes must be positive")


def workload_from_dict(doc: Mapping) -> WorkloadSpec:
    spec = WorkloadSpec(
        rate=float(doc.get("lambda", doc.get("rate"))),
        read_ratio=float(doc["read_ratio"]),
        origin_dist=tuple(float(a) for a in doc["origin_dist"]),
        obj_size=int(doc["obj_size"]),
        meta_size=int(doc.get("meta_size", 100)),
        slo_get=float(doc.get("slo_get", 1000.0)),
        slo_put=float(doc.get("slo_put", 1000.0)),
        f=int(doc.get("f", 1)),
    )
    spec.validate()
    return spec


def load_workload(path: str) -> WorkloadSpec:
    with open(path) as fh:
        return workload_from_dict(json.load(fh))


def chunk_bytes(obj_size: int, k: int) -> int:
    """Coded-element size: values are zero-padded to a multiple of k."""
    return math.ceil(obj_size / k)


@dataclass(frozen=True)
class Configuration:
    """A key's protocol, code parameters, placement and per-origin quorums.

    quorums_by_origin maps an origin DC index to one server tuple per quorum
    index (2 quorums for abd, 4 for cas). Quorum members are DC indices drawn
    from `servers`.
    """

    epoch: int
    protocol: str  # ABD | CAS
    servers: tuple[int, ...]
    code_k: int  # 1 for abd
    quorum_sizes: tuple[int, ...]
    quorums_by_origin: Mapping[int, tuple[tuple[int, ...], ...]]

    @property
    def n(self) -> int:
        return len(self.servers)

    def quorums(self, origin: int) -> tuple[tuple[int, ...], ...]:
        return self.quorums_by_origin[origin]

    def chunk_size(self, obj_size: int) -> int:
        return chunk_bytes(obj_size, self.code_k) if self.protocol == CAS else obj_size

    def with_epoch(self, epoch: int) -> "Configuration":
        return replace(self, epoch=epoch)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "protocol": self.protocol,
            "servers": list(self.servers),
            "code_k": self.code_k,
            "quorum_sizes": list(self.quorum_sizes),
            "quorums_by_origin": {
                str(o): [list(q) for q in qs] for o, qs in self.quorums_by_origin.items()
            },
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "Configuration":
        return Configuration(
            epoch=int(doc["epoch"]),
            protocol=str(doc["protocol"]).lower(),
            servers=tuple(int(s) for s in doc["servers"]),
            code_k=int(doc["code_k"]),
            quorum_sizes=tuple(int(q) for q in doc["quorum_sizes"]),
            quorums_by_origin={
                int(o): tuple(tuple(int(m) for m in q) for q in qs)
                for o, qs in doc["quorums_by_origin"].items()
            },
        )


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()


def quorum_sizes_ok(protocol: str, n: int, k: int, sizes: Sequence[int], f: int) -> list[str]:
    """Check the protocol's quorum-size inequalities; returns violation names."""
    bad = []
    if protocol == ABD:
        if len(sizes) != 2:
            return ["abd needs 2 quorum sizes"]
        q1, q2 = sizes
        if not q1 + q2 > n:
            bad.append("q1+q2 > N")
        if q1 > n - f:
            bad.append("q1 <= N-f")
        if q2 > n - f:
            bad.append("q2 <= N-f")
        if min(sizes) < 1:
            bad.append("quorum sizes >= 1")
    elif protocol == CAS:
        if len(sizes) != 4:
            return ["cas needs 4 quorum sizes"]
        q1, q2, q3, q4 = sizes
        if not q1 + q3 > n:
            bad.append("q1+q3 > N")
        if not q1 + q4 > n:
            bad.append("q1+q4 > N")
        if not q2 + q4 >= n + k:
            bad.append("q2+q4 >= N+K")
        if not q4 >= k:
            bad.append("q4 >= K")
        for i, q in enumerate(sizes, start=1):
            if q > n - f:
                bad.append(f"q{i} <= N-f")
        if not n - k >= 2 * f:
            bad.append("N-K >= 2f")
        if min(sizes) < 1:
            bad.append("quorum sizes >= 1")
    else:
        bad.append(f"unknown protocol {protocol!r}")
    return bad


def config_validate(config: Configuration, f: int) -> ValidationResult:
    """Validate quorum inequalities and per-origin quorum cardinalities."""
    bad = []
    n = config.n
    if len(set(config.servers)) != n:
        bad.append("servers unique")
    if config.protocol == ABD and config.code_k != 1:
        bad.append("abd requires K=1")
    if config.protocol == CAS and not 1 <= config.code_k <= n:
        bad.append("1 <= K <= N")
    bad.extend(quorum_sizes_ok(config.protocol, n, config.code_k, config.quorum_sizes, f))
    server_set = set(config.servers)
    for origin, qs in config.quorums_by_origin.items():
        if len(qs) != len(config.quorum_sizes):
            bad.append(f"origin {origin}: quorum count")
            continue
        for idx, quorum in enumerate(qs):
            if len(set(quorum)) != config.quorum_sizes[idx]:
                bad.append(f"origin {origin}: |Q{idx + 1}| == q{idx + 1}")
            if not set(quorum) <= server_set:
                bad.append(f"origin {origin}: Q{idx + 1} within servers")
    return ValidationResult(not bad, tuple(bad))


def make_uniform_config(protocol: str, servers: Sequence[int], code_k: int,
                        quorum_sizes: Sequence[int], origins: Sequence[int],
                        epoch: int = 0) -> Configuration:
    """Configuration whose per-origin quorums are all prefixes of `servers`."""
    servers = tuple(servers)
    quorums = tuple(tuple(servers[:q]) for q in quorum_sizes)
    return Configuration(
        epoch=epoch,
        protocol=protocol,
        servers=servers,
        code_k=code_k,
        quorum_sizes=tuple(quorum_sizes),
        quorums_by_origin={int(o): quorums for o in origins},
    )


@dataclass(frozen=True)
class OpRecord:
    """One invocation/response pair from a run's history."""

    op_id: str
    kind: str  # "GET" | "PUT"
    key: str
    origin: int
    t_invoke: float
    t_respond: float | None  # None for ops that never completed
    value: str | None  # written value (PUT) or returned value (GET)
    epoch_completed: int | None = None
    one_phase: bool = False

    @property
    def completed(self) -> bool:
        return self.t_respond is not None

    @property
    def latency(self) -> float:
        if self.t_respond is None:
            raise ValueError(f"{self.op_id} never completed")
        return self.t_respond - self.t_invoke

    def to_line(self) -> str:
        return json.dumps({
            "op_id": self.op_id,
            "kind": self.kind,
            "key": self.key,
            "origin": self.origin,
            "t_invoke": self.t_invoke,
            "t_respond": self.t_respond,
            ("value_written" if self.kind == "PUT" else "value_read"): self.value,
            "epoch": self.epoch_completed,
            "one_phase": self.one_phase,
        }, sort_keys=True)

    @staticmethod
    def from_line(line: str) -> "OpRecord":
        doc = json.loads(line)
        return OpRecord(
            op_id=doc["op_id"],
            kind=doc["kind"],
            key=doc["key"],
            origin=int(doc["origin"]),
            t_invoke=float(doc["t_invoke"]),
            t_respond=None if doc["t_respond"] is None else float(doc["t_respond"]),
            value=doc.get("value_written", doc.get("value_read")),
            epoch_completed=doc.get("epoch"),
            one_phase=bool(doc.get("one_phase", False)),
        )


def initial_value(key: str) -> str:
    """Distinguished id of a key's initial value (tag t0)."""
    return f"@init:{key}"


def write_history(records, path: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


def read_history(path: str) -> list[OpRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(OpRecord.from_line(line))
    return out
