"""Linearizable geo-distributed KV core: quorum protocols (replicated and
erasure-coded), live reconfiguration, a cost/latency configuration optimizer,
a deterministic protocol simulator, and an exact linearizability checker."""

from .core import (ABD, CAS, ClusterModel, Configuration, DcId, OpRecord, T0,
                   Tag, WorkloadSpec, config_validate, load_builtin_model,
                   tag_compare)

__all__ = [
    "ABD", "CAS", "ClusterModel", "Configuration", "DcId", "OpRecord", "T0",
    "Tag", "WorkloadSpec", "config_validate", "load_builtin_model",
    "tag_compare",
]
