"""Mixed-criticality TSN frame aggregation and offline schedule synthesis."""
from .aggregation import aggregate_all, cluster_flows
from .baselines import schedule_nwtt, schedule_rnwtt
from .model import (
    AggregateFrame,
    Criticality,
    Flow,
    InvalidParameter,
    Schedule,
    Topology,
    ValidationError,
    default_topology,
    transmission_duration,
)
from .scheduler import SchedulerConfig, find_offsets, run_mcfs2l, schedule_mcfs2l
from .verify import compute_metrics, emit_gcl, replay_verify
from .workload import WorkloadParams, generate, load_flows, save_flows

__all__ = [
    "AggregateFrame",
    "Criticality",
    "Flow",
    "InvalidParameter",
    "Schedule",
    "SchedulerConfig",
    "Topology",
    "ValidationError",
    "WorkloadParams",
    "aggregate_all",
    "cluster_flows",
    "compute_metrics",
    "default_topology",
    "emit_gcl",
    "find_offsets",
    "generate",
    "load_flows",
    "replay_verify",
    "run_mcfs2l",
    "save_flows",
    "schedule_mcfs2l",
    "schedule_nwtt",
    "schedule_rnwtt",
    "transmission_duration",
]
