"""Mixed-criticality frame aggregation.

Flows sharing source, destination and route are packed first-fit-decreasing
into clusters whose periods stay harmonic and whose summed payload fits one
TSN frame.  Each cluster then becomes one AggregateFrame with the gcd period,
the minimum deadline and the summed payload.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby
from typing import NamedTuple

from .model import (
    FRAME_OVERHEAD,
    MAX_PAYLOAD,
    AggregateFrame,
    Flow,
    Topology,
    transmission_duration,
)


@dataclass
class Cluster:
    flows: list[Flow] = field(default_factory=list)
    total_payload: int = 0
    period_set: set[int] = field(default_factory=set)
    min_deadline: int | None = None

    @property
    def flow_ids(self) -> list[str]:
        return [f.id for f in self.flows]

    def add(self, flow: Flow) -> None:
        self.flows.append(flow)
        self.total_payload += flow.payload
        self.period_set.add(flow.period)
        if self.min_deadline is None or flow.deadline < self.min_deadline:
            self.min_deadline = flow.deadline


class Aggregation(NamedTuple):
    frames: list[AggregateFrame]
    oversized: list[Flow]


def route_latency(payload: int, route, topology: Topology) -> int:
    """Contention-free source-to-destination latency of one frame."""
    total = 0
    for link_id in route:
        link = topology.link(link_id)
        total += transmission_duration(payload, FRAME_OVERHEAD, link.rate) + link.prop_delay
    return total


def _harmonic_with(period: int, periods: set[int]) -> bool:
    return all(period % p == 0 or p % period == 0 for p in periods)


def _admits(cluster: Cluster, flow: Flow, max_payload: int, equal_periods_only: bool,
            topology: Topology | None) -> bool:
    if cluster.total_payload + flow.payload > max_payload:
        return False
    if equal_periods_only:
        if cluster.period_set != {flow.period}:
            return False
    elif not _harmonic_with(flow.period, cluster.period_set):
        return False
    if topology is not None:
        # The merged frame must still be able to meet its tightest deadline
        # on an idle network, otherwise aggregation alone makes it unschedulable.
        deadline = min(cluster.min_deadline, flow.deadline)
        if route_latency(cluster.total_payload + flow.payload, flow.route, topology) > deadline:
            return False
    return True


def _group_key(flow: Flow):
    return (flow.src, flow.dst, flow.route)


def cluster_flows(flows, max_payload: int = MAX_PAYLOAD, *, equal_periods_only: bool = False,
                  topology: Topology | None = None) -> tuple[list[Cluster], list[Flow]]:
    """Partition ``flows`` into aggregation clusters.

    Returns ``(clusters, oversized)``.  Flows heavier than ``max_payload`` are
    never clustered and come back in ``oversized``.  When ``topology`` is
    given, a flow only joins a cluster if the merged frame's idle-network
    latency still meets the merged deadline.
    """
    oversized = [f for f in flows if f.payload > max_payload]
    eligible = sorted((f for f in flows if f.payload <= max_payload), key=_group_key)
    clusters: list[Cluster] = []
    for _, group in groupby(eligible, key=_group_key):
        open_clusters: list[Cluster] = []
        for flow in sorted(group, key=lambda f: (-f.payload, f.id)):
            for cluster in open_clusters:
                if _admits(cluster, flow, max_payload, equal_periods_only, topology):
                    cluster.add(flow)
                    break
            else:
                cluster = Cluster()
                cluster.add(flow)
                open_clusters.append(cluster)
        clusters.extend(open_clusters)
    return clusters, oversized


def build_aggregate(cluster: Cluster, *, uniform_payload: bool = False) -> AggregateFrame:
    members = sorted(cluster.flows, key=lambda f: f.id)
    return AggregateFrame.from_flows(members, uniform_payload=uniform_payload)


def aggregate_all(flows, max_payload: int = MAX_PAYLOAD, *, equal_periods_only: bool = False,
                  uniform_payload: bool = False, topology: Topology | None = None) -> Aggregation:
    clusters, oversized = cluster_flows(flows, max_payload, equal_periods_only=equal_periods_only,
                                        topology=topology)
    return Aggregation([build_aggregate(c, uniform_payload=uniform_payload) for c in clusters], oversized)


def aggregation_report(result: Aggregation) -> dict:
    return {
        "clusters": [
            {
                "frame": frame.id,
                "members": list(frame.member_ids),
                "period": frame.period,
                "deadline": frame.deadline,
                "payload": frame.payload,
                "contains_critical": frame.contains_critical,
            }
            for frame in result.frames
        ],
        "oversized": sorted(f.id for f in result.oversized),
    }
