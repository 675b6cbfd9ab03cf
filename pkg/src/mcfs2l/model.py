"""Domain types for TSN topologies, flows, aggregated frames and schedules.

All times are integer nanoseconds and all sizes are bytes.  At 100 Mbps a
byte takes exactly 80 ns on the wire, so durations in the usual parameter
range are exact.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

MAX_PAYLOAD = 1500
FRAME_OVERHEAD = 42
DEFAULT_RATE = 100_000_000
TT_QUEUE = 7

NS_PER_US = 1_000
NS_PER_MS = 1_000_000


class InvalidParameter(ValueError):
    """Raised when an operation is called outside its domain."""


class ValidationError(ValueError):
    """Raised when a record violates a model invariant.

    ``problems`` holds one human readable diagnostic per violated field.
    """

    def __init__(self, problems: Sequence[str], where: str = ""):
        self.problems = list(problems)
        prefix = f"{where}: " if where else ""
        super().__init__(prefix + "; ".join(self.problems))


class NodeKind(str, enum.Enum):
    ENDPOINT = "endpoint"
    SWITCH = "switch"


class Criticality(str, enum.Enum):
    CRITICAL = "critical"
    NON_CRITICAL = "non_critical"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind


@dataclass(frozen=True)
class Link:
    """Directed dataflow link (one direction of a full-duplex cable)."""

    id: str
    src: str
    dst: str
    rate: int = DEFAULT_RATE
    prop_delay: int = 0

    def __post_init__(self):
        problems = []
        if self.rate <= 0:
            problems.append(f"rate must be > 0, got {self.rate}")
        if self.prop_delay < 0:
            problems.append(f"prop_delay must be >= 0, got {self.prop_delay}")
        if self.src == self.dst:
            problems.append(f"src and dst are both {self.src!r}")
        if problems:
            raise ValidationError(problems, f"link {self.id}")


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]

    def __post_init__(self):
        problems = []
        seen = set()
        for node in self.nodes:
            if node.id in seen:
                problems.append(f"duplicate node id {node.id!r}")
            seen.add(node.id)
        link_ids = set()
        for link in self.links:
            if link.id in link_ids:
                problems.append(f"duplicate link id {link.id!r}")
            link_ids.add(link.id)
            for end in (link.src, link.dst):
                if end not in seen:
                    problems.append(f"link {link.id!r} references unknown node {end!r}")
        if problems:
            raise ValidationError(problems, "topology")

    @cached_property
    def _node_index(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _link_index(self) -> dict[str, Link]:
        return {lk.id: lk for lk in self.links}

    def node(self, node_id: str) -> Node:
        return self._node_index[node_id]

    def link(self, link_id: str) -> Link:
        return self._link_index[link_id]

    def has_link(self, link_id: str) -> bool:
        return link_id in self._link_index

    def link_between(self, src: str, dst: str) -> Link:
        for lk in self.links:
            if lk.src == src and lk.dst == dst:
                return lk
        raise KeyError(f"no link {src} -> {dst}")

    def endpoints(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind is NodeKind.ENDPOINT]

    def shortest_route(self, src: str, dst: str) -> tuple[str, ...]:
        """Fewest-hop route between two nodes (BFS, ties by link id)."""
        adjacency: dict[str, list[Link]] = {}
        for lk in sorted(self.links, key=lambda lk: lk.id):
            adjacency.setdefault(lk.src, []).append(lk)
        previous: dict[str, Link] = {}
        frontier = [src]
        visited = {src}
        while frontier and dst not in visited:
            nxt = []
            for node in frontier:
                for lk in adjacency.get(node, []):
                    if lk.dst not in visited:
                        visited.add(lk.dst)
                        previous[lk.dst] = lk
                        nxt.append(lk.dst)
            frontier = nxt
        if dst not in visited or src == dst:
            raise KeyError(f"no route {src} -> {dst}")
        route = []
        node = dst
        while node != src:
            lk = previous[node]
            route.append(lk.id)
            node = lk.src
        return tuple(reversed(route))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "kind": n.kind.value} for n in self.nodes],
            "links": [
                {"id": lk.id, "src": lk.src, "dst": lk.dst,
                 "rate_bps": lk.rate, "prop_delay_ns": lk.prop_delay}
                for lk in self.links
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        try:
            nodes = tuple(Node(str(n["id"]), NodeKind(n["kind"])) for n in data["nodes"])
            links = tuple(
                Link(str(lk["id"]), str(lk["src"]), str(lk["dst"]),
                     int(lk.get("rate_bps", DEFAULT_RATE)), int(lk.get("prop_delay_ns", 0)))
                for lk in data["links"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError([f"malformed topology record: {exc!r}"]) from exc
        return cls(nodes, links)


def default_topology(rate: int = DEFAULT_RATE, prop_delay: int = 0) -> Topology:
    """Three domain control units around one TSN switch.

    DCU1 is ADAS, DCU2 vehicle control, DCU3 intelligent cockpit.  Every
    cable is full duplex, so each DCU has one link in each direction.
    """
    nodes = (
        Node("DCU1", NodeKind.ENDPOINT),
        Node("DCU2", NodeKind.ENDPOINT),
        Node("DCU3", NodeKind.ENDPOINT),
        Node("SW", NodeKind.SWITCH),
    )
    links = []
    for dcu in ("DCU1", "DCU2", "DCU3"):
        links.append(Link(f"{dcu}->SW", dcu, "SW", rate, prop_delay))
        links.append(Link(f"SW->{dcu}", "SW", dcu, rate, prop_delay))
    return Topology(nodes, tuple(links))


def load_topology(path) -> Topology:
    return Topology.from_dict(json.loads(Path(path).read_text()))


def save_topology(topology: Topology, path) -> None:
    Path(path).write_text(json.dumps(topology.to_dict(), indent=2) + "\n")


def check_route(route: Sequence[str], topology: Topology, src: str, dst: str) -> list[str]:
    """Return the problems with ``route`` (empty list when valid)."""
    if not route:
        return ["route is empty"]
    problems = []
    links = []
    for link_id in route:
        if not topology.has_link(link_id):
            problems.append(f"route references unknown link {link_id!r}")
        else:
            links.append(topology.link(link_id))
    if problems:
        return problems
    for a, b in zip(links, links[1:]):
        if a.dst != b.src:
            problems.append(f"links {a.id!r} and {b.id!r} do not chain")
    if links[0].src != src:
        problems.append(f"route starts at {links[0].src!r}, flow src is {src!r}")
    if links[-1].dst != dst:
        problems.append(f"route ends at {links[-1].dst!r}, flow dst is {dst!r}")
    for end in (links[0].src, links[-1].dst):
        if topology.node(end).kind is not NodeKind.ENDPOINT:
            problems.append(f"route end {end!r} is not an endpoint")
    return problems


@dataclass(frozen=True)
class Flow:
    """One original TT frame.  A flow carries a single frame per period."""

    id: str
    criticality: Criticality
    period: int
    deadline: int
    payload: int
    src: str
    dst: str
    route: tuple[str, ...]

    def __post_init__(self):
        problems = flow_problems(self)
        if problems:
            raise ValidationError(problems, f"flow {self.id}")

    @property
    def is_critical(self) -> bool:
        return self.criticality is Criticality.CRITICAL

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "criticality": self.criticality.value,
            "period": self.period,
            "deadline": self.deadline,
            "payload": self.payload,
            "src": self.src,
            "dst": self.dst,
            "route": list(self.route),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Flow":
        return cls(
            id=str(data["id"]),
            criticality=Criticality(data["criticality"]),
            period=data["period"],
            deadline=data["deadline"],
            payload=data["payload"],
            src=data["src"],
            dst=data["dst"],
            route=tuple(data["route"]),
        )


def flow_problems(flow: Flow) -> list[str]:
    problems = []
    for name in ("period", "deadline", "payload"):
        value = getattr(flow, name)
        if not isinstance(value, int) or isinstance(value, bool):
            problems.append(f"{name} must be an integer, got {value!r}")
    if problems:
        return problems
    if flow.period <= 0:
        problems.append(f"period must be > 0, got {flow.period}")
    if flow.deadline <= 0:
        problems.append(f"deadline must be > 0, got {flow.deadline}")
    if flow.deadline > flow.period:
        problems.append(f"deadline {flow.deadline} exceeds period {flow.period}")
    if not 1 <= flow.payload <= MAX_PAYLOAD:
        problems.append(f"payload {flow.payload} outside [1, {MAX_PAYLOAD}]")
    if not flow.route:
        problems.append("route is empty")
    if not isinstance(flow.criticality, Criticality):
        problems.append(f"unknown criticality {flow.criticality!r}")
    return problems


@dataclass(frozen=True)
class AggregateFrame:
    """A schedulable unit built from one or more flows.

    ``members`` keeps the full flow records so the frame can be reduced
    again during reassembly.  A singleton frame carries the flow's own id.

    ``payload`` is the peak size, reached at instance 0 where every member
    is due.  By default a member whose period is longer than the frame's
    only rides in the instances where it is due, so later instances can be
    smaller; with ``uniform_payload`` every instance carries every member.
    """

    id: str
    members: tuple[Flow, ...]
    period: int
    deadline: int
    payload: int
    route: tuple[str, ...]
    src: str
    dst: str
    contains_critical: bool
    uniform_payload: bool = False

    @classmethod
    def from_flows(cls, flows: Iterable[Flow], frame_id: str | None = None, *,
                   uniform_payload: bool = False) -> "AggregateFrame":
        members = tuple(flows)
        if not members:
            raise InvalidParameter("an aggregate needs at least one member")
        head = members[0]
        return cls(
            id=frame_id if frame_id is not None else "+".join(f.id for f in members),
            members=members,
            period=reduce(math.gcd, (f.period for f in members)),
            deadline=min(f.deadline for f in members),
            payload=sum(f.payload for f in members),
            route=head.route,
            src=head.src,
            dst=head.dst,
            contains_critical=any(f.is_critical for f in members),
            uniform_payload=uniform_payload,
        )

    @cached_property
    def instance_payloads(self) -> tuple[int, ...]:
        """Payload of instances 0..m-1; instance k carries entry k % m."""
        if self.uniform_payload:
            return (self.payload,)
        cycle = max(f.period for f in self.members) // self.period
        return tuple(
            sum(f.payload for f in self.members if (k * self.period) % f.period == 0)
            for k in range(cycle)
        )

    @property
    def member_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.members)

    @property
    def non_critical_members(self) -> tuple[Flow, ...]:
        return tuple(f for f in self.members if not f.is_critical)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "members": list(self.member_ids),
            "period": self.period,
            "deadline": self.deadline,
            "payload": self.payload,
            "src": self.src,
            "dst": self.dst,
            "route": list(self.route),
            "contains_critical": self.contains_critical,
            "uniform_payload": self.uniform_payload,
        }


def aggregate_problems(frame: AggregateFrame, max_payload: int = MAX_PAYLOAD) -> list[str]:
    """Invariant checker for aggregated frames; empty list means valid."""
    problems = []
    members = frame.members
    if not members:
        return ["aggregate has no members"]
    if frame.payload != sum(f.payload for f in members):
        problems.append("payload is not the sum of member payloads")
    if frame.payload > max_payload:
        problems.append(f"payload {frame.payload} exceeds {max_payload}")
    if frame.period != reduce(math.gcd, (f.period for f in members)):
        problems.append("period is not the gcd of member periods")
    if frame.deadline != min(f.deadline for f in members):
        problems.append("deadline is not the minimum member deadline")
    keys = {(f.src, f.dst, f.route) for f in members}
    if keys != {(frame.src, frame.dst, frame.route)}:
        problems.append("members do not share src, dst and route")
    if not is_harmonic({f.period for f in members}):
        problems.append("member periods are not harmonic")
    if frame.contains_critical != any(f.is_critical for f in members):
        problems.append("contains_critical does not match members")
    if len(set(frame.member_ids)) != len(members):
        problems.append("duplicate member ids")
    return problems


@dataclass
class Schedule:
    """Result of one scheduler run.

    ``offsets`` maps (frame id, link id) to the send offset relative to each
    periodic release; instance k of a frame starts on a link at
    ``k * period + offset``.  ``rejected`` maps original flow ids to a
    rejection reason (deadline, link_conflict, forwarding or oversize).
    """

    algorithm: str
    horizon: int
    frames: dict[str, AggregateFrame] = field(default_factory=dict)
    offsets: dict[tuple[str, str], int] = field(default_factory=dict)
    rejected: dict[str, str] = field(default_factory=dict)
    audit: list[dict] = field(default_factory=list)

    @property
    def accepted(self) -> set[str]:
        return set(self.frames)

    def accepted_flow_ids(self) -> set[str]:
        return {fid for frame in self.frames.values() for fid in frame.member_ids}

    def frame_offsets(self, frame: AggregateFrame) -> list[int]:
        return [self.offsets[(frame.id, link_id)] for link_id in frame.route]

    def commit(self, frame: AggregateFrame, offsets: Sequence[int]) -> None:
        if frame.id in self.frames:
            raise InvalidParameter(f"frame {frame.id} already scheduled")
        self.frames[frame.id] = frame
        for link_id, offset in zip(frame.route, offsets):
            self.offsets[(frame.id, link_id)] = offset

    def reject(self, flows: Iterable[Flow], reason: str) -> None:
        for flow in flows:
            self.rejected[flow.id] = reason

    def to_dict(self) -> dict:
        frames = []
        for frame_id in sorted(self.frames):
            frame = self.frames[frame_id]
            entry = frame.to_dict()
            entry["offsets"] = {link_id: self.offsets[(frame_id, link_id)] for link_id in frame.route}
            entry["member_records"] = [f.to_dict() for f in frame.members]
            frames.append(entry)
        return {
            "algorithm": self.algorithm,
            "horizon_ns": self.horizon,
            "accepted": frames,
            "rejected": [{"flow": fid, "reason": self.rejected[fid]} for fid in sorted(self.rejected)],
            "reassembly": self.audit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        schedule = cls(algorithm=data["algorithm"], horizon=int(data["horizon_ns"]))
        for entry in data["accepted"]:
            flows = [Flow.from_dict(rec) for rec in entry["member_records"]]
            frame = AggregateFrame.from_flows(flows, entry["id"],
                                              uniform_payload=bool(entry.get("uniform_payload", False)))
            schedule.commit(frame, [int(entry["offsets"][lk]) for lk in frame.route])
        schedule.rejected = {rec["flow"]: rec["reason"] for rec in data["rejected"]}
        schedule.audit = list(data.get("reassembly", []))
        return schedule


@dataclass(frozen=True)
class TransmissionWindow:
    link: str
    frame: str
    instance: int
    start: int
    end: int


def transmission_duration(payload: int, overhead: int = FRAME_OVERHEAD, rate: int = DEFAULT_RATE) -> int:
    """Time on the wire for one frame, rounded up to whole nanoseconds."""
    if rate <= 0:
        raise InvalidParameter(f"rate must be > 0, got {rate}")
    if payload < 0 or overhead < 0:
        raise InvalidParameter("payload and overhead must be >= 0")
    bits = (payload + overhead) * 8
    return -(-bits * 1_000_000_000 // rate)


def is_harmonic(periods: Iterable[int]) -> bool:
    values = sorted(set(periods))
    if not values:
        raise InvalidParameter("is_harmonic needs at least one period")
    # Sorted, a set is harmonic iff each element divides the next.
    return all(b % a == 0 for a, b in zip(values, values[1:]))


def hyperperiod(periods: Iterable[int]) -> int:
    values = list(periods)
    if not values:
        raise InvalidParameter("hyperperiod needs at least one period")
    return reduce(math.lcm, values)


class Hop(NamedTuple):
    link: str
    duration: int  # peak duration, instance 0
    prop: int
    pattern: tuple[int, ...]  # duration of instance k is pattern[k % len(pattern)]


def hop_timing(frame: AggregateFrame | Flow, topology: Topology) -> list[Hop]:
    """Transmission timing of ``frame`` on every link of its route."""
    payloads = getattr(frame, "instance_payloads", (frame.payload,))
    hops = []
    for link_id in frame.route:
        link = topology.link(link_id)
        pattern = tuple(transmission_duration(p, FRAME_OVERHEAD, link.rate) for p in payloads)
        hops.append(Hop(link_id, pattern[0], link.prop_delay, pattern))
    return hops


def materialize_windows(schedule: Schedule, topology: Topology, horizon: int | None = None) -> list[TransmissionWindow]:
    """Every transmission window of every accepted frame over ``horizon``."""
    horizon = schedule.horizon if horizon is None else horizon
    windows = []
    for frame_id in sorted(schedule.frames):
        frame = schedule.frames[frame_id]
        for hop in hop_timing(frame, topology):
            offset = schedule.offsets[(frame_id, hop.link)]
            for k in range(horizon // frame.period):
                start = k * frame.period + offset
                duration = hop.pattern[k % len(hop.pattern)]
                windows.append(TransmissionWindow(hop.link, frame_id, k, start, start + duration))
    return windows
