"""Synthetic automotive workloads and flow-set files."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .aggregation import route_latency
from .model import (
    MAX_PAYLOAD,
    NS_PER_MS,
    NS_PER_US,
    Criticality,
    Flow,
    Topology,
    ValidationError,
    check_route,
    default_topology,
)

DEFAULT_PERIODS = tuple(p * NS_PER_MS for p in (20, 25, 40, 50, 100))


@dataclass(frozen=True)
class WorkloadParams:
    """Parameter envelope of the synthetic GM-style flow sets.

    ``deadline_floor`` clamps each flow's lower deadline bound to its own
    idle-network route latency (rounded up to the deadline grid) so that every
    generated flow is schedulable in isolation.
    """

    n_frames: int = 100
    critical_fraction: float = 0.5
    period_menu: tuple[int, ...] = DEFAULT_PERIODS
    deadline_range: tuple[int, int] = (200 * NS_PER_US, 800 * NS_PER_US)
    payload_range: tuple[int, int] = (100, 1500)
    rng_seed: int = 0
    deadline_grid: int = NS_PER_US
    deadline_floor: bool = True
    sources: tuple[str, ...] = ("DCU1", "DCU3")
    destination: str = "DCU2"

    def __post_init__(self):
        problems = params_problems(self)
        if problems:
            raise ValidationError(problems, "workload parameters")

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("period_menu", "deadline_range", "payload_range", "sources"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "WorkloadParams":
        data = dict(data)
        for key in ("period_menu", "deadline_range", "payload_range", "sources"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def params_problems(p: WorkloadParams) -> list[str]:
    problems = []
    if p.n_frames < 0:
        problems.append(f"n_frames must be >= 0, got {p.n_frames}")
    if not 0 <= p.critical_fraction <= 1:
        problems.append(f"critical_fraction {p.critical_fraction} outside [0, 1]")
    if not p.period_menu or min(p.period_menu) <= 0:
        problems.append("period_menu must hold positive periods")
    d_lo, d_hi = p.deadline_range
    if not 0 < d_lo <= d_hi:
        problems.append(f"deadline_range {p.deadline_range} must satisfy 0 < lo <= hi")
    if p.period_menu and d_hi > min(p.period_menu):
        problems.append(f"deadline_range max {d_hi} exceeds shortest period {min(p.period_menu)}")
    lo, hi = p.payload_range
    if not 1 <= lo <= hi <= MAX_PAYLOAD:
        problems.append(f"payload_range {p.payload_range} not within [1, {MAX_PAYLOAD}]")
    if p.deadline_grid <= 0:
        problems.append("deadline_grid must be > 0")
    if not p.sources:
        problems.append("at least one source endpoint is required")
    return problems


def critical_count(n: int, fraction: float) -> int:
    return math.floor(n * fraction + 0.5)


def generate(params: WorkloadParams, topology: Topology | None = None) -> list[Flow]:
    """Draw ``params.n_frames`` flows; identical output for identical params."""
    topology = topology or default_topology()
    for end in (*params.sources, params.destination):
        topology.node(end)
    routes = {src: topology.shortest_route(src, params.destination) for src in params.sources}

    rng = np.random.default_rng(params.rng_seed)
    n = params.n_frames
    src_idx = rng.integers(len(params.sources), size=n)
    period_idx = rng.integers(len(params.period_menu), size=n)
    payloads = rng.integers(params.payload_range[0], params.payload_range[1] + 1, size=n)
    deadline_u = rng.random(size=n)
    critical = np.zeros(n, dtype=bool)
    critical[rng.permutation(n)[:critical_count(n, params.critical_fraction)]] = True

    grid = params.deadline_grid
    d_lo, d_hi = params.deadline_range
    width = len(str(max(n - 1, 0)))
    flows = []
    for i in range(n):
        src = params.sources[int(src_idx[i])]
        route = routes[src]
        payload = int(payloads[i])
        lo_slot = -(-d_lo // grid)
        if params.deadline_floor:
            lo_slot = max(lo_slot, -(-route_latency(payload, route, topology) // grid))
        hi_slot = d_hi // grid
        lo_slot = min(lo_slot, hi_slot)
        slot = lo_slot + int(deadline_u[i] * (hi_slot - lo_slot + 1))
        flows.append(Flow(
            id=f"f{i:0{width}d}",
            criticality=Criticality.CRITICAL if critical[i] else Criticality.NON_CRITICAL,
            period=int(params.period_menu[int(period_idx[i])]),
            deadline=min(slot, hi_slot) * grid,
            payload=payload,
            src=src,
            dst=params.destination,
            route=route,
        ))
    return flows


def save_flows(flows, path) -> None:
    Path(path).write_text(json.dumps([f.to_dict() for f in flows], indent=1) + "\n")


def load_flows(path, topology: Topology | None = None) -> list[Flow]:
    """Read a flow-set file; malformed records raise ValidationError.

    When ``topology`` is given, every route is also checked against it.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError([f"line {exc.lineno}: {exc.msg}"], str(path)) from exc
    if not isinstance(data, list):
        raise ValidationError(["top level must be a JSON array of flow records"], str(path))
    flows = []
    for index, record in enumerate(data):
        where = f"{path}: record {index}"
        if not isinstance(record, dict):
            raise ValidationError(["record is not an object"], where)
        missing = [k for k in ("id", "criticality", "period", "deadline", "payload", "src", "dst", "route")
                   if k not in record]
        if missing:
            raise ValidationError([f"missing field {k!r}" for k in missing], where)
        try:
            flow = Flow.from_dict(record)
        except ValidationError as exc:
            raise ValidationError(exc.problems, f"{where} (id {record.get('id')!r})") from exc
        except (TypeError, ValueError) as exc:
            raise ValidationError([str(exc)], where) from exc
        if topology is not None:
            problems = check_route(flow.route, topology, flow.src, flow.dst)
            if problems:
                raise ValidationError(problems, where)
        flows.append(flow)
    ids = [f.id for f in flows]
    if len(set(ids)) != len(ids):
        raise ValidationError(["duplicate flow ids"], str(path))
    return flows
