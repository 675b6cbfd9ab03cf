"""Offset search and dynamic reassembly scheduling.

Frames are scheduled one at a time in deadline order.  For a frame, the send
offset on the first link is searched upward on the step grid; every later hop
takes the earliest free grid slot after the previous hop finishes (waiting in
the switch is allowed).  The frame is feasible when the last hop arrives
within ``deadline`` of the first hop's start and every window stays inside
its period.

When an aggregate cannot be placed, its non-critical members are pulled out
one at a time (largest payload first) and the residual is retried.  Pulled
members are re-aggregated and scheduled after everything else.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .aggregation import aggregate_all
from .model import (
    AggregateFrame,
    Flow,
    InvalidParameter,
    Schedule,
    Topology,
    hop_timing,
    hyperperiod,
)
from .timeline import LinkBusy, Occupancy, ceil_to_grid


class ViolationKind(str, enum.Enum):
    DEADLINE = "deadline"
    FORWARDING = "forwarding"
    LINK_CONFLICT = "link_conflict"


@dataclass(frozen=True)
class ConstraintViolation:
    kind: ViolationKind
    frame: str
    link: str | None = None
    instance: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class SchedulerConfig:
    step: int = 1_000
    fast_forward: bool = True
    rng_seed: int = 0
    equal_periods_only: bool = False
    uniform_payload: bool = False
    # R-NWTT only: None tries the whole grid; "period", "slack" or "deadline"
    # select the start-time range (see baselines.schedule_rnwtt).
    rnwtt_attempts: int | None = None
    rnwtt_range: str = "period"
    # A critical-only residual that still fails is retried member by member
    # instead of being rejected whole.
    split_critical_residuals: bool = True

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidParameter(f"step must be > 0, got {self.step}")
        if self.rnwtt_range not in ("period", "slack", "deadline"):
            raise InvalidParameter(f"unknown rnwtt_range {self.rnwtt_range!r}")
        if self.rnwtt_attempts is not None and self.rnwtt_attempts <= 0:
            raise InvalidParameter("rnwtt_attempts must be positive")


def order_frames(frames):
    """Smaller deadline first; critical-carrying frames win ties, then id."""
    return sorted(frames, key=lambda f: (f.deadline, not f.contains_critical, f.id))


def _periodic_overlap(o1: int, c1: int, t1: int, o2: int, c2: int, t2: int) -> bool:
    # Instance starts differ by multiples of gcd(t1, t2), so the two periodic
    # windows collide iff some shift of the offset gap lands in (-c1, c2).
    g = math.gcd(t1, t2)
    u = (o1 - o2 + c1) % g
    return 0 < u < c1 + c2 or u + g < c1 + c2


def _sub_windows(offset: int, period: int, pattern) -> list[tuple[int, int, int]]:
    # A frame whose instances differ in size is the union of len(pattern)
    # uniform frames, each repeating every len(pattern) periods.
    m = len(pattern)
    return [(offset + j * period, pattern[j], m * period) for j in range(m)]


def check_constraints(offsets, frame: AggregateFrame, committed: Schedule,
                      topology: Topology) -> ConstraintViolation | None:
    """Check one candidate placement against the committed schedule.

    Returns None when the placement is valid, else the first violation
    found, testing deadline, then forwarding, then link conflicts.
    """
    hops = hop_timing(frame, topology)
    if len(offsets) != len(hops):
        raise InvalidParameter(f"need {len(hops)} offsets for frame {frame.id}, got {len(offsets)}")

    last = hops[-1]
    latency = offsets[-1] + last.duration + last.prop - offsets[0]
    if latency > frame.deadline:
        return ConstraintViolation(ViolationKind.DEADLINE, frame.id, last.link, None,
                                   f"latency {latency} > deadline {frame.deadline}")
    for hop, offset in zip(hops, offsets):
        if offset < 0 or offset + hop.duration > frame.period:
            return ConstraintViolation(ViolationKind.DEADLINE, frame.id, hop.link, None,
                                       f"window [{offset}, {offset + hop.duration}) leaves the period")

    for h in range(len(hops) - 1):
        hop = hops[h]
        if offsets[h + 1] < offsets[h] + hop.duration + hop.prop:
            return ConstraintViolation(ViolationKind.FORWARDING, frame.id, hops[h + 1].link, None,
                                       f"sent at {offsets[h + 1]} before arrival at "
                                       f"{offsets[h] + hop.duration + hop.prop}")

    for hop, offset in zip(hops, offsets):
        mine = _sub_windows(offset, frame.period, hop.pattern)
        for other_id in sorted(committed.frames):
            other = committed.frames[other_id]
            if other_id == frame.id or hop.link not in other.route:
                continue
            other_hop = next(oh for oh in hop_timing(other, topology) if oh.link == hop.link)
            theirs = _sub_windows(committed.offsets[(other_id, hop.link)], other.period, other_hop.pattern)
            for o1, c1, t1 in mine:
                if any(_periodic_overlap(o1, c1, t1, o2, c2, t2) for o2, c2, t2 in theirs):
                    return ConstraintViolation(ViolationKind.LINK_CONFLICT, frame.id, hop.link, None,
                                               f"collides with {other_id}")
    return None


def _earliest_free(busy: LinkBusy, x: int, pattern, period: int, limit: int,
                   step: int, fast_forward: bool) -> int | None:
    origin = x
    while x <= limit:
        end = busy.periodic_block(x, pattern, period)
        if end is None:
            return x
        x = ceil_to_grid(end, step, origin) if fast_forward else x + step
    return None


def search_offsets(hops, period: int, deadline: int, occupancy: Occupancy,
                   step: int, fast_forward: bool = True) -> list[int] | None:
    """Earliest start whose greedy hop chain fits; None if none does.

    ``hops`` is the output of :func:`hop_timing`.  The first hop's offset
    lies on the ``step`` grid.  Each later hop starts the moment the previous
    one arrives, or waits a whole number of steps past that.  With
    ``fast_forward`` the search jumps past whole busy runs instead of
    stepping; both modes return the same offsets.
    """
    n = len(hops)
    durations = [hop.duration for hop in hops]
    props = [hop.prop for hop in hops]
    busies = [occupancy[hop.link] for hop in hops]

    # tail[h]: shortest time from the start of hop h to arrival at the sink.
    # span[h]: shortest time from the start of hop h to the end of the last window.
    tail = [0] * (n + 1)
    span = [0] * n
    for h in reversed(range(n)):
        tail[h] = tail[h + 1] + durations[h] + props[h]
        span[h] = durations[h] + (props[h] + span[h + 1] if h + 1 < n else 0)
    if tail[0] > deadline:
        return None
    limits = [period - span[h] for h in range(n)]

    start = 0
    while start <= limits[0]:
        offsets = []
        lower = start
        retry_from = None
        for h in range(n):
            x = _earliest_free(busies[h], lower, hops[h].pattern, period, limits[h], step, fast_forward)
            if x is None:
                return None
            if h == 0:
                start = x
            elif x + tail[h] - start > deadline:
                retry_from = x + tail[h] - deadline
                break
            offsets.append(x)
            lower = x + durations[h] + props[h]
        if retry_from is None:
            return offsets
        if fast_forward:
            # Hop h only ever starts on one fixed shifted grid, so its
            # earliest slot never moves left as the start moves right.
            start = max(start + step, ceil_to_grid(retry_from, step))
        else:
            start += step
    return None


def occupancy_from(schedule: Schedule, topology: Topology, horizon: int) -> Occupancy:
    occupancy = Occupancy(horizon)
    for frame_id in sorted(schedule.frames):
        frame = schedule.frames[frame_id]
        occupancy.commit(hop_timing(frame, topology), schedule.frame_offsets(frame), frame.period)
    return occupancy


def find_offsets(frame: AggregateFrame, committed: Schedule, topology: Topology,
                 cfg: SchedulerConfig = SchedulerConfig()) -> list[int] | None:
    """Per-link offsets for ``frame`` against ``committed``, or None."""
    periods = [f.period for f in committed.frames.values()] + [frame.period]
    horizon = hyperperiod(periods)
    occupancy = occupancy_from(committed, topology, horizon)
    return search_offsets(hop_timing(frame, topology), frame.period, frame.deadline,
                          occupancy, cfg.step, cfg.fast_forward)


def rejection_reason(hops, period: int, deadline: int) -> str:
    """Why a frame that failed the offset search was rejected."""
    latency = sum(hop.duration + hop.prop for hop in hops)
    span = latency - hops[-1].prop
    if latency > deadline or span > period:
        return ViolationKind.DEADLINE.value
    return ViolationKind.LINK_CONFLICT.value


def disaggregate_step(frame: AggregateFrame) -> tuple[AggregateFrame | None, Flow]:
    """Pull the heaviest non-critical member out of ``frame``."""
    candidates = frame.non_critical_members
    if not candidates:
        raise InvalidParameter(f"frame {frame.id} has no non-critical member to extract")
    extracted = min(candidates, key=lambda f: (-f.payload, f.id))
    remaining = [f for f in frame.members if f.id != extracted.id]
    reduced = AggregateFrame.from_flows(remaining, uniform_payload=frame.uniform_payload) if remaining else None
    return reduced, extracted


class _Run:
    """Mutable state of one scheduling run."""

    def __init__(self, algorithm: str, horizon: int, topology: Topology, cfg: SchedulerConfig):
        self.schedule = Schedule(algorithm, horizon)
        self.occupancy = Occupancy(horizon)
        self.topology = topology
        self.cfg = cfg

    def try_commit(self, frame: AggregateFrame) -> bool:
        hops = hop_timing(frame, self.topology)
        offsets = search_offsets(hops, frame.period, frame.deadline, self.occupancy,
                                 self.cfg.step, self.cfg.fast_forward)
        if offsets is None:
            return False
        self.occupancy.commit(hops, offsets, frame.period)
        self.schedule.commit(frame, offsets)
        return True

    def reject(self, frame: AggregateFrame) -> None:
        hops = hop_timing(frame, self.topology)
        self.schedule.reject(frame.members, rejection_reason(hops, frame.period, frame.deadline))

    def retry_singletons(self, frame: AggregateFrame) -> None:
        for flow in sorted(frame.members, key=lambda f: (f.deadline, f.id)):
            single = AggregateFrame.from_flows([flow], uniform_payload=self.cfg.uniform_payload)
            if self.try_commit(single):
                self.schedule.audit.append({"event": "rescheduled", "frame": single.id})
            else:
                self.reject(single)


def schedule_mcfs2l(frames, topology: Topology, cfg: SchedulerConfig = SchedulerConfig(), *,
                    oversized=(), horizon: int | None = None) -> Schedule:
    """Schedule aggregated frames with dynamic reassembly.

    ``oversized`` flows (rejected by aggregation) are recorded as rejected.
    ``horizon`` defaults to the hyperperiod of every member flow.
    """
    frames = list(frames)
    periods = [f.period for frame in frames for f in frame.members] + [f.period for f in oversized]
    if horizon is None:
        horizon = hyperperiod(periods) if periods else 1
    run = _Run("mcfs2l", horizon, topology, cfg)
    run.schedule.reject(oversized, "oversize")
    audit = run.schedule.audit

    extracted: list[Flow] = []
    for frame in order_frames(frames):
        current = frame
        while current is not None:
            if run.try_commit(current):
                break
            if not current.non_critical_members:
                if cfg.split_critical_residuals and len(current.members) > 1:
                    audit.append({"event": "split", "frame": current.id})
                    run.retry_singletons(current)
                else:
                    run.reject(current)
                    audit.append({"event": "rejected", "frame": current.id})
                break
            current, flow = disaggregate_step(current)
            extracted.append(flow)
            audit.append({"event": "extracted", "frame": frame.id, "flow": flow.id,
                          "residual": current.id if current is not None else None})

    if extracted:
        second = aggregate_all(extracted, equal_periods_only=cfg.equal_periods_only,
                               uniform_payload=cfg.uniform_payload, topology=topology)
        run.schedule.reject(second.oversized, "oversize")
        for frame in order_frames(second.frames):
            if run.try_commit(frame):
                audit.append({"event": "rescheduled", "frame": frame.id})
                continue
            if len(frame.members) == 1:
                run.reject(frame)
                continue
            audit.append({"event": "split", "frame": frame.id})
            run.retry_singletons(frame)
    return run.schedule


def run_mcfs2l(flows, topology: Topology, cfg: SchedulerConfig = SchedulerConfig()) -> Schedule:
    """Aggregate ``flows`` and schedule the result."""
    flows = list(flows)
    result = aggregate_all(flows, equal_periods_only=cfg.equal_periods_only,
                           uniform_payload=cfg.uniform_payload, topology=topology)
    horizon = hyperperiod(f.period for f in flows) if flows else 1
    return schedule_mcfs2l(result.frames, topology, cfg, oversized=result.oversized, horizon=horizon)
