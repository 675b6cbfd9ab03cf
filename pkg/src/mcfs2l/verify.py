"""Replay verification, run metrics and gate control list emission.

The verifier does not reuse any of the scheduler's conflict logic: it
materializes every window over the hyperperiod and sweeps each link in time
order.
"""
from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import asdict, dataclass, fields

from .model import (
    TT_QUEUE,
    InvalidParameter,
    Schedule,
    Topology,
    TransmissionWindow,
    aggregate_problems,
    hop_timing,
    materialize_windows,
)
from .scheduler import ConstraintViolation, ViolationKind


def replay_verify(schedule: Schedule, topology: Topology) -> list[ConstraintViolation]:
    """Every constraint violation in ``schedule``; empty list means sound."""
    violations: list[ConstraintViolation] = []
    horizon = schedule.horizon

    for frame_id in sorted(schedule.frames):
        frame = schedule.frames[frame_id]
        for problem in aggregate_problems(frame):
            violations.append(ConstraintViolation(ViolationKind.DEADLINE, frame_id, None, None,
                                                  f"malformed aggregate: {problem}"))
        if horizon % frame.period:
            violations.append(ConstraintViolation(ViolationKind.DEADLINE, frame_id, None, None,
                                                  f"period {frame.period} does not divide horizon {horizon}"))
        missing = [lk for lk in frame.route if (frame_id, lk) not in schedule.offsets]
        if missing:
            violations.append(ConstraintViolation(ViolationKind.FORWARDING, frame_id, missing[0], None,
                                                  "no offset on route link"))

    bad = {v.frame for v in violations}
    windows = [w for w in materialize_windows(_only(schedule, bad), topology)]

    # Per instance: hop order, arrival deadline and period containment.
    chains: dict[tuple[str, int], list[TransmissionWindow]] = defaultdict(list)
    for w in windows:
        chains[(w.frame, w.instance)].append(w)
    for (frame_id, k), chain in sorted(chains.items()):
        frame = schedule.frames[frame_id]
        release = k * frame.period
        props = {lk: topology.link(lk).prop_delay for lk in frame.route}
        position = {lk: i for i, lk in enumerate(frame.route)}
        chain.sort(key=lambda w: position[w.link])
        for w in chain:
            if w.start < release or w.end > release + frame.period:
                violations.append(ConstraintViolation(ViolationKind.DEADLINE, frame_id, w.link, k,
                                                      f"window [{w.start}, {w.end}) outside its period"))
        for prev, nxt in zip(chain, chain[1:]):
            if nxt.start < prev.end + props[prev.link]:
                violations.append(ConstraintViolation(ViolationKind.FORWARDING, frame_id, nxt.link, k,
                                                      f"starts {nxt.start} before arrival {prev.end + props[prev.link]}"))
        arrival = chain[-1].end + props[chain[-1].link]
        if arrival - chain[0].start > frame.deadline:
            violations.append(ConstraintViolation(ViolationKind.DEADLINE, frame_id, chain[-1].link, k,
                                                  f"arrives {arrival - chain[0].start} ns after sending, "
                                                  f"deadline {frame.deadline}"))

    # Link sweep: windows sorted by start must never begin before the
    # furthest end seen so far on the same link.
    per_link: dict[str, list[TransmissionWindow]] = defaultdict(list)
    for w in windows:
        per_link[w.link].append(w)
    for link_id in sorted(per_link):
        ordered = sorted(per_link[link_id], key=lambda w: (w.start, w.end, w.frame))
        reach = None
        for w in ordered:
            if reach is not None and w.start < reach.end:
                violations.append(ConstraintViolation(ViolationKind.LINK_CONFLICT, w.frame, link_id, w.instance,
                                                      f"[{w.start}, {w.end}) overlaps {reach.frame}#{reach.instance} "
                                                      f"[{reach.start}, {reach.end})"))
            if reach is None or w.end > reach.end:
                reach = w

    accepted = schedule.accepted_flow_ids()
    clash = sorted(accepted & set(schedule.rejected))
    for fid in clash:
        violations.append(ConstraintViolation(ViolationKind.DEADLINE, fid, None, None,
                                              "flow is both accepted and rejected"))
    return violations


def _only(schedule: Schedule, skip: set[str]) -> Schedule:
    if not skip:
        return schedule
    trimmed = Schedule(schedule.algorithm, schedule.horizon)
    for frame_id, frame in schedule.frames.items():
        if frame_id not in skip:
            trimmed.commit(frame, schedule.frame_offsets(frame))
    return trimmed


@dataclass
class RunMetrics:
    algorithm: str
    n_frames: int
    seed: int
    critical_acceptance: float
    noncritical_acceptance: float
    bandwidth_utilization: float
    execution_time: float
    critical_total: int = 0
    critical_accepted: int = 0
    noncritical_total: int = 0
    noncritical_accepted: int = 0
    scheduled_frames: int = 0


METRIC_COLUMNS = [f.name for f in fields(RunMetrics) if f.name != "execution_time"]


def compute_metrics(schedule: Schedule, flows, topology: Topology, execution_time: float = 0.0, *,
                    seed: int = 0, normalize_per_link: bool = False) -> RunMetrics:
    """Acceptance ratios and bandwidth utilization of one run.

    Utilization is the summed transmission time of every accepted frame over
    every hop and every instance in the hyperperiod, divided by the
    hyperperiod.  It is not normalized by link count unless
    ``normalize_per_link`` is set (then it is divided by the number of links
    any input flow traverses).  With no flows of a class, its acceptance
    ratio is reported as 1.0.
    """
    flows = list(flows)
    accepted = schedule.accepted_flow_ids()
    crit = [f for f in flows if f.is_critical]
    noncrit = [f for f in flows if not f.is_critical]
    crit_ok = sum(1 for f in crit if f.id in accepted)
    noncrit_ok = sum(1 for f in noncrit if f.id in accepted)

    horizon = schedule.horizon
    busy = 0
    for frame in schedule.frames.values():
        instances = horizon // frame.period
        for hop in hop_timing(frame, topology):
            m = len(hop.pattern)
            busy += sum(hop.pattern[k % m] for k in range(instances))
    utilization = busy / horizon
    if normalize_per_link:
        links = {lk for f in flows for lk in f.route}
        utilization /= max(len(links), 1)

    return RunMetrics(
        algorithm=schedule.algorithm,
        n_frames=len(flows),
        seed=seed,
        critical_acceptance=crit_ok / len(crit) if crit else 1.0,
        noncritical_acceptance=noncrit_ok / len(noncrit) if noncrit else 1.0,
        bandwidth_utilization=utilization,
        execution_time=execution_time,
        critical_total=len(crit),
        critical_accepted=crit_ok,
        noncritical_total=len(noncrit),
        noncritical_accepted=noncrit_ok,
        scheduled_frames=len(schedule.frames),
    )


def metrics_row(m: RunMetrics) -> dict:
    row = asdict(m)
    del row["execution_time"]
    for key in ("critical_acceptance", "noncritical_acceptance", "bandwidth_utilization"):
        row[key] = repr(float(row[key]))
    return row


def write_metrics_csv(metrics, stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for m in metrics:
        writer.writerow(metrics_row(m))


class GateState(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class GclEntry:
    port: str
    queue: int
    start: int
    end: int
    state: GateState


def emit_gcl(schedule: Schedule, topology: Topology, cycle: int | None = None) -> list[GclEntry]:
    """Queue-7 gate timeline of every egress port over one cycle.

    One open entry per transmission window, closed entries fill the gaps.
    Back-to-back windows stay separate entries so the windows can be
    recovered exactly.
    """
    cycle = schedule.horizon if cycle is None else cycle
    if cycle <= 0:
        raise InvalidParameter("cycle must be positive")
    by_port: dict[str, list[TransmissionWindow]] = defaultdict(list)
    for w in materialize_windows(schedule, topology, cycle):
        by_port[w.link].append(w)
    entries = []
    for link in sorted(topology.links, key=lambda lk: lk.id):
        t = 0
        for w in sorted(by_port.get(link.id, []), key=lambda w: w.start):
            if w.start < t:
                raise InvalidParameter(f"overlapping windows on {link.id}; verify the schedule first")
            if w.start > t:
                entries.append(GclEntry(link.id, TT_QUEUE, t, w.start, GateState.CLOSED))
            entries.append(GclEntry(link.id, TT_QUEUE, w.start, w.end, GateState.OPEN))
            t = w.end
        if t < cycle:
            entries.append(GclEntry(link.id, TT_QUEUE, t, cycle, GateState.CLOSED))
    return entries


def windows_from_gcl(entries) -> list[tuple[str, int, int]]:
    """(port, start, end) of every open queue-7 interval, sorted."""
    return sorted((e.port, e.start, e.end) for e in entries
                  if e.queue == TT_QUEUE and e.state is GateState.OPEN)


def gcl_to_csv(entries) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["port", "queue", "start_ns", "end_ns", "state"])
    for e in entries:
        writer.writerow([e.port, e.queue, e.start, e.end, e.state.value])
    return out.getvalue()


def gcl_from_csv(text: str) -> list[GclEntry]:
    reader = csv.DictReader(io.StringIO(text))
    return [GclEntry(row["port"], int(row["queue"]), int(row["start_ns"]), int(row["end_ns"]),
                     GateState(row["state"])) for row in reader]
