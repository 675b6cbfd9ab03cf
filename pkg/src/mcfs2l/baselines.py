"""No-wait comparison schedulers operating on raw (non-aggregated) flows.

Both place a flow's hops back to back: hop h+1 starts the instant hop h
arrives.  NWTT takes the earliest conflict-free start on the step grid,
R-NWTT a uniformly random one.
"""
from __future__ import annotations

import numpy as np

from .model import AggregateFrame, Schedule, Topology, hop_timing, hyperperiod
from .scheduler import SchedulerConfig, order_frames, rejection_reason
from .timeline import LinkBusy, Occupancy


def no_wait_chain(hops) -> tuple[list[int], int, int]:
    """Relative hop starts, span to the end of the last window, latency."""
    rel = []
    t = 0
    for hop in hops:
        rel.append(t)
        t += hop.duration + hop.prop
    span = rel[-1] + hops[-1].duration
    return rel, span, t


def _first_start(busies: list[LinkBusy], rel, hops, period: int, hi: int, step: int) -> int | None:
    # Plain unit-step scan, kept as the reference for the vectorized search.
    phi = 0
    while phi <= hi:
        if _is_free(busies, rel, hops, period, phi):
            return phi
        phi += step
    return None


def free_start_segments(busies: list[LinkBusy], rel, hops, period: int, hi: int,
                        step: int) -> list[tuple[int, int]]:
    """Conflict-free grid starts in [0, hi] as inclusive (first, last) index pairs.

    A busy run [s, e) on hop h blocks every start in the open interval
    (s - dur_k - rel - kT, e - rel - kT) for each instance k.
    """
    if hi < 0:
        return []
    lows, highs = [], []
    for busy, a, hop in zip(busies, rel, hops):
        starts, ends = busy.arrays()
        if not len(starts):
            continue
        bases = np.arange(0, busy.horizon, period, dtype=np.int64)
        durs = np.resize(np.asarray(hop.pattern, dtype=np.int64), len(bases))
        lo = (starts[None, :] - (durs + a + bases)[:, None]).ravel()
        up = (ends[None, :] - (a + bases)[:, None]).ravel()
        keep = (up > 0) & (lo < hi)
        lows.append(lo[keep])
        highs.append(up[keep])
    lo = np.concatenate(lows) if lows else np.empty(0, dtype=np.int64)
    up = np.concatenate(highs) if highs else np.empty(0, dtype=np.int64)
    if not len(lo):
        return [(0, hi // step)]
    order = np.argsort(lo, kind="stable")
    lo, up = lo[order], up[order]
    # cursor[i]: smallest start not blocked by any block sorted before i.
    reach = np.maximum.accumulate(np.maximum(up, 0))
    cursor = np.concatenate(([0], reach[:-1]))
    # Blocks are open intervals, so both ends of each gap are free.
    gap = lo >= cursor
    firsts = np.concatenate((-(-cursor[gap] // step), [-(-reach[-1] // step)]))
    lasts = np.concatenate((np.minimum(lo[gap], hi) // step, [hi // step]))
    keep = firsts <= lasts
    return list(zip(firsts[keep].tolist(), lasts[keep].tolist()))


def _is_free(busies, rel, hops, period, phi) -> bool:
    return all(busy.is_free(phi + a, hop.pattern, period) for busy, a, hop in zip(busies, rel, hops))


class _BaselineRun:
    def __init__(self, algorithm: str, flows, topology: Topology, cfg: SchedulerConfig,
                 horizon: int | None):
        self.flows = list(flows)
        if horizon is None:
            horizon = hyperperiod(f.period for f in self.flows) if self.flows else 1
        self.schedule = Schedule(algorithm, horizon)
        self.occupancy = Occupancy(horizon)
        self.topology = topology
        self.cfg = cfg

    def frames(self):
        return order_frames(AggregateFrame.from_flows([f]) for f in self.flows)

    def place(self, frame, pick) -> None:
        hops = hop_timing(frame, self.topology)
        rel, span, latency = no_wait_chain(hops)
        if latency > frame.deadline or span > frame.period:
            self.schedule.reject(frame.members, rejection_reason(hops, frame.period, frame.deadline))
            return
        busies = [self.occupancy[hop.link] for hop in hops]
        phi = pick(frame, hops, rel, span, latency, busies)
        if phi is None:
            self.schedule.reject(frame.members, "link_conflict")
            return
        offsets = [phi + a for a in rel]
        self.occupancy.commit(hops, offsets, frame.period)
        self.schedule.commit(frame, offsets)


def schedule_nwtt(flows, topology: Topology, cfg: SchedulerConfig = SchedulerConfig(), *,
                  horizon: int | None = None) -> Schedule:
    run = _BaselineRun("nwtt", flows, topology, cfg, horizon)

    def earliest(frame, hops, rel, span, latency, busies):
        hi = frame.period - span
        if not cfg.fast_forward:
            return _first_start(busies, rel, hops, frame.period, hi, cfg.step)
        segments = free_start_segments(busies, rel, hops, frame.period, hi, cfg.step)
        return segments[0][0] * cfg.step if segments else None

    for frame in run.frames():
        run.place(frame, earliest)
    return run.schedule


def rnwtt_upper_bound(frame, span: int, latency: int, mode: str) -> int:
    """Largest start R-NWTT may draw for ``frame`` under a range mode.

    ``period``: any start whose chain ends inside the period.
    ``slack``: starts in [0, deadline - latency].
    ``deadline``: starts in [0, deadline].
    """
    hi = frame.period - span
    if mode == "slack":
        hi = min(hi, frame.deadline - latency)
    elif mode == "deadline":
        hi = min(hi, frame.deadline)
    return hi


def schedule_rnwtt(flows, topology: Topology, cfg: SchedulerConfig = SchedulerConfig(), *,
                   horizon: int | None = None) -> Schedule:
    """Random no-wait scheduling, deterministic for a given ``cfg.rng_seed``.

    With no attempt budget the start is drawn uniformly from every
    conflict-free grid point; this is the same distribution as testing
    candidates in uniformly random order until one fits.  With
    ``cfg.rnwtt_attempts`` set, that many distinct candidates are drawn and
    tested literally.
    """
    run = _BaselineRun("rnwtt", flows, topology, cfg, horizon)
    rng = np.random.default_rng(cfg.rng_seed)
    step = cfg.step

    def random_start(frame, hops, rel, span, latency, busies):
        hi = rnwtt_upper_bound(frame, span, latency, cfg.rnwtt_range)
        if hi < 0:
            return None
        if cfg.rnwtt_attempts is None:
            segments = free_start_segments(busies, rel, hops, frame.period, hi, step)
            sizes = [last - first + 1 for first, last in segments]
            total = sum(sizes)
            if total == 0:
                return None
            pick = int(rng.integers(total))
            for (first, _), size in zip(segments, sizes):
                if pick < size:
                    return (first + pick) * step
                pick -= size
        grid = hi // step + 1
        tries = rng.choice(grid, size=min(grid, cfg.rnwtt_attempts), replace=False)
        for index in tries.tolist():
            phi = index * step
            if _is_free(busies, rel, hops, frame.period, phi):
                return phi
        return None

    for frame in run.frames():
        run.place(frame, random_start)
    return run.schedule
