from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import flow
from mcfs2l.baselines import free_start_segments, no_wait_chain, schedule_nwtt, schedule_rnwtt
from mcfs2l.model import AggregateFrame, Criticality, Flow, Schedule, default_topology, hop_timing
from mcfs2l.scheduler import SchedulerConfig, occupancy_from
from mcfs2l.verify import replay_verify
from mcfs2l.workload import WorkloadParams, generate
from oracles import lcm_all, no_wait_exhaustive
from strategies import tiny_instances

TOPO = default_topology()
FULL = 123_360


def flows_of(frames):
    # Baselines schedule raw flows; use each tiny frame's first member.
    return [frame.members[0] for frame in frames]


def test_no_wait_chain():
    hops = hop_timing(AggregateFrame.from_flows([flow("a", payload=1500)]), default_topology(prop_delay=500))
    rel, span, latency = no_wait_chain(hops)
    assert rel == [0, FULL + 500]
    assert span == 2 * FULL + 500
    assert latency == 2 * FULL + 1000


def test_nwtt_places_second_flow_after_first():
    flows = [flow("a", payload=1500), flow("b", payload=1500, src="DCU3")]
    schedule = schedule_nwtt(flows, TOPO)
    assert schedule.frame_offsets(schedule.frames["a"]) == [0, FULL]
    # b must clear a's SW->DCU2 window with its own no-wait chain.
    assert schedule.frame_offsets(schedule.frames["b"]) == [124_000, 124_000 + FULL]


def test_nwtt_rejects_by_deadline_before_search():
    schedule = schedule_nwtt([flow("a", payload=1500, deadline=240_000)], TOPO)
    assert schedule.rejected == {"a": "deadline"}


@settings(max_examples=80)
@given(tiny_instances())
def test_nwtt_is_earliest_feasible_no_wait_start(instance):
    topology, frames = instance
    flows = flows_of(frames)
    horizon = lcm_all(f.period for f in flows)
    fast = schedule_nwtt(flows, topology, SchedulerConfig(), horizon=horizon)
    slow = schedule_nwtt(flows, topology, SchedulerConfig(fast_forward=False), horizon=horizon)
    assert fast.to_dict() == slow.to_dict()
    committed = []
    order = sorted(flows, key=lambda f: (f.deadline, not f.is_critical, f.id))
    for f in order:
        frame = AggregateFrame.from_flows([f])
        starts = no_wait_exhaustive(frame, committed, topology, 1000)
        if starts:
            assert fast.frame_offsets(fast.frames[f.id])[0] == starts[0]
            committed.append((frame, fast.frame_offsets(fast.frames[f.id])))
        else:
            assert f.id in fast.rejected
    assert replay_verify(fast, topology) == []


@settings(max_examples=80)
@given(tiny_instances(), st.randoms(use_true_random=False))
def test_free_segments_list_every_conflict_free_start(instance, rnd):
    topology, frames = instance
    flows = flows_of(frames)
    horizon = lcm_all(f.period for f in flows)
    *placed, probe = flows
    committed = []
    schedule = Schedule("t", horizon)
    for f in placed:
        frame = AggregateFrame.from_flows([f])
        starts = no_wait_exhaustive(frame, committed, topology, 1000)
        if starts:
            rel, _, _ = no_wait_chain(hop_timing(frame, topology))
            phi = rnd.choice(starts)
            schedule.commit(frame, [phi + a for a in rel])
            committed.append((frame, [phi + a for a in rel]))
    frame = AggregateFrame.from_flows([probe])
    hops = hop_timing(frame, topology)
    rel, span, latency = no_wait_chain(hops)
    occupancy = occupancy_from(schedule, topology, horizon)
    busies = [occupancy[h.link] for h in hops]
    hi = frame.period - span
    got = [i * 1000 for first, last in free_start_segments(busies, rel, hops, frame.period, hi, 1000)
           for i in range(first, last + 1)]
    if latency <= frame.deadline:
        assert got == no_wait_exhaustive(frame, committed, topology, 1000)


def test_rnwtt_deterministic_per_seed_and_seed_sensitive():
    flows = generate(WorkloadParams(n_frames=60, rng_seed=4))
    a = schedule_rnwtt(flows, TOPO, SchedulerConfig(rng_seed=1))
    b = schedule_rnwtt(flows, TOPO, SchedulerConfig(rng_seed=1))
    c = schedule_rnwtt(flows, TOPO, SchedulerConfig(rng_seed=2))
    assert a.to_dict() == b.to_dict()
    assert a.offsets != c.offsets
    assert replay_verify(a, TOPO) == replay_verify(c, TOPO) == []


def test_rnwtt_draws_uniformly_over_free_starts():
    # An idle network: every start in [0, period - span] on the grid is free.
    f = flow("a", payload=1500, period=300_000, deadline=300_000)
    hits = Counter()
    for seed in range(4000):
        schedule = schedule_rnwtt([f], TOPO, SchedulerConfig(rng_seed=seed))
        hits[schedule.offsets[("a", "DCU1->SW")]] += 1
    span = 2 * FULL
    assert set(hits) <= set(range(0, 300_000 - span + 1, 1000))
    assert len(hits) == (300_000 - span) // 1000 + 1
    # 54 equally likely starts, about 74 draws each.
    assert max(hits.values()) < 130 and min(hits.values()) > 35


@pytest.mark.parametrize("mode, top", [("period", 300_000 - 2 * FULL), ("slack", 280_000 - 2 * FULL),
                                       ("deadline", 300_000 - 2 * FULL)])
def test_rnwtt_range_modes(mode, top):
    f = flow("a", payload=1500, period=300_000, deadline=280_000)
    seen = {schedule_rnwtt([f], TOPO, SchedulerConfig(rng_seed=s, rnwtt_range=mode)).offsets[("a", "DCU1->SW")]
            for s in range(400)}
    assert max(seen) <= top
    assert max(seen) >= top - 3000


def test_rnwtt_limited_attempts_still_sound():
    flows = generate(WorkloadParams(n_frames=150, rng_seed=9))
    cfg = SchedulerConfig(rng_seed=3, rnwtt_attempts=5)
    schedule = schedule_rnwtt(flows, TOPO, cfg)
    assert replay_verify(schedule, TOPO) == []
    assert schedule.accepted_flow_ids() | set(schedule.rejected) == {f.id for f in flows}


@st.composite
def disjoint_flow_sets(draw):
    # Each flow gets its own (src, dst) pair, so no two flows share a link
    # and feasibility cannot depend on placement order.
    pairs = [("DCU1", "DCU2"), ("DCU3", "DCU1"), ("DCU2", "DCU3")]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=3, unique=True))
    flows = []
    for i, (src, dst) in enumerate(chosen):
        period = draw(st.sampled_from([20_000, 25_000, 50_000]))
        flows.append(Flow(f"d{i}", Criticality.CRITICAL, period, draw(st.integers(5, period // 1000)) * 1000,
                          draw(st.integers(1, 100)), src, dst, TOPO.shortest_route(src, dst)))
    return flows


@given(disjoint_flow_sets(), st.integers(0, 1000))
def test_rnwtt_matches_nwtt_acceptance_when_order_cannot_matter(flows, seed):
    cfg = SchedulerConfig(rng_seed=seed)
    assert schedule_rnwtt(flows, TOPO, cfg).accepted_flow_ids() == schedule_nwtt(flows, TOPO, cfg).accepted_flow_ids()
