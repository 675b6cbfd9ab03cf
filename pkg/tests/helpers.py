"""Small builders shared by the unit tests."""
from mcfs2l.model import NS_PER_US, Criticality, Flow, Link, Node, NodeKind, Topology

ROUTE_1 = ("DCU1->SW", "SW->DCU2")
ROUTE_3 = ("DCU3->SW", "SW->DCU2")


def flow(fid, payload=100, period=20_000_000, deadline=800_000, critical=True, src="DCU1"):
    route = ROUTE_1 if src == "DCU1" else ROUTE_3
    return Flow(fid, Criticality.CRITICAL if critical else Criticality.NON_CRITICAL,
                period, deadline, payload, src, "DCU2", route)


def line_topology(hops=3, prop=0, rate=100_000_000):
    """A -> S1 -> ... -> B chain with ``hops`` links."""
    names = ["A"] + [f"S{i}" for i in range(1, hops)] + ["B"]
    kinds = [NodeKind.ENDPOINT] + [NodeKind.SWITCH] * (hops - 1) + [NodeKind.ENDPOINT]
    nodes = tuple(Node(n, k) for n, k in zip(names, kinds))
    links = tuple(Link(f"{a}->{b}", a, b, rate, prop) for a, b in zip(names, names[1:]))
    return Topology(nodes, links)


def us(x):
    return x * NS_PER_US


def compare_with_exhaustive(topology, frames, step=1_000):
    """Place ``frames`` one by one, checking find_offsets against the oracles.

    Returns a list of mismatch descriptions (empty when everything agrees).
    """
    from oracles import exhaustive_offsets, lcm_all, placement_ok
    from mcfs2l.model import Schedule
    from mcfs2l.scheduler import SchedulerConfig, check_constraints, find_offsets

    fast = SchedulerConfig(step=step)
    unit = SchedulerConfig(step=step, fast_forward=False)
    horizon = lcm_all(f.period for f in frames)
    schedule = Schedule("probe", horizon)
    committed = []
    problems = []
    for frame in frames:
        got = find_offsets(frame, schedule, topology, fast)
        slow = find_offsets(frame, schedule, topology, unit)
        want = exhaustive_offsets(frame, committed, topology, step)
        if got != slow:
            problems.append(f"{frame.id}: fast-forward {got} != unit-step {slow}")
        if (got is None) != (want is None):
            problems.append(f"{frame.id}: search {got} but exhaustive oracle {want}")
        elif got != want:
            problems.append(f"{frame.id}: search {got} is not the earliest feasible {want}")
        if got is not None:
            if check_constraints(got, frame, schedule, topology) is not None:
                problems.append(f"{frame.id}: check_constraints rejects {got}")
            if not placement_ok(frame, got, committed, topology, lcm_all([frame.period] + [o.period for o, _ in committed])):
                problems.append(f"{frame.id}: oracle rejects {got}")
            schedule.commit(frame, got)
            committed.append((frame, got))
    return problems
