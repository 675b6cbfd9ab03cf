import json
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcfs2l.aggregation import route_latency
from mcfs2l.model import NS_PER_MS, NS_PER_US, ValidationError, default_topology, hyperperiod
from mcfs2l.workload import DEFAULT_PERIODS, WorkloadParams, critical_count, generate, load_flows, save_flows

TOPO = default_topology()


def test_same_seed_same_flows():
    assert generate(WorkloadParams(n_frames=50, rng_seed=7)) == generate(WorkloadParams(n_frames=50, rng_seed=7))
    assert generate(WorkloadParams(n_frames=50, rng_seed=7)) != generate(WorkloadParams(n_frames=50, rng_seed=8))


def test_default_menu_hyperperiod():
    assert hyperperiod(DEFAULT_PERIODS) == 200 * NS_PER_MS


@pytest.mark.parametrize("n, fraction, expected", [(500, 0.5, 250), (5, 0.5, 3), (7, 0.3, 2), (0, 0.5, 0), (9, 1.0, 9)])
def test_critical_count_rounds_half_up(n, fraction, expected):
    assert critical_count(n, fraction) == expected
    flows = generate(WorkloadParams(n_frames=n, critical_fraction=fraction, rng_seed=1))
    assert sum(f.is_critical for f in flows) == expected


@given(st.integers(0, 2**32 - 1), st.integers(0, 120), st.booleans())
def test_generated_flows_respect_envelope(seed, n, floor):
    flows = generate(WorkloadParams(n_frames=n, rng_seed=seed, deadline_floor=floor))
    assert len(flows) == n == len({f.id for f in flows})
    for f in flows:
        assert f.src in ("DCU1", "DCU3") and f.dst == "DCU2"
        assert f.route == TOPO.shortest_route(f.src, "DCU2")
        assert f.period in DEFAULT_PERIODS
        assert 200 * NS_PER_US <= f.deadline <= 800 * NS_PER_US <= f.period
        assert f.deadline % NS_PER_US == 0
        assert 100 <= f.payload <= 1500
        if floor:
            assert route_latency(f.payload, f.route, TOPO) <= f.deadline


def test_statistical_sanity():
    flows = generate(WorkloadParams(n_frames=20_000, rng_seed=11))
    counts = np.array([sum(f.period == p for f in flows) for p in DEFAULT_PERIODS])
    expected = len(flows) / len(DEFAULT_PERIODS)
    sigma = (len(flows) * 0.2 * 0.8) ** 0.5
    assert np.all(np.abs(counts - expected) < 3 * sigma)
    assert abs(statistics.fmean(f.payload for f in flows) - 800) < 16
    srcs = sum(f.src == "DCU1" for f in flows)
    assert abs(srcs - len(flows) / 2) < 3 * (len(flows) * 0.25) ** 0.5


def test_invalid_params_list_every_violation():
    with pytest.raises(ValidationError) as err:
        WorkloadParams(n_frames=-1, critical_fraction=1.5, payload_range=(0, 2000),
                       deadline_range=(900_000, 30_000_000))
    assert len(err.value.problems) == 4


def test_params_dict_round_trip():
    p = WorkloadParams(n_frames=12, critical_fraction=0.25, rng_seed=3)
    assert WorkloadParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_save_load_round_trip(tmp_path):
    flows = generate(WorkloadParams(n_frames=100, rng_seed=2))
    path = tmp_path / "flows.json"
    save_flows(flows, path)
    assert load_flows(path, TOPO) == flows


def test_empty_file_gives_empty_list(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("[]")
    assert load_flows(path) == []


def test_deadline_beyond_period_is_diagnosed(tmp_path):
    record = generate(WorkloadParams(n_frames=2, rng_seed=2))[1].to_dict()
    record["deadline"] = record["period"] + 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([generate(WorkloadParams(n_frames=1))[0].to_dict(), record]))
    with pytest.raises(ValidationError) as err:
        load_flows(path)
    assert "record 1" in str(err.value) and "deadline" in str(err.value)


@pytest.mark.parametrize("text, needle", [
    ("{", "line 1"),
    ("{}", "JSON array"),
    ('[{"id": "a"}]', "missing field 'period'"),
    ('[{"id": "a", "criticality": "meh", "period": 1, "deadline": 1, "payload": 1, '
     '"src": "DCU1", "dst": "DCU2", "route": ["DCU1->SW", "SW->DCU2"]}]', "record 0"),
])
def test_malformed_files(tmp_path, text, needle):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ValidationError) as err:
        load_flows(path)
    assert needle in str(err.value)


def test_route_checked_against_topology(tmp_path):
    record = generate(WorkloadParams(n_frames=1))[0].to_dict()
    record["route"] = ["DCU1->SW", "SW->DCU3"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([record]))
    load_flows(path)
    with pytest.raises(ValidationError):
        load_flows(path, TOPO)
