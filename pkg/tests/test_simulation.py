import numpy as np
import pytest

from relayabc.config import ScenarioConfig, load_config, preset
from relayabc.errors import (
    ConfigInvalid,
    DiameterBoundViolated,
    HonestSubgraphDisconnected,
    HorizonTooShort,
    TooManyByzantine,
    TraceCorrupt,
)
from relayabc.graph import honest_subgraph, shortest_distances
from relayabc.harness import validity_violations, window_spread_series
from relayabc.simulation import SimulationTrace, run_simulation

from conftest import ALL_STRATEGIES, cached_run


def test_all_equal_without_byzantine_is_fixed():
    cfg = ScenarioConfig(graph={"preset": "complete", "h": 4, "b": 0}, initial_values=[7.0] * 4, T=20)
    trace = run_simulation(cfg)
    assert np.all(trace.states == 7.0)


def test_byzantine_free_complete_graph_averages_in_one_step():
    cfg = ScenarioConfig(graph={"preset": "complete", "h": 4, "b": 0}, initial_values=[0, 1, 2, 5], D=1, T=3)
    trace = run_simulation(cfg)
    assert trace.states[0].tolist() == [0, 1, 2, 5]
    np.testing.assert_allclose(trace.states[1], 2.0)


@pytest.mark.parametrize("strategy", sorted(ALL_STRATEGIES))
@pytest.mark.parametrize("name", ["complete_h4_b1", "honest_cycle_h4_b1"])
def test_validity_and_windowed_spread(name, strategy):
    _, trace = cached_run(name, strategy)
    assert validity_violations(trace) == 0
    ws = np.array(window_spread_series(trace))
    assert np.all(np.diff(ws[trace.D :]) <= 1e-12)


def test_freshness_matches_distances_without_byzantine():
    cfg = ScenarioConfig(
        graph={"preset": "bidirectional_path_plus_byz", "h": 5, "b": 1},
        initial_values=[0, 1, 2, 3, 4],
        T=30,
    )
    trace = run_simulation(cfg)
    dist = shortest_distances(honest_subgraph(cfg.network()))
    for t in range(2 * trace.D, trace.T):
        for i in range(trace.h):
            view = trace.steps[t][i].view
            for k in range(trace.h):
                if k != i:
                    assert view[trace.honest[k]].marker == t - dist[k, i]


def test_first_phase_is_identity():
    _, trace = cached_run("honest_cycle_h4_b1")
    for t in range(trace.D):
        np.testing.assert_array_equal(trace.states[t], trace.initial)
        assert all(s.outcome is None for s in trace.steps[t])


@pytest.mark.parametrize(
    "overrides, exc",
    [
        ({"graph": {"preset": "complete", "h": 2, "b": 1}, "initial_values": [0, 1]}, TooManyByzantine),
        ({"D": 1}, DiameterBoundViolated),
        ({"T": 2}, HorizonTooShort),
        ({"initial_values": [0, 1]}, ConfigInvalid),
        ({"initial_values": [0, 1, float("nan"), 3]}, ConfigInvalid),
        ({"neighbor_mode": "sideways"}, ConfigInvalid),
        (
            {
                "graph": {"m": 4, "byzantine": [3], "edges": [[0, 1], [1, 0], [2, 3], [3, 2], [0, 3], [3, 0]]},
                "initial_values": [0, 1, 2],
                "strategies": {},
            },
            HonestSubgraphDisconnected,
        ),
    ],
)
def test_config_rejections(overrides, exc):
    cfg = preset("honest_cycle_h4_b1")
    for k, v in overrides.items():
        setattr(cfg, k, v)
    with pytest.raises(exc):
        cfg.validate()


def test_config_invalid_carries_assumption():
    cfg = preset("complete_h4_b1")
    cfg.graph = {"preset": "complete", "h": 2, "b": 1}
    with pytest.raises(TooManyByzantine) as info:
        cfg.validate()
    assert info.value.assumption == "byzantine_fraction"


def test_config_document_roundtrip(tmp_path):
    cfg = preset("complete_h3_b1_scrambling")
    path = tmp_path / "cfg.json"
    import json

    path.write_text(json.dumps(cfg.to_document()))
    again = load_config(path)
    assert again.to_document() == cfg.to_document()
    assert load_config("preset:complete_h4_b1").name == "complete_h4_b1"


def test_out_neighbor_mode_same_on_symmetric_graph():
    a = preset("complete_h4_b1")
    a.T = 30
    b = preset("complete_h4_b1")
    b.T = 30
    b.neighbor_mode = "out"
    np.testing.assert_array_equal(run_simulation(a).states, run_simulation(b).states)


def test_out_neighbor_mode_differs_on_cycle():
    a = preset("honest_cycle_h4_b1")
    a.T = 40
    b = preset("honest_cycle_h4_b1")
    b.T = 40
    b.neighbor_mode = "out"
    ta, tb = run_simulation(a), run_simulation(b)
    assert not np.array_equal(ta.states, tb.states)
    assert validity_violations(tb) == 0


def test_trace_roundtrip(tmp_path):
    cfg = preset("complete_h3_b1_scrambling")
    cfg.T = 25
    trace = run_simulation(cfg)
    path = tmp_path / "trace.jsonl"
    trace.write(path)
    back = SimulationTrace.read(path)
    np.testing.assert_array_equal(back.states, trace.states)
    assert back.steps[10][1].outcome == trace.steps[10][1].outcome
    assert back.signing_log == trace.signing_log
    assert back.byzantine_outboxes == trace.byzantine_outboxes
    path2 = tmp_path / "again.jsonl"
    back.write(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_trace_is_corrupt(tmp_path):
    cfg = preset("complete_h4_b1")
    cfg.T = 10
    path = tmp_path / "trace.jsonl"
    run_simulation(cfg).write(path)
    lines = path.read_text().splitlines()
    (tmp_path / "cut.jsonl").write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    with pytest.raises(TraceCorrupt):
        SimulationTrace.read(tmp_path / "cut.jsonl")
    (tmp_path / "junk.jsonl").write_text(lines[0][:40] + "\n")
    with pytest.raises(TraceCorrupt):
        SimulationTrace.read(tmp_path / "junk.jsonl")
    with pytest.raises(TraceCorrupt):
        SimulationTrace.read(tmp_path / "missing.jsonl")


def test_runs_are_byte_identical(tmp_path):
    cfg = preset("complete_h3_b1_scrambling")
    cfg.T = 40
    run_simulation(cfg).write(tmp_path / "a.jsonl")
    run_simulation(cfg).write(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_bytes_accounting():
    cfg = preset("complete_h4_b1")
    cfg.T = 3
    trace = run_simulation(cfg)
    # t=0: 4 honest nodes send 1 record to 4 neighbours, byzantine sends 1 to 4
    assert trace.bytes_sent[0] == 20 * (24 + 32)
