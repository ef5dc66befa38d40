import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relayabc import matrices as mx
from relayabc.adversary import StrategySpec
from relayabc.config import ScenarioConfig, preset
from relayabc.errors import IndexOutOfRange, InconsistentTrace, PhaseTooEarly
from relayabc.protocol import TrimEntry, TrimOutcome
from relayabc.simulation import run_simulation

from conftest import cached_run

INDEX = {0: 0, 1: 1, 2: 2}


def outcome(values, byz=frozenset({3}), b=1):
    entries = sorted(
        (TrimEntry(j, float(v), -1, j not in byz) for j, v in enumerate(values)),
        key=lambda e: (e.value, e.origin),
    )
    n = len(entries)
    return TrimOutcome(b, tuple(entries[:b]), tuple(entries[b : n - b]), tuple(entries[n - b :]))


class TestGRow:
    def test_case1(self):
        g = mx.build_g_row(outcome([1, 2, 3, 100]), INDEX)
        assert g.case == 1
        np.testing.assert_allclose(g.weights, [0, 0.5, 0.5])

    def test_case2(self):
        g = mx.build_g_row(outcome([0, 2, 4, 3]), INDEX)
        assert g.case == 2 and (g.s_star, g.l_star) == (0, 2)
        assert g.gammas == {3: 0.25}
        np.testing.assert_allclose(g.weights, [1 / 8, 1 / 2, 3 / 8])
        # the weights reproduce the realized update
        assert np.dot(g.weights, [0, 2, 4]) == pytest.approx(outcome([0, 2, 4, 3]).value)

    def test_all_equal(self):
        out = outcome([5, 5, 5, 5])
        g = mx.build_g_row(out, INDEX)
        assert g.weights.sum() == pytest.approx(1.0)
        assert np.dot(g.weights, [5, 5, 5]) == out.value == 5.0

    def test_equal_bounds_gamma_one(self):
        # byzantine 2 sandwiched between two honest 2s
        g = mx.build_g_row(outcome([2, 2, 2, 2], byz={1}), {0: 0, 2: 1, 3: 2})
        assert g.case == 2 and all(v == 1.0 for v in g.gammas.values())

    def test_faulty_outside_bounds_is_inconsistent(self):
        out = outcome([0, 2, 4, 3])
        bad = TrimOutcome(1, out.low, (out.survivors[0], TrimEntry(3, 9.0, -1, False)), out.high)
        with pytest.raises(InconsistentTrace):
            mx.build_g_row(bad, INDEX)


def test_d1_rows_equal_g_rows():
    _, trace = cached_run("complete_h4_b1")
    for p in (2, 3, 50):
        M = mx.construct_phase_matrix(trace, p).matrix
        t = p - 1
        for i in range(trace.h):
            g = mx.build_g_row(trace.steps[t][i].outcome, trace.honest_index, i)
            np.testing.assert_array_equal(M[i], g.weights)


def test_uniform_rows_without_byzantine():
    cfg = ScenarioConfig(graph={"preset": "complete", "h": 4, "b": 0}, initial_values=[0, 1, 2, 7], D=1, T=5)
    trace = run_simulation(cfg)
    for p in mx.complete_phases(trace):
        M = mx.construct_phase_matrix(trace, p)
        np.testing.assert_allclose(M.matrix, 0.25)
        assert mx.verify_phase_equation(trace, p, M) < 1e-12


@pytest.fixture(scope="module")
def path3():
    cfg = ScenarioConfig(
        graph={"preset": "bidirectional_path_plus_byz", "h": 3, "b": 1},
        initial_values=[0.0, 1.0, 2.0],
        strategies={3: StrategySpec("constant_extreme", {"value": 100.0})},
        T=60,
    )
    return run_simulation(cfg)


def test_d2_structure(path3):
    assert path3.D == 2
    h = path3.h
    for p in mx.complete_phases(path3):
        M = mx.construct_phase_matrix(path3, p)
        assert M.shape == (6, 6)
        assert mx.verify_phase_equation(path3, p, M) < 1e-12
        assert mx.check_row_stochastic(M, 1e-12, 1e-15)
        diag = mx.check_diagonal_property(M)
        assert diag.ok
        # second-half rows expand through first-half rows
        assert mx.check_row_inheritance(M).ok
        # whenever the own value survived, the bold column carries weight
        for r in np.flatnonzero(diag.applies):
            assert M.matrix[r, h + r % h] > 0


def test_roundtrip_reconstruction(path3):
    _, worst = mx.reconstruct_states(path3)
    assert worst < 1e-9


def test_phase_guards(path3):
    with pytest.raises(PhaseTooEarly):
        mx.construct_phase_matrix(path3, 1)
    with pytest.raises(IndexOutOfRange):
        mx.construct_phase_matrix(path3, 31)
    with pytest.raises(ValueError):
        mx.construct_phase_matrix(path3, 2, mode="guess")


def test_equation_sensitive_to_perturbation():
    _, trace = cached_run("complete_h4_b1")
    M = mx.construct_phase_matrix(trace, 2).matrix.copy()
    assert mx.verify_phase_equation(trace, 2, M) < 1e-9
    M[0, 3] += 0.1
    assert mx.verify_phase_equation(trace, 2, M) > 1e-3


def test_stochastic_trivia():
    assert mx.check_row_stochastic(np.eye(4))
    assert not mx.check_row_stochastic(np.zeros((4, 4)))
    assert not mx.check_row_stochastic(np.array([[1.5, -0.5], [0.0, 1.0]]))


class TestWorkedExamples:
    worked = mx.worked_examples()

    def test_splice(self):
        np.testing.assert_array_equal(mx.matrix_splice(self.worked["splice"], 0, 1, 0, 1), [[0, 1], [3, 4]])
        np.testing.assert_array_equal(mx.matrix_splice(self.worked["splice"], 0, 2, 0, 2), self.worked["splice"])
        with pytest.raises(IndexOutOfRange):
            mx.matrix_splice(self.worked["splice"], 2, 1, 0, 0)
        with pytest.raises(IndexOutOfRange):
            mx.matrix_splice(self.worked["splice"], 0, 3, 0, 0)

    def test_diagonal_example(self):
        check = mx.check_diagonal_property(self.worked["diagonal"], h=3, D=2)
        assert check.ok and check.holds.all()
        bold = [self.worked["diagonal"][r, 3 + r % 3] for r in range(6)]
        np.testing.assert_allclose(bold, [1 / 3, 1 / 3, 1 / 3, 2 / 9, 1 / 3, 2 / 9])

    def test_partial_column_bottom_block(self):
        block = mx.bottom_block(self.worked["partial_column"], 3)
        assert np.all(block[:, 1] > 0)

    def test_full_column(self):
        assert mx.product_nonzero_column([self.worked["full_column"]]) == 4
        assert mx.product_nonzero_column([np.eye(3)]) is None

    def test_examples_stochastic(self):
        for name in ("diagonal", "partial_column", "full_column"):
            assert mx.check_row_stochastic(self.worked[name], 1e-12)


def test_diagonal_exempt_rows_are_non_survivors():
    _, trace = cached_run("complete_h4_b1")
    exempt = 0
    for p in mx.complete_phases(trace):
        M = mx.construct_phase_matrix(trace, p)
        check = mx.check_diagonal_property(M)
        assert check.ok
        exempt += len(check.exempt_rows)
        for r in check.exempt_rows:
            assert not M.self_survived[r]
    # the node holding the minimum is always trimmed, so exemptions do occur
    assert exempt > 0


@pytest.mark.parametrize("name", ["complete_h4_b1", "honest_cycle_h4_b1", "path_h5_b1"])
def test_structural_checks_on_presets(name):
    _, trace = cached_run(name)
    phases = list(mx.complete_phases(trace))[:150]
    for p in phases:
        M = mx.construct_phase_matrix(trace, p)
        assert mx.check_row_inheritance(M).ok
        assert mx.check_row_support(M, trace.b).ok
        assert mx.check_row_stochastic(M, 1e-12, 1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_convexity_of_constructed_matrices(v):
    _, trace = cached_run("complete_h4_b1")
    M = mx.construct_phase_matrix(trace, 3)
    assert mx.check_convexity(M, np.array(v))


def test_distance_mode_agrees_without_relay():
    _, trace = cached_run("honest_cycle_h4_b1")
    # phase 2 reads the repeated initial block, so the two placements differ
    # there yet both satisfy the phase equation
    for mode in ("trace", "distance"):
        M = mx.construct_phase_matrix(trace, 2, mode)
        assert mx.verify_phase_equation(trace, 2, M) < 1e-12
    for p in range(3, 40):
        a = mx.construct_phase_matrix(trace, p, "trace").matrix
        b = mx.construct_phase_matrix(trace, p, "distance").matrix
        np.testing.assert_allclose(a, b, atol=1e-15)


def test_distance_mode_diverges_with_relay():
    cfg = preset("honest_cycle_h4_b1")
    cfg.T = 60
    cfg.strategies = {4: StrategySpec("constant_extreme", {"value": 100.0, "relay": True})}
    trace = run_simulation(cfg)
    errs = [mx.verify_phase_equation(trace, p, mx.construct_phase_matrix(trace, p, "distance"))
            for p in mx.complete_phases(trace)]
    assert max(errs) > 1e-9
    errs = [mx.verify_phase_equation(trace, p, mx.construct_phase_matrix(trace, p))
            for p in mx.complete_phases(trace)]
    assert max(errs) < 1e-9


def test_scrambling_window_size():
    assert mx.scrambling_window(3, 1, 1) == 17
    assert mx.scrambling_window(4, 1, 2) == 2 * 81 * 2 + 1
