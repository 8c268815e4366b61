import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hom_feedback.feedback import (
    CircuitState,
    CircuitTiming,
    JKMode,
    LatencyBudget,
    SequencingError,
    circuit_step,
    decide_phase,
    effective_phase_timeline,
    emulate_cycle,
    error_rate,
)
from hom_feedback.photon_model import TemporalEnvelope

T = 450e-9


def mc_error_rate(tt, n, rng):
    """Monte Carlo oracle: t1, t2 from the per-half sin^4 density by rejection."""

    def draw(lo, hi, size):
        out = np.empty(0)
        while out.size < size:
            t = rng.uniform(lo, hi, 2 * size)
            keep = rng.random(t.size) < np.sin(2 * np.pi * t) ** 4
            out = np.concatenate([out, t[keep]])
        return out[:size]

    t1 = draw(0.0, 0.5, n)
    t2 = draw(0.5, 1.0, n)
    k = np.count_nonzero(t2 - t1 < tt)
    return k / n, np.sqrt(max(k, 1)) / n


def test_latency_budget_total():
    b = LatencyBudget()
    assert b.total_ns == 97.0
    assert b.total == pytest.approx(97e-9)
    assert LatencyBudget.fixed(50e-9).total == pytest.approx(50e-9)


def test_decide_phase():
    assert decide_phase("D") == pytest.approx(np.pi)
    assert decide_phase("C") == 0.0
    with pytest.raises(ValueError):
        decide_phase("X")


def test_error_rate_limits():
    assert error_rate(0.0) == 0.0
    assert error_rate(1.0) == pytest.approx(1.0, abs=1e-9)
    assert error_rate(3.0) == pytest.approx(1.0, abs=1e-9)
    assert error_rate(0.5) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        error_rate(-0.1)


@pytest.mark.parametrize("tt", [0.5, 97 / 450, 0.35])
def test_error_rate_matches_monte_carlo(tt):
    rng = np.random.default_rng(7)
    p, s = mc_error_rate(tt, 400_000, rng)
    assert abs(error_rate(tt) - p) < 3 * s


def test_error_rate_independent_of_duration():
    assert error_rate(0.3, TemporalEnvelope(1e-6)) == pytest.approx(error_rate(0.3), rel=1e-9)


@pytest.mark.xfail(strict=True, reason="quadrature gives 0.00136 at 97/450, outside the quoted 0.2% +-20% band")
def test_error_rate_quoted_value():
    assert error_rate(97 / 450) == pytest.approx(0.002, rel=0.2)


@given(st.floats(0, 1.2), st.floats(0, 1.2))
def test_error_rate_monotone(a, b):
    lo, hi = sorted((a, b))
    assert error_rate(lo, n=256) <= error_rate(hi, n=256) + 1e-12


@pytest.mark.parametrize("edge", [0, 1])
@pytest.mark.parametrize("w_det", [0, 1])
@pytest.mark.parametrize("w_phase", [0, 1])
def test_circuit_truth_table(edge, w_det, w_phase):
    state = CircuitState(0, JKMode.TOGGLE if w_det else JKMode.HOLD, w_det, 0, 0, 0.0)
    new, out = circuit_step(state, {"det": edge, "w_det": w_det, "w_phase": w_phase}, 1e-9)
    assert new.jk_q == (edge & w_det)
    assert out["phase"] == (edge & w_det & w_phase)


def test_circuit_holds_after_toggle_and_rearms():
    s = CircuitState()
    s, _ = circuit_step(s, {"det": 0, "w_det": 1, "w_phase": 0}, 0.0)
    s, _ = circuit_step(s, {"det": 1, "w_det": 1, "w_phase": 0}, 1.0)
    assert s.jk_q == 1 and s.jk_mode is JKMode.HOLD
    s, _ = circuit_step(s, {"det": 0, "w_det": 1, "w_phase": 0}, 2.0)
    s, _ = circuit_step(s, {"det": 1, "w_det": 1, "w_phase": 0}, 3.0)
    assert s.jk_q == 1  # second click ignored
    s, _ = circuit_step(s, {"det": 0, "w_det": 0, "w_phase": 1}, 4.0)
    assert s.phase_out == 1
    s, _ = circuit_step(s, {"det": 0, "w_det": 1, "w_phase": 0}, 5.0)
    assert s.jk_q == 0 and s.jk_mode is JKMode.TOGGLE


def test_circuit_sequencing_error():
    s, _ = circuit_step(CircuitState(), {"det": 0, "w_det": 0, "w_phase": 0}, 5.0)
    with pytest.raises(SequencingError):
        circuit_step(s, {"det": 0, "w_det": 0, "w_phase": 0}, 4.0)


def test_emulate_cycle():
    timing = CircuitTiming()
    q_rise, intervals, _ = emulate_cycle([50e-9], timing)
    assert q_rise == pytest.approx(50e-9)
    assert intervals == [(timing.w_phase[0], timing.w_phase[1])]
    assert emulate_cycle([], timing)[1] == []
    assert emulate_cycle([300e-9], timing)[1] == []


@given(st.lists(st.tuples(st.floats(0, 1e-6), st.sampled_from(["det", "w_det", "w_phase"]), st.integers(0, 1)), max_size=40))
def test_phase_implies_q_and_window(events):
    s = CircuitState()
    levels = {"det": 0, "w_det": 0, "w_phase": 0}
    for t, name, level in sorted(events):
        levels[name] = level
        s, out = circuit_step(s, levels, t)
        if out["phase"]:
            assert s.jk_q == 1 and levels["w_phase"] == 1


def test_effective_phase_timeline():
    tl = effective_phase_timeline(("D", 150e-9), 97e-9)
    assert tl(246e-9) == 0.0
    assert tl(247e-9) == pytest.approx(np.pi)
    assert tl(400e-9) == pytest.approx(np.pi)
    assert tl(100e-9) == 0.0
    c = effective_phase_timeline(("C", 100e-9), LatencyBudget())
    assert not c.switched and c(300e-9) == 0.0
    late = effective_phase_timeline(("D", 430e-9), 97e-9)
    assert not late.switched and late(440e-9) == 0.0
    # early click: the switch waits for the late bin
    early = effective_phase_timeline(("D", 20e-9), 97e-9)
    assert early(200e-9) == 0.0 and early(226e-9) == pytest.approx(np.pi)
