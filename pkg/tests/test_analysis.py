import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hom_feedback.analysis import (
    BackgroundModel,
    CorrelationSet,
    FitError,
    GridMismatchError,
    Measured,
    UndefinedVisibilityError,
    analyze_dataset,
    background_correlations,
    cross_bin_matrix,
    fit_gate,
    gate_model_binned,
    mle_signal,
    normalization_factor,
    sliding_histogram,
    snr,
    visibilities,
)
from hom_feedback.event_sim import ExperimentConfig, Scenario, ScenarioKind, run_experiment

NS = 1e-9
EDGES = np.linspace(0, 1e-6, 501)


@pytest.mark.parametrize(
    "truth",
    [
        (2.0, 300.0, 20.0, 0.0, 450 * NS, 500 * NS, 1000 * NS),
        (1.0, 120.0, 8.0, 20 * NS, 470 * NS, 520 * NS, 980 * NS),
    ],
)
def test_gate_fit_noiseless_recovery(truth):
    h = gate_model_binned(EDGES, *truth, power=2)
    fit = fit_gate(h, EDGES, power=2)
    np.testing.assert_allclose(fit.breakpoints, truth[3:], atol=1e-3 * NS)
    np.testing.assert_allclose((fit.a, fit.b, fit.c), truth[:3], rtol=1e-5)


def test_gate_fit_noisy():
    truth = (3.0, 200.0, 10.0, 0.0, 450 * NS, 500 * NS, 1000 * NS)
    h = np.random.default_rng(4).poisson(gate_model_binned(EDGES, *truth, power=2)).astype(float)
    fit = fit_gate(h, EDGES, power=2)
    np.testing.assert_allclose(fit.breakpoints, truth[3:], atol=4 * NS)
    assert fit.b == pytest.approx(200.0, rel=0.1)


def test_gate_fit_sin2_model():
    truth = (1.0, 50.0, 5.0, 10 * NS, 460 * NS, 510 * NS, 990 * NS)
    fit = fit_gate(gate_model_binned(EDGES, *truth), EDGES)
    np.testing.assert_allclose(fit.breakpoints, truth[3:], atol=1e-3 * NS)


def test_gate_fit_errors():
    with pytest.raises(FitError):
        fit_gate(np.ones(50), np.linspace(0, 1e-6, 51))
    with pytest.raises(FitError):
        fit_gate(np.zeros(500), EDGES)


def _model(mc, md, nb=50, dt=2 * NS):
    edges = np.arange(nb + 1) * dt
    m_b = np.zeros((2, nb))
    m_b[0], m_b[1] = mc, md
    return BackgroundModel(edges, m_b, np.zeros((2, nb)))


def test_background_correlation_spikes():
    dt = 2 * NS
    mc, md = np.zeros(50), np.zeros(50)
    mc[10], md[15] = 3e6, 5e6
    bg = background_correlations(_model(mc, md))
    peak = np.argmax(bg.bb)
    assert bg.tau[peak] == pytest.approx(5 * dt)
    assert bg.bb[peak] == pytest.approx(3e6 * 5e6 * dt)
    # triangle of half-width dt: total area m_c m_d dt^2
    assert bg.window_integral(-1e-6, 1e-6) == pytest.approx(3e6 * 5e6 * dt**2)


def test_background_correlation_zero():
    bg = background_correlations(_model(np.zeros(50), np.zeros(50)))
    assert np.all(bg.total == 0)


def test_background_correlation_triangle():
    m = 1e6
    nb, dt = 50, 2 * NS
    W = nb * dt
    bg = background_correlations(_model(np.full(nb, m), np.full(nb, m)))
    np.testing.assert_allclose(bg.bb, m * m * (W - np.abs(bg.tau)), rtol=1e-9, atol=1e-9 * m * m * W)
    # exact integral of the triangle over [0, W/2)
    expect = m * m * (W * W / 2 - W * W / 8)
    assert bg.window_integral(0.0, W / 2) == pytest.approx(expect, rel=1e-12)


def test_background_model_validation():
    with pytest.raises(GridMismatchError):
        BackgroundModel(np.linspace(0, 1, 11), np.zeros((2, 9)), np.zeros((2, 10)))
    with pytest.raises(ValueError):
        BackgroundModel(np.linspace(0, 1, 11), -np.ones((2, 10)), np.zeros((2, 10)))


@given(st.integers(0, 10_000), st.floats(0, 1e4))
def test_mle_signal_properties(n, lb):
    s = mle_signal(n, lb)
    assert s >= 0
    assert s == pytest.approx(max(n - lb, 0.0))
    assert mle_signal(s + lb, lb) == pytest.approx(s)


def test_mle_signal_rejects_negative():
    with pytest.raises(ValueError):
        mle_signal(-1, 0)


def _pathway_ratio(eta):
    """Same-cycle / (+-2 cycle) cross coincidences by enumerating emission outcomes.

    Each cycle emits (prob p) into the short arm or the long arm, the long arm
    surviving with eta and arriving one cycle late.  Photons split 50/50 at
    the beam splitter with no interference (perpendicular polarisation).
    """
    p = 0.37
    outcomes = {"none": 1 - p, "short": p / 2, "long": p / 2 * eta, "lost": p / 2 * (1 - eta)}
    same, apart = 0.0, 0.0
    # cycles k-1 .. k+2; arrivals at k from (k short, k-1 long)
    for states in itertools.product(outcomes, repeat=4):
        w = np.prod([outcomes[s] for s in states])
        arrivals = [0] * 5
        for i, s in enumerate(states):
            if s == "short":
                arrivals[i] += 1
            elif s == "long":
                arrivals[i + 1] += 1
        n_k, n_k2 = arrivals[1], arrivals[3]
        # unordered photon pairs in cycle k, split across detectors with prob 1/2
        same += w * n_k * (n_k - 1) / 2 * 0.5
        # C in k and D in k+2, plus the mirror order
        apart += w * 2 * (n_k * 0.5) * (n_k2 * 0.5)
    return same / apart


@pytest.mark.parametrize("eta", [1.0, 0.7, 0.5, 0.1])
def test_normalization_factor_matches_pathway_enumeration(eta):
    assert normalization_factor(eta) == pytest.approx(_pathway_ratio(eta), rel=1e-12)


def test_normalization_factor_values():
    assert normalization_factor(1.0) == pytest.approx(0.25)
    assert normalization_factor(0.5) == pytest.approx(0.2222222, rel=1e-6)
    with pytest.raises(ValueError):
        normalization_factor(0.0)
    with pytest.raises(ValueError):
        normalization_factor(1.5)


@given(st.floats(1e-6, 1.0))
def test_normalization_factor_bounded(eta):
    assert 0 < normalization_factor(eta) <= 0.25


def test_sliding_histogram_counts():
    h = sliding_histogram(np.array([0.0, 1e-9, 2e-9]), width=50 * NS, step=10 * NS, centers=[0.0])
    assert h.counts[0] == 3
    assert h.values[0] == pytest.approx(3 / (50 * NS))


def test_sliding_histogram_step_equals_width_matches_numpy():
    tau = np.random.default_rng(0).uniform(-400 * NS, 400 * NS, 5000)
    h = sliding_histogram(tau, width=50 * NS, step=50 * NS, span=(-400 * NS, 400 * NS))
    ref, _ = np.histogram(tau, np.linspace(-400 * NS, 400 * NS, 17))
    np.testing.assert_array_equal(h.counts, ref)


def test_sliding_histogram_empty_and_invalid():
    h = sliding_histogram(np.array([]), centers=np.linspace(-100 * NS, 100 * NS, 5))
    assert np.all(h.counts == 0) and np.all(h.values == 0)
    with pytest.raises(ValueError):
        sliding_histogram(np.array([0.0]), width=10 * NS, step=20 * NS)


def test_sliding_histogram_background_subtraction():
    h = sliding_histogram(np.zeros(10), width=50 * NS, centers=[0.0], normalization=5.0,
                          background=lambda lo, hi: np.full(lo.shape, 4.0))
    assert h.values[0] == pytest.approx(6 / (5 * 50 * NS))
    h = sliding_histogram(np.zeros(3), width=50 * NS, centers=[0.0], background=lambda lo, hi: np.full(lo.shape, 7.0))
    assert h.values[0] == 0.0


def test_visibility_examples():
    v = visibilities(n_par=10, n_perp=100, n_0=10, n_pi=90, n_d1c2=5, n_c1d2=95, n_par_cross_bin=1, n_perp_cross_bin=4)
    assert v["V_HOM"].value == pytest.approx(0.9)
    assert v["V_phi"].value == pytest.approx(0.8)
    assert v["V_feed"].value == pytest.approx(-0.9)
    assert v["V_ref"].value == pytest.approx(0.75)
    assert v["V_HOM"].sigma > 0
    with pytest.raises(UndefinedVisibilityError):
        visibilities(n_par=1, n_perp=0)
    with pytest.raises(UndefinedVisibilityError):
        visibilities(n_0=0, n_pi=0)
    with pytest.raises(ValueError):
        visibilities(n_par=1)


def test_visibility_error_propagation():
    v = visibilities(n_0=Measured(0.1, 0.0), n_pi=Measured(0.3, 0.01))
    # d/da (a - b)/(a + b) = 2b/(a + b)^2
    assert v["V_phi"].sigma == pytest.approx(2 * 0.1 / 0.16 * 0.01)


def test_snr_examples():
    assert snr(10.0, 5.0) == 2.0
    assert snr([1, 2, 3], [1, 1]) == 3.0
    with pytest.raises(ZeroDivisionError):
        snr(10.0, 0.0)


def test_cross_bin_matrix_from_counts():
    tau_c = np.array([10, 10, 300, 300, 300]) * NS
    tau_d = np.array([20, 300, 10, 350, 250]) * NS
    corr = CorrelationSet(tau_c, tau_d, 225 * NS, 225 * NS, np.arange(5))
    assert corr.quadrant_counts() == {"C1D1": 1, "C1D2": 1, "C2D1": 1, "C2D2": 2}
    m = cross_bin_matrix(corr, {"C1D1": 0.5, "C1D2": 0.0, "C2D1": 2.0, "C2D2": 0.0}, 10)
    assert m["C1D1"].value == pytest.approx(0.05)
    assert m["C2D1"].value == 0.0
    assert m["C2D2"].value == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# end-to-end on simulated data


@pytest.fixture(scope="module")
def perp_run():
    cfg = ExperimentConfig(rng_seed=21, scenario=Scenario(ScenarioKind.PERPENDICULAR))
    res = run_experiment(cfg, 1_000_000)
    ana = analyze_dataset(res.stream_c, res.stream_d, res.n_cycles, cfg.period_ps, cfg.delay_transmission)
    return res, ana


def test_pipeline_recovers_experiment_count(perp_run):
    res, ana = perp_run
    p = res.ground_truth.pairs()
    true_n = int(np.sum(p["detected_first"] & p["detected_second"]))
    n_exp = ana.n_experiments
    assert abs(n_exp.value - true_n) < 4 * n_exp.sigma


def test_pipeline_gates_align_with_photon_window(perp_run):
    _, ana = perp_run
    for f in ana.fits:
        assert f.p1 == pytest.approx(0.0, abs=5 * NS)
        assert f.p2 == pytest.approx(450 * NS, abs=5 * NS)


def test_pipeline_perpendicular_matrix(perp_run):
    _, ana = perp_run
    total = 0.0
    for lab, m in ana.matrix.items():
        assert abs(m.value - 0.125) < 4 * m.sigma + 0.01, lab
        total += m.value
    assert total <= 0.5 + 4 * np.sqrt(sum(m.sigma**2 for m in ana.matrix.values()))


def test_pipeline_snr_order_of_magnitude(perp_run):
    _, ana = perp_run
    assert 0.5 * 2.02 <= ana.snr() <= 1.5 * 2.02


def test_noiseless_pipeline_closure():
    # no background: corrected counts equal raw counts and the matrix equals the truth
    cfg = ExperimentConfig(rng_seed=5, dark_rate=0.0, repump_light_rate=1e5, scenario=Scenario(ScenarioKind.PARALLEL_PHIPI))
    res = run_experiment(cfg, 400_000)
    ana = analyze_dataset(res.stream_c, res.stream_d, res.n_cycles, cfg.period_ps, cfg.delay_transmission)
    truth = res.ground_truth
    p = truth.pairs()
    both = p["detected_first"] & p["detected_second"]
    cross = both & (p["det_first"] != p["det_second"])
    assert len(ana.correlations) == int(cross.sum())
    assert sum(ana.quadrant_background.values()) == pytest.approx(0.0, abs=1e-9)
