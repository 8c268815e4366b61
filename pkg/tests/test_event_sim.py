import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ideal_config
from hom_feedback.event_sim import (
    BLOCK_CYCLES,
    ConfigError,
    ExperimentConfig,
    Scenario,
    ScenarioKind,
    run_experiment,
    sample_pair_event,
    sample_pair_events,
    sample_pair_events_rejection,
)
from hom_feedback.feedback import error_rate
from hom_feedback.stream_io import ParseError, read_streams, write_streams

T = 450e-9


@pytest.mark.parametrize(
    "kw",
    [
        dict(photon_window=400e-9),
        dict(delay_transmission=0.0),
        dict(emission_probability=1.5),
        dict(detector_efficiency=(0.5, 0.5, 0.5)),
        dict(dark_rate=-1.0),
        dict(tdc_resolution=0.0),
        dict(feedback_latency=-1e-9),
        dict(repetition_period=1.0000005e-6, repump_window=550.0005e-9),
    ],
)
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_invalid_cycle_count():
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(), 0)


def test_unknown_scenario_panel():
    with pytest.raises(ValueError):
        ScenarioKind.from_panel("e")


def test_determinism_and_seed_dependence():
    cfg = ExperimentConfig(rng_seed=3)
    a = run_experiment(cfg, 50_000)
    b = run_experiment(cfg, 50_000)
    np.testing.assert_array_equal(a.stream_c.timestamps_ps, b.stream_c.timestamps_ps)
    np.testing.assert_array_equal(a.stream_d.timestamps_ps, b.stream_d.timestamps_ps)
    c = run_experiment(ExperimentConfig(rng_seed=4), 50_000)
    assert not np.array_equal(a.stream_c.timestamps_ps, c.stream_c.timestamps_ps)


def test_prefix_stable_across_block_boundary():
    cfg = ExperimentConfig(rng_seed=9)
    short = run_experiment(cfg, BLOCK_CYCLES)
    long = run_experiment(cfg, BLOCK_CYCLES + 1000)
    for s, l in zip(short.streams, long.streams):
        np.testing.assert_array_equal(s.timestamps_ps, l.timestamps_ps[l.cycle_index < BLOCK_CYCLES])


def test_timestamps_quantised_sorted_and_in_cycle():
    res = run_experiment(ExperimentConfig(rng_seed=1), 100_000)
    for s in res.streams:
        assert s.is_sorted()
        assert np.all(s.timestamps_ps % 81 == 0)
        local = s.in_cycle_times(res.config.period_ps)
        assert np.all((local >= -81e-12) & (local < 1e-6))


def test_dark_count_rate():
    cfg = ExperimentConfig(emission_probability=0.0, dark_rate=500.0, repump_light_rate=0.0, rng_seed=2)
    n = 2_000_000
    res = run_experiment(cfg, n)
    expect = 500.0 * n * 1e-6
    for s in res.streams:
        assert abs(len(s) - expect) < 3 * np.sqrt(expect)


def test_stray_light_confined_to_repump_window():
    cfg = ExperimentConfig(emission_probability=0.0, dark_rate=0.0, repump_light_rate=1e5, rng_seed=5)
    res = run_experiment(cfg, 100_000)
    for s in res.streams:
        local = s.in_cycle_times(res.config.period_ps)
        assert local.min() >= 500e-9 - 81e-12
        expect = 1e5 * 0.5e-6 * 100_000
        assert abs(len(s) - expect) < 4 * np.sqrt(expect)


def test_pair_rate():
    cfg = ideal_config(ScenarioKind.PERPENDICULAR, delay_transmission=0.7)
    n = 400_000
    gt = run_experiment(cfg, n).ground_truth
    expect = 0.25 * 0.7 * n
    assert abs(gt.is_pair.sum() - expect) < 4 * np.sqrt(expect)


def test_bosonic_pairs_never_split():
    res = run_experiment(ideal_config(ScenarioKind.PARALLEL_PHI0), 200_000)
    p = res.ground_truth.pairs()
    assert p["cycle"].size > 40_000
    assert np.all(p["det_first"] == p["det_second"])
    c_cycles = set(res.stream_c.cycle_index.tolist())
    d_cycles = set(res.stream_d.cycle_index.tolist())
    assert not (set(p["cycle"].tolist()) & c_cycles & d_cycles)


def test_pinned_pair_events(rng):
    times = np.array([[100e-9, 300e-9]])
    pi = Scenario(ScenarioKind.PARALLEL_PHIPI)
    assert sample_pair_event(pi, rng=rng, times=times, first_detector=0) == (("C1", 100e-9), ("D2", 300e-9))
    zero = Scenario(ScenarioKind.PARALLEL_PHI0)
    assert sample_pair_event(zero, rng=rng, times=times, first_detector=1)[1][0] == "D2"
    fb = Scenario(ScenarioKind.FEEDBACK)
    assert sample_pair_event(fb, 97e-9, rng=rng, times=times, first_detector=1)[1][0] == "C2"
    # switch at 297 ns arrives after the second click: still bosonic
    late = np.array([[200e-9, 260e-9]])
    assert sample_pair_event(fb, 97e-9, rng=rng, times=late, first_detector=1)[1][0] == "D2"
    # a C click leaves the phase at zero
    assert sample_pair_event(fb, 97e-9, rng=rng, times=times, first_detector=0)[1][0] == "C2"


def test_dark_trigger_switches_phase(rng):
    fb = Scenario(ScenarioKind.FEEDBACK)
    ev = sample_pair_events(fb, 1, rng, times=[[300e-9, 400e-9]], first_detector=1, dark_trigger=[10e-9])
    # both clicks after the switch see the same phase
    assert ev.det_second[0] == 1
    ev = sample_pair_events(fb, 1, rng, times=[[50e-9, 400e-9]], first_detector=0, dark_trigger=[10e-9])
    assert ev.switch_time[0] == pytest.approx(107e-9)
    assert ev.det_second[0] == 1


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_factorised_and_rejection_samplers_agree(kind):
    sc = Scenario(kind)
    n = 40_000
    a = sample_pair_events(sc, n, np.random.default_rng(1))
    b = sample_pair_events_rejection(sc, n, np.random.default_rng(2))
    mid = T / 2

    def stats(ev):
        cross = ev.det_first != ev.det_second
        cross_bin = (ev.t_first < mid) & (ev.t_second >= mid)
        return np.array([cross.mean(), (cross & cross_bin).mean(), (cross & ~cross_bin).mean()])

    sa, sb = stats(a), stats(b)
    sigma = np.sqrt(np.maximum(sa * (1 - sa), 1e-4) * 2 / n)
    assert np.all(np.abs(sa - sb) < 4 * sigma)


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_tau_histogram_matches_curve(kind):
    sc = Scenario(kind)
    res = run_experiment(ideal_config(kind), 400_000)
    p = res.ground_truth.pairs()
    n_pairs = p["cycle"].size
    cross = p["det_first"] != p["det_second"]
    t_c = np.where(p["det_first"] == 0, p["t_first"], p["t_second"])
    t_d = np.where(p["det_first"] == 0, p["t_second"], p["t_first"])
    tau = (t_d - t_c)[cross]
    edges = np.linspace(-T, T, 46)
    counts, _ = np.histogram(tau, edges)
    curve = sc.curve()
    expect = n_pairs * curve.cross_integral(edges[:-1], edges[1:])
    if kind is ScenarioKind.PARALLEL_PHI0:
        assert counts.sum() == 0
        return
    ok = expect > 5
    chi2 = np.sum((counts[ok] - expect[ok]) ** 2 / expect[ok])
    assert chi2 / ok.sum() < 2.0


def test_violation_fraction_matches_error_rate():
    res = run_experiment(ideal_config(ScenarioKind.FEEDBACK), 1_000_000)
    bad, trials = res.ground_truth.violation_fraction()
    p = error_rate(97 / 450)
    assert trials > 50_000
    assert abs(bad - p * trials) < 4 * np.sqrt(p * trials)


def test_zero_latency_steers_every_cross_bin_pair():
    res = run_experiment(ideal_config(ScenarioKind.FEEDBACK, feedback_latency=0.0), 200_000)
    bad, trials = res.ground_truth.violation_fraction()
    assert trials > 10_000 and bad == 0


@given(st.floats(0.0, 1.0), st.integers(0, 2**32))
def test_cross_bin_counts_bounded(mu, seed):
    res = run_experiment(ideal_config(ScenarioKind.PARALLEL_PHIPI, mu=mu, rng_seed=seed), 2000)
    gt = res.ground_truth
    counts = gt.cross_bin_counts()
    assert sum(counts.values()) <= gt.is_pair.sum()


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_stream_roundtrip(tmp_path, fmt):
    res = run_experiment(ExperimentConfig(rng_seed=11), 20_000)
    path = write_streams(tmp_path / f"s.{fmt}", res.streams, fmt, meta={"resolution_ps": 81.0, "n_cycles": 20_000})
    c, d, meta = read_streams(path)
    assert meta["n_cycles"] == 20_000
    np.testing.assert_array_equal(c.timestamps_ps, res.stream_c.timestamps_ps)
    np.testing.assert_array_equal(d.cycle_index, res.stream_d.cycle_index)


@pytest.mark.parametrize(
    "body,line",
    [
        ("C,0,81\nX,1,1000\n", 3),
        ("C,0,81\nD,1\n", 3),
        ("C,0,abc\n", 2),
        ("C,-1,81\n", 2),
    ],
)
def test_parse_error_reports_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text("detector,cycle_index,timestamp_ps\n" + body)
    with pytest.raises(ParseError) as exc:
        read_streams(path, meta={})
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_missing_sidecar_and_empty_file(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("detector,cycle_index,timestamp_ps\n")
    with pytest.raises(ParseError):
        read_streams(path)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        read_streams(empty, meta={})


def test_ground_truth_jsonl(tmp_path):
    res = run_experiment(ideal_config(ScenarioKind.FEEDBACK), 2000)
    path = res.ground_truth.to_jsonl(tmp_path / "gt.jsonl")
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(recs) == res.ground_truth.cycle.size
    pairs = [r for r in recs if r["kind"] == "pair"]
    assert pairs and all(len(r["photons"]) == 2 for r in pairs)
    assert {p["label"][0] for r in pairs for p in r["photons"]} <= {"C", "D"}
