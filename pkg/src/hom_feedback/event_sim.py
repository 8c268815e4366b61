"""Monte Carlo generator of raw detector timestamp streams.

Each repetition cycle emits at most one photon, which a PBS routes into the
short arm or the delay arm (one cycle late, transmission eta_L).  When the
delayed photon of cycle k-1 meets the prompt photon of cycle k the two
interfere at the beam splitter; lone photons exit either port at random.
Detector efficiency, dark counts and stray repump light are added and all
clicks are quantised to the TDC resolution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .feedback import LatencyBudget
from .interference import (
    FeedbackRule,
    JointDensityCurve,
    _hv_and_f,
    pjoint_tau,
    timebin_output_distribution,
)
from .photon_model import PhaseProfile, PhotonMode, TemporalEnvelope, simpson_grid

__all__ = [
    "ConfigError",
    "ScenarioKind",
    "Scenario",
    "ExperimentConfig",
    "TimestampStream",
    "GroundTruthLog",
    "SimulationResult",
    "EnvelopeSampler",
    "PairEvents",
    "sample_pair_events",
    "sample_pair_event",
    "sample_pair_events_rejection",
    "run_experiment",
    "BLOCK_CYCLES",
]

log = logging.getLogger(__name__)

BLOCK_CYCLES = 1 << 16
_C, _D = 0, 1


class ConfigError(ValueError):
    pass


class ScenarioKind(str, Enum):
    PERPENDICULAR = "perpendicular"
    PARALLEL_PHI0 = "parallel_phi0"
    PARALLEL_PHIPI = "parallel_phipi"
    FEEDBACK = "feedback"

    @classmethod
    def from_panel(cls, panel: str) -> "ScenarioKind":
        try:
            return _PANELS[panel.lower()]
        except KeyError:
            raise ConfigError(f"unknown scenario panel {panel!r} (expected a, b, c or d)") from None

    @property
    def panel(self) -> str:
        return {v: k for k, v in _PANELS.items()}[self]


_PANELS = {
    "a": ScenarioKind.PERPENDICULAR,
    "b": ScenarioKind.PARALLEL_PHI0,
    "c": ScenarioKind.PARALLEL_PHIPI,
    "d": ScenarioKind.FEEDBACK,
}


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.PERPENDICULAR
    phi: float | None = None
    mu: float = 1.0
    duration: float = 450e-9

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.phi is None:
            phi = np.pi if self.kind is ScenarioKind.PARALLEL_PHIPI else 0.0
            object.__setattr__(self, "phi", float(phi))
        if not (0.0 <= self.mu <= 1.0):
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu}")
        if not self.duration > 0:
            raise ConfigError("photon duration must be positive")

    @property
    def theta(self) -> float:
        return np.pi / 2 if self.kind is ScenarioKind.PERPENDICULAR else 0.0

    @property
    def is_feedback(self) -> bool:
        return self.kind is ScenarioKind.FEEDBACK

    @property
    def envelope(self) -> TemporalEnvelope:
        return TemporalEnvelope(self.duration)

    @property
    def interference_weight(self) -> float:
        """mu * cos^2(theta): probability that a pair interferes."""
        return self.mu * round(np.cos(self.theta) ** 2, 15)

    def modes(self):
        env = self.envelope
        late = 0.0 if self.is_feedback else self.phi
        a = PhotonMode(env, PhaseProfile(0.0, 0.0), 0.0)
        b = PhotonMode(env, PhaseProfile(0.0, late), self.theta)
        return a, b

    def curve(self, latency: float = 97e-9, **kw) -> JointDensityCurve:
        a, b = self.modes()
        fb = FeedbackRule(latency) if self.is_feedback else None
        return pjoint_tau(a, b, theta=self.theta, mu=self.mu, feedback=fb, **kw)

    def outcome_distribution(self):
        return timebin_output_distribution(self.phi, self.mu, self.theta)


@dataclass
class ExperimentConfig:
    repetition_period: float = 1e-6
    photon_window: float = 450e-9
    repump_window: float = 550e-9
    delay_transmission: float = 0.7
    emission_probability: float = 0.5
    detector_efficiency: tuple = (0.6, 0.6)
    dark_rate: tuple = (30_000.0, 30_000.0)
    tdc_resolution: float = 81e-12
    rng_seed: int = 0
    scenario: Scenario = field(default_factory=Scenario)
    feedback_latency: float = 97e-9
    repump_light_delay: float = 50e-9
    repump_light_rate: tuple = (20_000.0, 20_000.0)

    def __post_init__(self):
        for name in ("detector_efficiency", "dark_rate", "repump_light_rate"):
            v = getattr(self, name)
            if np.ndim(v) == 0:
                v = (float(v), float(v))
            v = tuple(float(x) for x in v)
            if len(v) != 2:
                raise ConfigError(f"{name} needs one value or one per detector (C, D)")
            setattr(self, name, v)
        if isinstance(self.feedback_latency, LatencyBudget):
            self.feedback_latency = self.feedback_latency.total
        self.validate()

    def validate(self):
        for name in ("repetition_period", "photon_window", "repump_window", "tdc_resolution"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not np.isclose(self.photon_window + self.repump_window, self.repetition_period, rtol=1e-9, atol=0):
            raise ConfigError("photon_window + repump_window must equal repetition_period")
        if not 0.0 < self.delay_transmission <= 1.0:
            raise ConfigError("delay_transmission must lie in (0, 1]")
        probs = (self.emission_probability, *self.detector_efficiency)
        if not all(0.0 <= p <= 1.0 for p in probs):
            raise ConfigError("probabilities must lie in [0, 1]")
        if any(r < 0 for r in (*self.dark_rate, *self.repump_light_rate)):
            raise ConfigError("rates must be non-negative")
        if self.scenario.duration > self.photon_window * (1 + 1e-12):
            raise ConfigError("photon duration exceeds the photon window")
        if self.feedback_latency < 0:
            raise ConfigError("feedback latency must be non-negative")
        if self.repump_light_delay < 0 or self.photon_window + self.repump_light_delay > self.repetition_period:
            raise ConfigError("repump light delay must fall inside the repump window")
        period_ps = self.repetition_period * 1e12
        if abs(period_ps - round(period_ps)) > 1e-6:
            raise ConfigError("repetition period must be a whole number of picoseconds")
        return self

    @property
    def period_ps(self) -> int:
        return int(round(self.repetition_period * 1e12))

    @property
    def resolution_ps(self) -> float:
        return self.tdc_resolution * 1e12


@dataclass
class TimestampStream:
    """Clicks of one detector: integer picosecond timestamps with their cycle index."""

    detector: str
    timestamps_ps: np.ndarray
    cycle_index: np.ndarray
    resolution_ps: float = 81.0

    def __post_init__(self):
        self.timestamps_ps = np.asarray(self.timestamps_ps, dtype=np.int64)
        self.cycle_index = np.asarray(self.cycle_index, dtype=np.int64)
        if self.timestamps_ps.shape != self.cycle_index.shape:
            raise ValueError("timestamps and cycle indices differ in length")

    def __len__(self):
        return self.timestamps_ps.size

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps_ps) >= 0))

    def in_cycle_times(self, period_ps: int) -> np.ndarray:
        """Click times relative to the start of their cycle, in seconds."""
        return (self.timestamps_ps - self.cycle_index * period_ps) * 1e-12


@dataclass
class GroundTruthLog:
    """True photon outcomes for every cycle in which a photon reached the beam splitter.

    Detector codes are 0 = C, 1 = D; times are seconds within the cycle and
    NaN where the cycle had a single photon.
    """

    cycle: np.ndarray
    is_pair: np.ndarray
    t_first: np.ndarray
    t_second: np.ndarray
    det_first: np.ndarray
    det_second: np.ndarray
    detected_first: np.ndarray
    detected_second: np.ndarray
    coherent: np.ndarray
    switch_time: np.ndarray
    midpoint: float = 225e-9
    ambiguous_cycles: int = 0

    def pairs(self) -> dict:
        m = self.is_pair
        keys = ("cycle", "t_first", "t_second", "det_first", "det_second", "switch_time", "detected_first", "detected_second")
        return {k: getattr(self, k)[m] for k in keys}

    def feedback_trials(self):
        """Masks over fully detected pairs: first click D in the early bin with the
        second in the late bin, and the subset where the second also went to D."""
        p = self.pairs()
        trial = p["detected_first"] & p["detected_second"] & (p["det_first"] == _D) & (p["t_first"] < self.midpoint) & (p["t_second"] >= self.midpoint)
        return trial, trial & (p["det_second"] == _D)

    def violation_fraction(self):
        trial, bad = self.feedback_trials()
        return int(bad.sum()), int(trial.sum())

    def steering_fraction(self):
        """(second in C, trials) over detected pairs with an early first and a late second click."""
        p = self.pairs()
        trial = p["detected_first"] & p["detected_second"] & (p["t_first"] < self.midpoint) & (p["t_second"] >= self.midpoint)
        return int((trial & (p["det_second"] == _C)).sum()), int(trial.sum())

    def cross_bin_counts(self) -> dict:
        """Counts of the four cross-detector (detector, bin) combinations over pairs."""
        p = self.pairs()
        b1 = np.where(p["t_first"] < self.midpoint, 1, 2)
        b2 = np.where(p["t_second"] < self.midpoint, 1, 2)
        cross = p["det_first"] != p["det_second"]
        bin_c = np.where(p["det_first"] == _C, b1, b2)
        bin_d = np.where(p["det_first"] == _D, b1, b2)
        return {f"C{i}D{j}": int((cross & (bin_c == i) & (bin_d == j)).sum()) for i in (1, 2) for j in (1, 2)}

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        name = np.array(["C", "D"])
        with path.open("w") as fh:
            for i in range(self.cycle.size):
                rec = {"cycle": int(self.cycle[i]), "kind": "pair" if self.is_pair[i] else "single"}
                times = [self.t_first[i]] + ([self.t_second[i]] if self.is_pair[i] else [])
                dets = [self.det_first[i]] + ([self.det_second[i]] if self.is_pair[i] else [])
                seen = [self.detected_first[i]] + ([self.detected_second[i]] if self.is_pair[i] else [])
                rec["photons"] = [
                    {
                        "detector": str(name[d]),
                        "bin": 1 if t < self.midpoint else 2,
                        "label": f"{name[d]}{1 if t < self.midpoint else 2}",
                        "time_ns": round(float(t) * 1e9, 4),
                        "detected": bool(s),
                    }
                    for t, d, s in zip(times, dets, seen)
                ]
                if self.is_pair[i]:
                    rec["coherent"] = bool(self.coherent[i])
                    sw = self.switch_time[i]
                    rec["switch_ns"] = None if not np.isfinite(sw) else round(float(sw) * 1e9, 4)
                fh.write(json.dumps(rec) + "\n")
        return path


@dataclass
class SimulationResult:
    stream_c: TimestampStream
    stream_d: TimestampStream
    ground_truth: GroundTruthLog
    config: ExperimentConfig
    n_cycles: int

    @property
    def streams(self):
        return self.stream_c, self.stream_d


class EnvelopeSampler:
    """Inverse-CDF sampler for click times distributed as |eps(t)|^2."""

    def __init__(self, env: TemporalEnvelope, n: int = 1 << 14):
        self.env = env
        grid = simpson_grid(0.0, env.duration, n)
        dens = env.amplitude(grid) ** 2
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(grid) * (dens[1:] + dens[:-1]))])
        cdf /= cdf[-1]
        # drop flat stretches so the inverse is single-valued
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self._cdf, self._grid = cdf[keep], grid[keep]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.interp(rng.random(size), self._cdf, self._grid)


@dataclass
class PairEvents:
    """Vectorised pair outcomes; detector codes 0 = C, 1 = D."""

    t_first: np.ndarray
    t_second: np.ndarray
    det_first: np.ndarray
    det_second: np.ndarray
    detected_first: np.ndarray
    detected_second: np.ndarray
    coherent: np.ndarray
    switch_time: np.ndarray

    def __len__(self):
        return self.t_first.size


def _late_phase(scenario: Scenario, t, switch):
    """Phase of the steerable photon at click time(s) ``t``."""
    mid, end = 0.5 * scenario.duration, scenario.duration
    if scenario.is_feedback:
        return np.where((t >= switch) & (t >= mid) & (t <= end), np.pi, 0.0)
    return np.where(t >= mid, scenario.phi, 0.0)


def sample_pair_events(
    scenario: Scenario,
    n: int,
    rng: np.random.Generator,
    latency: float = 97e-9,
    efficiency=(1.0, 1.0),
    dark_trigger=None,
    sampler: EnvelopeSampler | None = None,
    times=None,
    first_detector=None,
) -> PairEvents:
    """Draw ``n`` two-photon beam-splitter events.

    Click times are two independent draws from |eps|^2 (equivalently a bin
    pair with probability 1/4 each, then within-bin times from the per-half
    intensity density).  Given the times, the first click goes to either
    port with probability 1/2 and the second joins it with probability
    (1 + cos dphi) / 2 for an interfering pair, 1/2 otherwise, where dphi is
    the late-minus-early phase picked up between the two clicks.

    In the feedback scenario the phase switches to pi at ``trigger +
    latency`` (late bin only), the trigger being the earliest detected D
    click in the early bin: the first photon or ``dark_trigger``.

    ``times`` (n, 2) and ``first_detector`` (n,) pin parts of the draw.
    """
    sampler = sampler or EnvelopeSampler(scenario.envelope)
    mid = 0.5 * scenario.duration
    if times is None:
        times = sampler.sample(rng, (n, 2))
    times = np.sort(np.asarray(times, dtype=float).reshape(n, 2), axis=1)
    t1, t2 = times[:, 0], times[:, 1]
    u = rng.random((n, 5))
    d1 = (u[:, 0] < 0.5).astype(np.int8) if first_detector is None else np.broadcast_to(
        np.asarray(first_detector, dtype=np.int8), (n,)
    ).copy()
    coherent = u[:, 1] < scenario.interference_weight
    eff = np.asarray(efficiency, dtype=float)
    seen1 = u[:, 2] < eff[d1]
    trigger = np.full(n, np.inf) if dark_trigger is None else np.asarray(dark_trigger, dtype=float).copy()
    if scenario.is_feedback:
        own = np.where((d1 == _D) & seen1 & (t1 < mid), t1, np.inf)
        trigger = np.minimum(trigger, own)
        switch = trigger + latency
    else:
        switch = np.full(n, np.inf)
    dphi = _late_phase(scenario, t2, switch) - _late_phase(scenario, t1, switch)
    p_same = np.where(coherent, 0.5 * (1.0 + np.cos(dphi)), 0.5)
    same = u[:, 3] < p_same
    d2 = np.where(same, d1, 1 - d1).astype(np.int8)
    seen2 = u[:, 4] < eff[d2]
    return PairEvents(t1, t2, d1, d2, seen1, seen2, coherent, np.where(np.isfinite(switch), switch, np.inf))


def sample_pair_event(scenario: Scenario, feedback_state=None, rng=None, **kw):
    """Single-event convenience wrapper around :func:`sample_pair_events`.

    ``feedback_state`` may be a latency (seconds) or a :class:`LatencyBudget`.
    Returns ``((label, time), (label, time))`` in click order.
    """
    rng = rng if rng is not None else np.random.default_rng()
    latency = 97e-9 if feedback_state is None else feedback_state
    if isinstance(latency, LatencyBudget):
        latency = latency.total
    ev = sample_pair_events(scenario, 1, rng, latency=float(latency), **kw)
    mid = 0.5 * scenario.duration
    out = []
    for t, d in ((ev.t_first[0], ev.det_first[0]), (ev.t_second[0], ev.det_second[0])):
        out.append((f"{'CD'[d]}{1 if t < mid else 2}", float(t)))
    return tuple(out)


def sample_pair_events_rejection(
    scenario: Scenario,
    n: int,
    rng: np.random.Generator,
    latency: float = 97e-9,
    efficiency=(1.0, 1.0),
    dark_trigger=None,
    batch: int = 1 << 16,
) -> PairEvents:
    """Slow oracle: rejection sampling on the two-time joint densities.

    Proposals are a click pattern (CD, CC, DD) and two uniform times; the
    acceptance weight is the cross- or same-detector density evaluated from
    the envelope/phase formula with the feedback rule applied per proposal.
    """
    a, b = scenario.modes()
    env = scenario.envelope
    T, mid = env.duration, env.midpoint
    c2 = scenario.interference_weight
    grid = np.linspace(0, T, 4097)
    bound = 1.05 * float(np.max(env.amplitude(grid))) ** 4
    eff = np.asarray(efficiency, dtype=float)
    dark = None if dark_trigger is None else np.asarray(dark_trigger, dtype=float)
    out = {k: [] for k in PairEvents.__dataclass_fields__}
    got = 0
    while got < n:
        m = batch
        pattern = rng.integers(0, 3, m)  # 0: C then/with D (cross), 1: CC, 2: DD
        u = rng.random((m, 2)) * T
        idx = rng.integers(0, n, m) if dark is not None else None
        trig0 = dark[idx] if dark is not None else np.full(m, np.inf)
        t1, t2 = np.min(u, axis=1), np.max(u, axis=1)
        # cross proposals: C at u0, D at u1
        tc, td = u[:, 0], u[:, 1]
        d1 = np.where(pattern == 0, np.where(tc <= td, _C, _D), np.where(pattern == 1, _C, _D)).astype(np.int8)
        d2 = np.where(pattern == 0, 1 - d1, d1).astype(np.int8)
        seen = rng.random((m, 2)) < np.stack([eff[d1], eff[d2]], axis=1)
        if scenario.is_feedback:
            own = np.where((d1 == _D) & seen[:, 0] & (t1 < mid), t1, np.inf)
            switch = np.minimum(trig0, own) + latency
        else:
            switch = np.full(m, np.inf)
        # photon B phase at the C-click and D-click times (cross) or first/second (same)
        x0 = np.where(pattern == 0, tc, t1)
        x1 = np.where(pattern == 0, td, t2)
        pb0 = _late_phase(scenario, x0, switch)
        pb1 = _late_phase(scenario, x1, switch)
        hv, f = _hv_and_f(a, b, x0, x1, pb0, pb1)
        # same-detector proposals are folded onto the ordered half-plane, doubling their density
        target = np.where(pattern == 0, hv - c2 * f, 0.5 * (hv + c2 * f))
        acc = rng.random(m) * bound < target
        k = np.flatnonzero(acc)[: n - got]
        out["t_first"].append(t1[k])
        out["t_second"].append(t2[k])
        out["det_first"].append(d1[k])
        out["det_second"].append(d2[k])
        out["detected_first"].append(seen[k, 0])
        out["detected_second"].append(seen[k, 1])
        out["coherent"].append(np.ones(k.size, bool))
        out["switch_time"].append(switch[k])
        got += k.size
    return PairEvents(**{key: np.concatenate(v) for key, v in out.items()})


def _block_rng(seed: int, stage: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stage, block))))


def _poisson_times(rng, n_cycles, rate, lo, hi):
    """Homogeneous Poisson clicks on [lo, hi) of every cycle: (cycle, time)."""
    counts = rng.poisson(rate * (hi - lo), n_cycles)
    cyc = np.repeat(np.arange(n_cycles), counts)
    return cyc, lo + (hi - lo) * rng.random(cyc.size)


def run_experiment(config: ExperimentConfig, n_cycles: int, sampler: str = "factorized") -> SimulationResult:
    """Simulate ``n_cycles`` repetition cycles.

    Randomness is drawn per block of :data:`BLOCK_CYCLES` cycles from
    substreams keyed by (seed, stage, block), so the output does not depend
    on how blocks are scheduled.
    """
    if int(n_cycles) < 1:
        raise ConfigError("n_cycles must be >= 1")
    if sampler not in ("factorized", "rejection"):
        raise ConfigError(f"unknown sampler {sampler!r}")
    n_cycles = int(n_cycles)
    cfg = config.validate()
    sc = cfg.scenario
    T = cfg.repetition_period
    env = sc.envelope
    mid = env.midpoint
    seed = cfg.rng_seed
    blocks = range(0, n_cycles, BLOCK_CYCLES)

    # stage 0: emission and routing
    emitted, long_arm, survives = [], [], []
    for b0 in blocks:
        m = min(BLOCK_CYCLES, n_cycles - b0)
        r = _block_rng(seed, 0, b0 // BLOCK_CYCLES).random((m, 3))
        emitted.append(r[:, 0] < cfg.emission_probability)
        long_arm.append(r[:, 1] < 0.5)
        survives.append(r[:, 2] < cfg.delay_transmission)
    emitted, long_arm, survives = (np.concatenate(x) for x in (emitted, long_arm, survives))
    prompt = emitted & ~long_arm
    delayed = np.zeros(n_cycles, bool)
    delayed[1:] = (emitted & long_arm & survives)[:-1]
    is_pair = prompt & delayed
    is_single = prompt ^ delayed

    env_sampler = EnvelopeSampler(env)
    clicks_det, clicks_cyc, clicks_t = [], [], []
    gt_parts = []
    ambiguous = 0
    for b0 in blocks:
        m = min(BLOCK_CYCLES, n_cycles - b0)
        rng = _block_rng(seed, 1, b0 // BLOCK_CYCLES)
        sl = slice(b0, b0 + m)
        # dark counts over the whole cycle, stray light during repump
        dark_trigger = np.full(m, np.inf)
        early_c = np.zeros(m, bool)
        for det in (_C, _D):
            cyc, t = _poisson_times(rng, m, cfg.dark_rate[det], 0.0, T)
            clicks_det.append(np.full(cyc.size, det, np.int8))
            clicks_cyc.append(cyc + b0)
            clicks_t.append(t)
            early = t < mid
            if det == _D:
                np.minimum.at(dark_trigger, cyc[early], t[early])
            else:
                early_c[cyc[early]] = True
            cyc, t = _poisson_times(rng, m, cfg.repump_light_rate[det], cfg.photon_window + cfg.repump_light_delay, T)
            clicks_det.append(np.full(cyc.size, det, np.int8))
            clicks_cyc.append(cyc + b0)
            clicks_t.append(t)

        # lone photons
        single_idx = np.flatnonzero(is_single[sl])
        ns = single_idx.size
        ts = env_sampler.sample(rng, ns)
        ds = (rng.random(ns) < 0.5).astype(np.int8)
        seen_s = rng.random(ns) < np.asarray(cfg.detector_efficiency)[ds]

        # interfering pairs
        pair_idx = np.flatnonzero(is_pair[sl])
        npair = pair_idx.size
        if sampler == "factorized":
            ev = sample_pair_events(
                sc, npair, rng, latency=cfg.feedback_latency, efficiency=cfg.detector_efficiency,
                dark_trigger=dark_trigger[pair_idx], sampler=env_sampler,
            )
        else:
            ev = sample_pair_events_rejection(
                sc, npair, rng, latency=cfg.feedback_latency, efficiency=cfg.detector_efficiency,
                dark_trigger=dark_trigger[pair_idx] if npair else None,
            ) if npair else sample_pair_events(sc, 0, rng)
        if sc.is_feedback and npair:
            # both detectors firing in the detection window: the monitored D wins
            early_c_photon = ((ev.det_first == _C) & ev.detected_first & (ev.t_first < mid)) | (
                (ev.det_second == _C) & ev.detected_second & (ev.t_second < mid)
            )
            amb = (early_c[pair_idx] | early_c_photon) & np.isfinite(ev.switch_time)
            ambiguous += int(amb.sum())

        for t, d, seen, idx in (
            (ts, ds, seen_s, single_idx),
            (ev.t_first, ev.det_first, ev.detected_first, pair_idx),
            (ev.t_second, ev.det_second, ev.detected_second, pair_idx),
        ):
            clicks_det.append(d[seen])
            clicks_cyc.append(idx[seen] + b0)
            clicks_t.append(t[seen])

        nan = np.full(ns, np.nan)
        gt_parts.append(
            dict(
                cycle=np.concatenate([single_idx, pair_idx]) + b0,
                is_pair=np.concatenate([np.zeros(ns, bool), np.ones(npair, bool)]),
                t_first=np.concatenate([ts, ev.t_first]),
                t_second=np.concatenate([nan, ev.t_second]),
                det_first=np.concatenate([ds, ev.det_first]),
                det_second=np.concatenate([np.full(ns, -1, np.int8), ev.det_second]),
                detected_first=np.concatenate([seen_s, ev.detected_first]),
                detected_second=np.concatenate([np.zeros(ns, bool), ev.detected_second]),
                coherent=np.concatenate([np.zeros(ns, bool), ev.coherent]),
                switch_time=np.concatenate([np.full(ns, np.inf), ev.switch_time]),
            )
        )
    if ambiguous:
        log.info("%d feedback cycles with clicks on both detectors in the detection window", ambiguous)

    det = np.concatenate(clicks_det)
    cyc = np.concatenate(clicks_cyc).astype(np.int64)
    t = np.concatenate(clicks_t)
    res = cfg.resolution_ps
    ticks = np.floor((cyc * cfg.period_ps + t * 1e12) / res).astype(np.int64)
    stamps = np.round(ticks * res).astype(np.int64)
    streams = []
    for code, name in ((_C, "C"), (_D, "D")):
        sel = det == code
        order = np.lexsort((cyc[sel], stamps[sel]))
        streams.append(TimestampStream(name, stamps[sel][order], cyc[sel][order], res))

    gt = {k: np.concatenate([p[k] for p in gt_parts]) for k in gt_parts[0]}
    order = np.argsort(gt["cycle"], kind="stable")
    gt = GroundTruthLog(**{k: v[order] for k, v in gt.items()}, midpoint=mid, ambiguous_cycles=ambiguous)
    return SimulationResult(streams[0], streams[1], gt, cfg, n_cycles)
