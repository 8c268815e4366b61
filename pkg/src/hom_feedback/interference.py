"""Two-photon interference at a 50:50 beam splitter.

Continuous time: joint detection densities P(t0, tau) for a click in C at
t0 and in D at t0 + tau, integrated over t0 to give cross- and
same-detector curves in tau.

Discrete time bins: expansion of the two-photon input state through the
beam splitter into probabilities over (detector, bin) outcome pairs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .photon_model import QUAD_INTERVALS, PhotonMode, TemporalEnvelope

__all__ = [
    "IncompatibleModesError",
    "AccuracyError",
    "UndefinedConditionalError",
    "Detector",
    "DetectionOutcome",
    "OUTCOMES",
    "CROSS_LABELS",
    "OutcomeDistribution",
    "CoherenceModel",
    "FeedbackRule",
    "JointDensityCurve",
    "pjoint_t0_tau",
    "pjoint_tau",
    "timebin_output_distribution",
    "conditional_second_bin",
    "pair_label",
]

NORMALIZATION_TOL = 1e-4


class IncompatibleModesError(ValueError):
    pass


class AccuracyError(RuntimeError):
    pass


class UndefinedConditionalError(ValueError):
    pass


class Detector(str, Enum):
    C = "C"
    D = "D"


@dataclass(frozen=True, order=True)
class DetectionOutcome:
    detector: Detector
    bin: int

    def __post_init__(self):
        object.__setattr__(self, "detector", Detector(self.detector))
        if self.bin not in (1, 2):
            raise ValueError(f"bin must be 1 or 2, got {self.bin}")

    @property
    def label(self) -> str:
        return f"{self.detector.value}{self.bin}"

    @classmethod
    def parse(cls, label: str) -> "DetectionOutcome":
        return cls(Detector(label[0]), int(label[1]))

    def __str__(self):
        return self.label


OUTCOMES = tuple(DetectionOutcome(d, b) for d in Detector for b in (1, 2))


def pair_label(a, b) -> str:
    """Canonical label of an unordered outcome pair, e.g. ("D1", "C2") -> "C2D1"."""
    a = a if isinstance(a, DetectionOutcome) else DetectionOutcome.parse(a)
    b = b if isinstance(b, DetectionOutcome) else DetectionOutcome.parse(b)
    lo, hi = sorted((a, b))
    return lo.label + hi.label


CROSS_LABELS = ("C1D1", "C1D2", "C2D1", "C2D2")


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over unordered pairs of (detector, bin) outcomes.

    Same-detector same-bin pairs ("C1C1" etc.) are kept in the table but are
    not observable with click detectors; see :attr:`unobservable`.
    """

    weights: dict

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-12:
            raise AccuracyError(f"outcome probabilities sum to {total!r}")
        if min(self.weights.values()) < 0:
            raise AccuracyError("negative outcome probability")

    def __getitem__(self, key) -> float:
        if isinstance(key, tuple):
            key = pair_label(*key)
        elif len(key) == 4:
            key = pair_label(key[:2], key[2:])
        return self.weights[key]

    @property
    def unobservable(self) -> frozenset:
        return frozenset(o.label * 2 for o in OUTCOMES)

    @property
    def bunched_total(self) -> float:
        return sum(self.weights[k] for k in self.unobservable)

    def cross_detector(self) -> dict:
        return {k: self.weights[k] for k in CROSS_LABELS}

    def to_json(self, **kw) -> str:
        return json.dumps(
            {"weights": self.weights, "unobservable": sorted(self.unobservable)}, **kw
        )


@dataclass(frozen=True)
class CoherenceModel:
    """Mutual coherence mu in [0, 1]; scales the interference term only."""

    mu: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError(f"mutual coherence must lie in [0, 1], got {self.mu}")


def _mu(mu) -> float:
    return mu.mu if isinstance(mu, CoherenceModel) else CoherenceModel(float(mu)).mu


@dataclass(frozen=True)
class FeedbackRule:
    """Conditional phase switch on the late half of photon B.

    A first click in D inside the detection window (the early bin) sets the
    late phase to ``phase_on_d`` from ``t_click + latency`` onwards; a first
    click in C leaves it at ``phase_on_c``.
    """

    latency: float = 97e-9
    phase_on_d: float = np.pi
    phase_on_c: float = 0.0

    def late_phase(self, t, first_detector_is_d, t_first, env: TemporalEnvelope):
        """Phase of photon B at time(s) ``t`` given the first click."""
        t = np.asarray(t, dtype=float)
        t_first = np.asarray(t_first, dtype=float)
        mid = env.midpoint
        active = (t >= t_first + self.latency) & (t_first < mid) & (t >= mid) & (t <= env.duration)
        if np.ndim(first_detector_is_d) == 0:
            target = self.phase_on_d if first_detector_is_d else self.phase_on_c
            return active * target
        target = np.where(first_detector_is_d, self.phase_on_d, self.phase_on_c)
        return active * target


_GAP = 1e-9  # relative half-gap at tau grid discontinuities


@dataclass
class JointDensityCurve:
    """Cross- and same-detector coincidence densities over tau (per second)."""

    tau: np.ndarray
    cross_detector: np.ndarray
    same_detector: np.ndarray
    duration: float = field(default=450e-9)

    def _integrate(self, y) -> float:
        # Simpson on each uniform piece, trapezoid across the narrow gaps between pieces
        gaps = np.flatnonzero(np.diff(self.tau) < 2.5 * _GAP * self.duration) + 1
        total = 0.0
        for lo, hi in zip(np.concatenate([[0], gaps]), np.concatenate([gaps, [self.tau.size]])):
            if hi - lo > 1:
                total += simpson(y[lo:hi], x=self.tau[lo:hi])
        for g in gaps:
            total += 0.5 * (self.tau[g] - self.tau[g - 1]) * (y[g] + y[g - 1])
        return float(total)

    def total_probability(self) -> float:
        return self._integrate(self.cross_detector + self.same_detector)

    def cross_probability(self) -> float:
        return self._integrate(self.cross_detector)

    def cross_at(self, tau):
        return np.interp(tau, self.tau, self.cross_detector)

    def cross_integral(self, lo, hi):
        """Integral of the cross-detector density over [lo, hi] (vectorised)."""
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * np.diff(self.tau) * (self.cross_detector[1:] + self.cross_detector[:-1]))]
        )
        return np.interp(hi, self.tau, cum) - np.interp(lo, self.tau, cum)

    def to_csv(self, path) -> Path:
        path = Path(path)
        data = np.column_stack([self.tau * 1e9, self.cross_detector * 1e-9, self.same_detector * 1e-9])
        np.savetxt(
            path, data, delimiter=",", header="tau_ns,p_cross_per_ns,p_same_per_ns",
            comments="", fmt="%.10g",
        )
        return path

    @classmethod
    def from_csv(cls, path) -> "JointDensityCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        tau = data[:, 0] * 1e-9
        return cls(tau, data[:, 1] * 1e9, data[:, 2] * 1e9, duration=float(tau[-1]))


def _check_modes(mode_a: PhotonMode, mode_b: PhotonMode) -> float:
    da, db = mode_a.envelope.duration, mode_b.envelope.duration
    if not np.isclose(da, db, rtol=1e-12, atol=0.0):
        raise IncompatibleModesError(f"photon lengths differ: {da} vs {db}")
    return da


def _amplitudes(mode_a, mode_b, t0, t1):
    ea0, ea1 = mode_a.envelope.amplitude(t0), mode_a.envelope.amplitude(t1)
    if mode_b.envelope == mode_a.envelope:
        return ea0, ea1, ea0, ea1
    return ea0, ea1, mode_b.envelope.amplitude(t0), mode_b.envelope.amplitude(t1)


def _hv_and_f(mode_a, mode_b, t0, t1, phase_b0, phase_b1, amps=None):
    """Phase-independent term and interference term at click times (t0 in C, t1 in D)."""
    ea0, ea1, eb0, eb1 = amps if amps is not None else _amplitudes(mode_a, mode_b, t0, t1)
    hv = 0.25 * ((ea0 * eb1) ** 2 + (ea1 * eb0) ** 2)
    arg = mode_a.phase_at(t0) - mode_a.phase_at(t1) + phase_b1 - phase_b0
    f = 0.5 * ea0 * eb1 * ea1 * eb0 * np.cos(arg)
    return hv, f


def pjoint_t0_tau(mode_a: PhotonMode, mode_b: PhotonMode, theta=None, mu=1.0, t0=0.0, tau=0.0):
    """Cross-detector joint density for a click in C at ``t0`` and in D at ``t0 + tau``.

    ``theta`` defaults to the relative polarisation angle of the two modes.
    """
    _check_modes(mode_a, mode_b)
    if theta is None:
        theta = mode_a.relative_angle(mode_b)
    t0 = np.asarray(t0, dtype=float)
    t1 = t0 + np.asarray(tau, dtype=float)
    hv, f = _hv_and_f(mode_a, mode_b, t0, t1, mode_b.phase_at(t0), mode_b.phase_at(t1))
    out = hv - _mu(mu) * np.cos(theta) ** 2 * f
    return out if np.ndim(out) else float(out)


def _t0_segments(tau, duration, n_quad):
    """Quadrature nodes/weights over the t0 support, split at the bin boundaries."""
    mid = 0.5 * duration
    lo = np.maximum(0.0, -tau)
    hi = np.minimum(duration, duration - tau)
    hi = np.maximum(hi, lo)
    cuts = np.sort(np.stack([np.clip(mid, lo, hi), np.clip(mid - tau, lo, hi)], axis=-1), axis=-1)
    edges = np.concatenate([lo[:, None], cuts, hi[:, None]], axis=-1)  # (n_tau, 4)
    k = max(2, (n_quad // 3) // 2 * 2)
    u = np.linspace(0.0, 1.0, k + 1)
    w = np.ones(k + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w /= 3.0 * k
    a, b = edges[:, :-1, None], edges[:, 1:, None]
    nodes = a + (b - a) * u  # (n_tau, 3, k+1)
    weights = (b - a) * w
    return nodes, weights


def _split_grid(duration, latency, n_tau):
    """Tau grid of uniform pieces on [-T, -L], [-L, L], [L, T]; the curve steps at |tau| = L."""
    eps = _GAP * duration
    pieces = []
    for a, b in ((-duration, -latency - eps), (-latency + eps, latency - eps), (latency + eps, duration)):
        k = max(2, int(round((b - a) / (2 * duration) * (n_tau - 1) / 2)) * 2)
        pieces.append(np.linspace(a, b, k + 1))
    return np.concatenate(pieces)


def pjoint_tau(
    mode_a: PhotonMode,
    mode_b: PhotonMode,
    theta=None,
    mu=1.0,
    n_tau: int = 801,
    n_quad: int = QUAD_INTERVALS,
    feedback: FeedbackRule | None = None,
    check: bool = True,
) -> JointDensityCurve:
    """Integrate the joint densities over t0 on a tau grid spanning [-T, T].

    With ``feedback`` set, the late phase of ``mode_b`` is replaced by the
    conditional switch triggered by the earlier of the two clicks.
    """
    duration = _check_modes(mode_a, mode_b)
    if (n_tau - 1) / 2 < 64:
        raise AccuracyError(f"tau grid too coarse: {n_tau} points over two photon lengths")
    if theta is None:
        theta = mode_a.relative_angle(mode_b)
    coupling = _mu(mu) * np.cos(theta) ** 2
    env = mode_b.envelope
    if feedback is not None and 0.0 < feedback.latency < duration:
        tau = _split_grid(duration, feedback.latency, n_tau)
    else:
        tau = np.linspace(-duration, duration, n_tau)
    t0, wts = _t0_segments(tau, duration, n_quad)
    t1 = t0 + tau[:, None, None]

    def integrate(values):
        return np.sum(values * wts, axis=(1, 2))

    if feedback is None:
        hv, f = _hv_and_f(mode_a, mode_b, t0, t1, mode_b.phase_at(t0), mode_b.phase_at(t1))
        cross = integrate(hv - coupling * f)
        same = integrate(hv + coupling * f)
    else:
        amps = _amplitudes(mode_a, mode_b, t0, t1)
        # cross: C at t0, D at t1; the earlier click decides the switch
        d_first = (tau < 0)[:, None, None]
        t_first = np.minimum(t0, t1)
        pb0 = feedback.late_phase(t0, d_first, t_first, env)
        pb1 = feedback.late_phase(t1, d_first, t_first, env)
        hv, f = _hv_and_f(mode_a, mode_b, t0, t1, pb0, pb1, amps)
        cross = integrate(hv - coupling * f)
        # same detector, ordered (first at t0): reuse the tau >= 0 nodes and mirror
        pos = tau >= 0.0
        s0, s1, sw = t0[pos], t1[pos], wts[pos]
        amps = tuple(x[pos] for x in amps)
        same_half = np.zeros(pos.sum())
        for first_is_d in (False, True):
            p0 = feedback.late_phase(s0, first_is_d, s0, env)
            p1 = feedback.late_phase(s1, first_is_d, s0, env)
            hv, f = _hv_and_f(mode_a, mode_b, s0, s1, p0, p1, amps)
            same_half += 0.5 * np.sum((hv + coupling * f) * sw, axis=(1, 2))
        same = np.interp(np.abs(tau), tau[pos], same_half)
    cross = np.maximum(cross, 0.0)
    same = np.maximum(same, 0.0)
    curve = JointDensityCurve(tau, cross, same, duration)
    if check:
        total = curve.total_probability()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise AccuracyError(f"joint densities integrate to {total:.6g}, not 1")
    return curve


# ---------------------------------------------------------------------------
# time-bin algebra


def _expand_pair(photon_a: dict, photon_b: dict) -> dict:
    """Two-photon output amplitudes keyed by sorted (mode, mode) tuples."""
    bs = {"A": 1.0, "B": -1.0}  # sign of the D output for each input port
    r = 1.0 / np.sqrt(2.0)

    def through_bs(photon):
        out = {}
        for (port, b, pol), amp in photon.items():
            for det, sign in (("C", 1.0), ("D", bs[port])):
                key = (det, b, pol)
                out[key] = out.get(key, 0.0) + amp * sign * r
        return out

    oa, ob = through_bs(photon_a), through_bs(photon_b)
    pair = {}
    for (ma, xa), (mb, xb) in itertools.product(oa.items(), ob.items()):
        key = tuple(sorted((ma, mb)))
        pair[key] = pair.get(key, 0.0) + xa * xb
    return pair


def _coherent_distribution(phi: float, theta: float) -> dict:
    r = 1.0 / np.sqrt(2.0)
    c, s = np.cos(theta), np.sin(theta)
    late = np.exp(1j * phi)
    photon_a = {("A", 1, "H"): r, ("A", 2, "H"): r}
    photon_b = {
        ("B", 1, "H"): r * c, ("B", 1, "V"): r * s,
        ("B", 2, "H"): r * c * late, ("B", 2, "V"): r * s * late,
    }
    probs = {pair_label(a.label, b.label): 0.0 for a, b in itertools.combinations_with_replacement(OUTCOMES, 2)}
    for (m1, m2), amp in _expand_pair(photon_a, photon_b).items():
        # a^dag a^dag |0> = sqrt(2) |2>
        p = abs(amp) ** 2 * (2.0 if m1 == m2 else 1.0)
        probs[pair_label(f"{m1[0]}{m1[1]}", f"{m2[0]}{m2[1]}")] += p
    return probs


def timebin_output_distribution(phi: float, mu=1.0, theta: float = 0.0) -> OutcomeDistribution:
    """Outcome-pair probabilities for the two-bin input state with late phase ``phi``.

    Partial coherence mixes the polarisation-``theta`` result with the fully
    distinguishable (orthogonal) one: mu * P(theta) + (1 - mu) * P(pi/2).
    """
    m = _mu(mu)
    coh = _coherent_distribution(phi, theta)
    dist = _coherent_distribution(phi, np.pi / 2)
    weights = {k: m * coh[k] + (1.0 - m) * dist[k] for k in coh}
    # clean round-off so exact zeros stay zero
    weights = {k: (0.0 if abs(v) < 1e-15 else float(v)) for k, v in weights.items()}
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-12:
        raise AccuracyError(f"state norm {total!r}")
    return OutcomeDistribution(weights)


def conditional_second_bin(first, phi: float, mu=1.0, theta: float = 0.0) -> dict:
    """Distribution of the late-bin click over {C2, D2} given an early-bin click ``first``."""
    first = first if isinstance(first, DetectionOutcome) else DetectionOutcome.parse(first)
    if first.bin != 1:
        raise ValueError("conditioning click must be in the early bin")
    dist = timebin_output_distribution(phi, mu, theta)
    p = {d.value + "2": dist[first.label, d.value + "2"] for d in Detector}
    total = sum(p.values())
    if total <= 1e-15:
        raise UndefinedConditionalError(f"P({first.label} then late click) = 0")
    return {k: v / total for k, v in p.items()}
