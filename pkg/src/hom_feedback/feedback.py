"""Measurement-conditioned phase feedback.

Decision rule, latency budget, the dead-time error integral and an
event-driven emulation of the TTL controller (J-K-bar flip-flop armed by
the detection window, wired-AND with the phase window).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.integrate import simpson

from .interference import Detector
from .photon_model import TemporalEnvelope, intensity_density

__all__ = [
    "SequencingError",
    "LatencyBudget",
    "decide_phase",
    "error_rate",
    "JKMode",
    "CircuitState",
    "circuit_step",
    "CircuitTiming",
    "emulate_cycle",
    "PhaseTimeline",
    "effective_phase_timeline",
    "LATENCY_COMPONENTS",
]

log = logging.getLogger(__name__)


class SequencingError(RuntimeError):
    """Circuit events presented out of time order."""


# (label, duration in ns); the first two rows were only measured as a sum
LATENCY_COMPONENTS = (
    ("optical transit + SPCM response", 80.0),
    ("circuit response", 7.0),
    ("signal rise time", 5.5),
    ("cable delay", 4.5),
)


@dataclass(frozen=True)
class LatencyBudget:
    components: tuple = LATENCY_COMPONENTS

    @property
    def total_ns(self) -> float:
        return sum(d for _, d in self.components)

    @property
    def total(self) -> float:
        """Total latency in seconds."""
        return self.total_ns * 1e-9

    @classmethod
    def fixed(cls, seconds: float) -> "LatencyBudget":
        return cls((("lumped", seconds * 1e9),))


def decide_phase(first_click_detector) -> float:
    """Late-bin phase that steers the remaining photon into C."""
    det = Detector(first_click_detector)
    return float(np.pi) if det is Detector.D else 0.0


def error_rate(dead_time_fraction: float, envelope: TemporalEnvelope | None = None, n: int = 1024) -> float:
    """Probability that a cross-bin pair lands inside the feedback dead time.

    Nested composite Simpson over t1 in the early half and t2 in the late
    half with t2 - t1 < dead_time_fraction * T, both drawn from the
    per-half intensity density.
    """
    tt = float(dead_time_fraction)
    if not np.isfinite(tt) or tt < 0:
        raise ValueError(f"dead-time fraction must be >= 0, got {dead_time_fraction}")
    env = envelope or TemporalEnvelope(1.0)
    T = env.duration
    lo = max(0.5 - tt, 0.0) * T
    mid = 0.5 * T
    if tt == 0.0 or lo >= mid:
        return 0.0
    t1 = np.linspace(lo, mid, n + 1)
    upper = np.minimum(t1 + tt * T, T)
    u = np.linspace(0.0, 1.0, n + 1)
    t2 = mid + (upper - mid)[:, None] * u  # (n+1, n+1), inner limits clamped per t1
    inner = simpson(intensity_density(env, t2), x=u, axis=1) * (upper - mid)
    return float(simpson(intensity_density(env, t1) * inner, x=t1))


class JKMode(str, Enum):
    TOGGLE = "toggle"
    HOLD = "hold"


@dataclass(frozen=True)
class CircuitState:
    """Controller state between events.

    ``latch_out`` is the buffered W_det level, ``det_prev`` the last seen
    det level (edge detection), ``last_time`` the time of the last event.
    """

    jk_q: int = 0
    jk_mode: JKMode = JKMode.HOLD
    latch_out: int = 0
    phase_out: int = 0
    det_prev: int = 0
    last_time: float = -np.inf


def circuit_step(state: CircuitState, inputs: dict, now: float):
    """Advance the controller to time ``now`` with new input levels.

    ``inputs`` holds levels of ``det``, ``w_det`` and ``w_phase``.  A rising
    W_det edge clears Q and arms toggle mode; a rising det edge in toggle
    mode toggles Q and drops back to hold.  The phase output is the wired AND
    of Q and W_phase.
    """
    if now < state.last_time:
        raise SequencingError(f"event at {now!r} precedes previous event at {state.last_time!r}")
    det, w_det, w_phase = (int(bool(inputs[k])) for k in ("det", "w_det", "w_phase"))
    q, mode = state.jk_q, state.jk_mode
    if w_det and not state.latch_out:
        q, mode = 0, JKMode.TOGGLE
    elif not w_det:
        mode = JKMode.HOLD
    if det and not state.det_prev and mode is JKMode.TOGGLE:
        q, mode = 1 - q, JKMode.HOLD
    phase = q & w_phase
    new = CircuitState(q, mode, w_det, phase, det, now)
    return new, {"phase": phase}


@dataclass(frozen=True)
class CircuitTiming:
    """Window pulses in cycle time (seconds); 215 ns TTL windows by default."""

    w_det: tuple = (10e-9, 225e-9)
    w_phase: tuple = (225e-9, 440e-9)
    pulse_width: float = 10e-9


def emulate_cycle(det_clicks, timing: CircuitTiming = CircuitTiming(), state: CircuitState | None = None):
    """Run one cycle of det clicks through the controller.

    Returns ``(q_rise_time or None, phase_intervals, final_state)``.
    """
    events = []
    for t in det_clicks:
        events.append((t, "det", 1))
        events.append((t + timing.pulse_width, "det", 0))
    events += [(timing.w_det[0], "w_det", 1), (timing.w_det[1], "w_det", 0)]
    events += [(timing.w_phase[0], "w_phase", 1), (timing.w_phase[1], "w_phase", 0)]
    # falling edges before rising edges at equal times
    events.sort(key=lambda e: (e[0], e[2]))
    levels = {"det": 0, "w_det": 0, "w_phase": 0}
    if state is None:
        state = CircuitState()
    q_rise, intervals, on_since = None, [], None
    for t, name, level in events:
        levels[name] = level
        prev_q = state.jk_q
        state, out = circuit_step(state, levels, t)
        if state.jk_q and not prev_q and q_rise is None:
            q_rise = t
        if out["phase"] and on_since is None:
            on_since = t
        elif not out["phase"] and on_since is not None:
            intervals.append((on_since, t))
            on_since = None
    if on_since is not None:
        intervals.append((on_since, np.inf))
    return q_rise, intervals, state


@dataclass(frozen=True)
class PhaseTimeline:
    """Late-bin phase of the steered photon over one cycle."""

    target: float = 0.0
    switch_time: float | None = None
    window_start: float = 225e-9
    window_end: float = 450e-9

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.switch_time is None:
            out = np.zeros_like(t)
        else:
            on = (t >= max(self.switch_time, self.window_start)) & (t <= self.window_end)
            out = np.where(on, self.target, 0.0)
        return out if out.ndim else float(out)

    @property
    def switched(self) -> bool:
        return self.switch_time is not None and self.target != 0.0


def effective_phase_timeline(first_click, latency, envelope: TemporalEnvelope | None = None) -> PhaseTimeline:
    """Phase timeline produced by a first click ``(detector, time)``.

    The switch takes effect ``latency`` after the click and only if the click
    falls in the early bin and the switch lands before the photon ends.
    """
    detector, t_click = first_click
    env = envelope or TemporalEnvelope()
    L = latency.total if isinstance(latency, LatencyBudget) else float(latency)
    target = decide_phase(detector)
    base = PhaseTimeline(0.0, None, env.midpoint, env.duration)
    if target == 0.0:
        return base
    switch = t_click + L
    if not (0.0 <= t_click < env.midpoint) or switch > env.duration:
        if switch > env.duration:
            log.debug("switch at %.1f ns falls after the photon window; unswitched", switch * 1e9)
        return base
    return replace(base, target=target, switch_time=switch)
