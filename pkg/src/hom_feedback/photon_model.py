"""Single-photon spatio-temporal modes.

A mode is the product of a real temporal envelope eps(t), a stepwise phase
profile phi(t) and a linear polarisation angle.  Times are in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "InvalidEnvelopeError",
    "EnvelopeShape",
    "TemporalEnvelope",
    "PhaseProfile",
    "PhotonMode",
    "envelope_amplitude",
    "intensity_density",
    "spatio_temporal",
    "simpson_grid",
    "DEFAULT_DURATION",
    "QUAD_INTERVALS",
]

DEFAULT_DURATION = 450e-9
QUAD_INTERVALS = 4096


class InvalidEnvelopeError(ValueError):
    """Raised for malformed envelope definitions."""


class EnvelopeShape(str, Enum):
    SIN2 = "sin2"
    CUSTOM = "custom"


def simpson_grid(lo: float, hi: float, n: int = QUAD_INTERVALS) -> np.ndarray:
    """Uniform grid with ``n`` (even) intervals on [lo, hi]."""
    if n % 2:
        n += 1
    return np.linspace(lo, hi, n + 1)


def _piecewise_linear_norm(t: np.ndarray, a: np.ndarray) -> float:
    # exact integral of the squared linear interpolant
    h = np.diff(t)
    a0, a1 = a[:-1], a[1:]
    return float(np.sum(h * (a0 * a0 + a0 * a1 + a1 * a1) / 3.0))


@dataclass(frozen=True)
class TemporalEnvelope:
    """Real amplitude envelope supported on [0, duration].

    ``shape="sin2"`` gives the double-hump eps(t) ~ sin^2(2 pi t / duration).
    ``shape="custom"`` takes a sampled (times, amplitudes) table that is
    linearly interpolated and renormalised to unit energy.
    """

    duration: float = DEFAULT_DURATION
    shape: EnvelopeShape = EnvelopeShape.SIN2
    sample_times: tuple[float, ...] | None = None
    sample_amplitudes: tuple[float, ...] | None = None
    _scale: float = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self):
        object.__setattr__(self, "shape", EnvelopeShape(self.shape))
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise InvalidEnvelopeError(f"duration must be positive, got {self.duration}")
        if self.shape is EnvelopeShape.SIN2:
            # int_0^T sin^4(2 pi t/T) dt = 3T/8
            object.__setattr__(self, "_scale", float(np.sqrt(8.0 / (3.0 * self.duration))))
            return
        if self.sample_times is None or self.sample_amplitudes is None:
            raise InvalidEnvelopeError("custom envelope needs sample_times and sample_amplitudes")
        t = np.asarray(self.sample_times, dtype=float)
        a = np.asarray(self.sample_amplitudes, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or t.size < 2:
            raise InvalidEnvelopeError("sample table must be two equal-length 1-D sequences (>= 2 rows)")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(a)):
            raise InvalidEnvelopeError("sample table contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InvalidEnvelopeError("sample times must be strictly increasing")
        if t[0] < 0 or t[-1] > self.duration * (1 + 1e-12):
            raise InvalidEnvelopeError("sample times must lie inside [0, duration]")
        norm = _piecewise_linear_norm(t, a)
        if norm <= 0:
            raise InvalidEnvelopeError("custom envelope has zero energy")
        object.__setattr__(self, "sample_times", tuple(t.tolist()))
        object.__setattr__(self, "sample_amplitudes", tuple(a.tolist()))
        object.__setattr__(self, "_scale", float(1.0 / np.sqrt(norm)))

    @classmethod
    def from_samples(cls, times, amplitudes, duration: float | None = None) -> "TemporalEnvelope":
        times = tuple(float(x) for x in times)
        if duration is None:
            duration = times[-1] if times else 0.0
        return cls(duration, EnvelopeShape.CUSTOM, times, tuple(float(x) for x in amplitudes))

    @property
    def midpoint(self) -> float:
        return 0.5 * self.duration

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape is EnvelopeShape.SIN2:
            out = self._scale * np.sin(2.0 * np.pi * t / self.duration) ** 2
        else:
            out = self._scale * np.interp(
                t, self.sample_times, self.sample_amplitudes, left=0.0, right=0.0
            )
        inside = (t >= 0.0) & (t <= self.duration)
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)

    def half_energy(self, which: int) -> float:
        """Energy fraction in the early (1) or late (2) half."""
        if self.shape is EnvelopeShape.SIN2:
            return 0.5
        lo, hi = (0.0, self.midpoint) if which == 1 else (self.midpoint, self.duration)
        grid = simpson_grid(lo, hi)
        return float(simpson(self.amplitude(grid) ** 2, x=grid))


def envelope_amplitude(env: TemporalEnvelope, t):
    """Normalised envelope eps(t); zero outside [0, duration]."""
    return env.amplitude(t)


def intensity_density(env: TemporalEnvelope, t):
    """Per-half-photon intensity density f(t).

    f integrates to one over each half of the photon.  For the double-hump
    shape this is (16/3) sin^4(2 pi t / T) / T.
    """
    t = np.asarray(t, dtype=float)
    if env.shape is EnvelopeShape.SIN2:
        out = 16.0 / 3.0 * np.sin(2.0 * np.pi * t / env.duration) ** 4 / env.duration
        out = np.where((t >= 0.0) & (t <= env.duration), out, 0.0)
    else:
        w1, w2 = env.half_energy(1), env.half_energy(2)
        sq = env.amplitude(t) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t < env.midpoint, sq / w1 if w1 > 0 else 0.0, sq / w2 if w2 > 0 else 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PhaseProfile:
    """Two-step phase: ``early`` on [0, T/2), ``late`` on [T/2, T]."""

    early: float = 0.0
    late: float = 0.0

    def __call__(self, t, midpoint: float):
        t = np.asarray(t, dtype=float)
        out = np.where(t < midpoint, self.early, self.late)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PhotonMode:
    envelope: TemporalEnvelope = field(default_factory=TemporalEnvelope)
    phase: PhaseProfile = field(default_factory=PhaseProfile)
    polarization_angle: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.polarization_angle < np.pi):
            raise ValueError(f"polarization_angle must lie in [0, pi), got {self.polarization_angle}")

    def phase_at(self, t):
        return self.phase(t, self.envelope.midpoint)

    def relative_angle(self, other: "PhotonMode") -> float:
        return abs(self.polarization_angle - other.polarization_angle)


def spatio_temporal(mode: PhotonMode, t):
    """Complex mode function eps(t) * exp(-i phi(t))."""
    return mode.envelope.amplitude(t) * np.exp(-1j * np.asarray(mode.phase_at(t)))
