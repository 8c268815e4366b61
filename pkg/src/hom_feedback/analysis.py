"""Analysis of raw timestamp streams.

Gating by a fit to the per-cycle arrival histogram, background modelling
by cross-correlating singles densities, Poisson MLE signal extraction,
normalisation against uncorrelated photon pairs two cycles apart, sliding
histograms, cross-bin matrices, visibilities and SNR.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, signal

from .event_sim import TimestampStream
from .interference import CROSS_LABELS, JointDensityCurve

__all__ = [
    "AnalysisError",
    "FitError",
    "GridMismatchError",
    "UndefinedVisibilityError",
    "GateFit",
    "gate_model_binned",
    "fit_gate",
    "arrival_histogram",
    "BackgroundModel",
    "BackgroundCorrelations",
    "background_correlations",
    "mle_signal",
    "normalization_factor",
    "CorrelationSet",
    "extract_correlations",
    "SlidingHistogram",
    "sliding_histogram",
    "cross_bin_matrix",
    "Measured",
    "visibilities",
    "snr",
    "DatasetAnalysis",
    "analyze_dataset",
    "chi2_against_curve",
]

log = logging.getLogger(__name__)

DEFAULT_WIDTH = 50e-9
DEFAULT_STEP = 10e-9
HIST_BIN = 2e-9


class AnalysisError(RuntimeError):
    pass


class FitError(AnalysisError):
    pass


class GridMismatchError(AnalysisError, ValueError):
    pass


class UndefinedVisibilityError(AnalysisError, ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# gate fit


@dataclass(frozen=True)
class GateFit:
    """g(t) = a + b sin^2(2 pi (t - p1)/(p2 - p1)) on (p1, p2), a + c on (p3, p4), a elsewhere.

    a, b, c are in counts per histogram bin; breakpoints in seconds.
    ``power=2`` replaces sin^2 by sin^4, the detected intensity of a photon
    whose amplitude is sin^2-shaped.
    """

    a: float
    b: float
    c: float
    p1: float
    p2: float
    p3: float
    p4: float
    residual_norm: float = 0.0
    power: int = 1

    def __post_init__(self):
        if not (self.p1 < self.p2 <= self.p3 < self.p4):
            raise FitError(f"breakpoints out of order: {self.breakpoints}")

    @property
    def breakpoints(self):
        return (self.p1, self.p2, self.p3, self.p4)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.p1 + self.p2)

    @property
    def width(self) -> float:
        return self.p2 - self.p1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.sin(2 * np.pi * (t - self.p1) / (self.p2 - self.p1)) ** (2 * self.power)
        out = self.a + self.b * s * ((t > self.p1) & (t < self.p2)) + self.c * ((t > self.p3) & (t < self.p4))
        return out if out.ndim else float(out)

    def to_dict(self):
        return asdict(self)


def _sin2_bin_average(edges, p1, p2, power: int = 1):
    """Average of sin^(2 power)(2 pi (x - p1)/(p2 - p1)) restricted to (p1, p2) over each bin."""
    w = p2 - p1
    k = 2 * np.pi / w
    lo = np.clip(edges[..., :-1], p1, p2) - p1
    hi = np.clip(edges[..., 1:], p1, p2) - p1
    if power == 1:
        prim = lambda u: 0.5 * u - np.sin(2 * k * u) / (4 * k)  # noqa: E731
    elif power == 2:
        prim = lambda u: 0.375 * u - np.sin(2 * k * u) / (4 * k) + np.sin(4 * k * u) / (32 * k)  # noqa: E731
    else:
        raise ValueError("photon term power must be 1 (sin^2) or 2 (sin^4)")
    return (prim(hi) - prim(lo)) / np.diff(edges, axis=-1)


def _overlap_fraction(edges, p3, p4):
    lo = np.clip(edges[..., :-1], p3, p4)
    hi = np.clip(edges[..., 1:], p3, p4)
    return np.maximum(hi - lo, 0.0) / np.diff(edges, axis=-1)


def gate_model_binned(edges, a, b, c, p1, p2, p3, p4, power: int = 1):
    """Exact bin averages of g(t) over histogram ``edges``."""
    edges = np.asarray(edges, dtype=float)
    return a + b * _sin2_bin_average(edges, p1, p2, power) + c * _overlap_fraction(edges, p3, p4)


def _batched_lstsq(cols, y):
    """Least squares for a stack of designs; cols: list of (K, n) or (n,) arrays."""
    K = max(np.shape(c)[0] if np.ndim(c) == 2 else 1 for c in cols)
    X = np.stack([np.broadcast_to(c, (K, y.size)) for c in cols], axis=-1)
    xtx = np.einsum("kni,knj->kij", X, X) + 1e-12 * np.eye(len(cols))
    xty = np.einsum("kni,n->ki", X, y)
    coef = np.linalg.solve(xtx, xty[..., None])[..., 0]
    rss = np.sum((np.einsum("kni,ki->kn", X, coef) - y) ** 2, axis=1)
    # negative amplitudes are unphysical
    rss = np.where(np.all(coef[:, 1:] >= 0, axis=1), rss, np.inf)
    return coef, rss


def fit_gate(histogram, edges, weighted: bool = True, power: int = 1) -> GateFit:
    """Fit the gate model to an arrival-time histogram covering one period.

    Breakpoints are found by variable projection: the amplitudes (a, b, c)
    are solved by non-negative least squares for any breakpoint set, which is
    located by alternating coarse grids for (p1, p2) and (p3, p4), then
    Nelder-Mead on the four breakpoints and a final six-parameter polish.
    Residuals are weighted by the Poisson standard deviation of each bin
    unless ``weighted`` is false.
    """
    y = np.asarray(histogram, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if y.ndim != 1 or edges.size != y.size + 1:
        raise FitError("histogram and edges have inconsistent shapes")
    if y.size < 100:
        raise FitError(f"need at least 100 histogram bins, got {y.size}")
    if not np.all(np.isfinite(y)) or np.all(y == 0):
        raise FitError("degenerate (empty) histogram")
    t0, span = edges[0], edges[-1] - edges[0]
    e = (edges - t0) / span  # unit period
    scale = max(float(y.max()), 1e-300)
    w = 1.0 / np.sqrt(np.maximum(y, 1.0)) if weighted else np.ones_like(y)
    w = w / w.max()
    yn = w * y / scale
    n = y.size

    def clamp(p):
        p1, p2, p3, p4 = p
        return p1, p2, p3, min(p4, 1.0)

    def design(p):
        p1, p2, p3, p4 = clamp(p)
        return w[:, None] * np.stack([np.ones(n), _sin2_bin_average(e, p1, p2, power), _overlap_fraction(e, p3, p4)], axis=1)

    def valid(p):
        p1, p2, p3, p4 = p
        return -0.5 < p1 < p2 <= p3 < p4 and p2 - p1 > 2.0 / n and p3 < 1.0

    def vp_rss(p):
        if not valid(p):
            return np.inf, None
        X = design(p)
        coef, rnorm = optimize.nnls(X, yn)
        return rnorm**2, coef

    # coarse grid on (p1, p2) with the repump plateau approximated by a step from p2 on
    m = min(n, 64)
    g = np.linspace(0.0, 1.0, m + 1)
    i1, i2 = np.triu_indices(m + 1, k=2)
    p1s, p2s = g[i1], g[i2]
    ee = e[None, :]
    s_cols = _sin2_bin_average(ee, p1s[:, None], p2s[:, None], power)
    r_cols = _overlap_fraction(ee, p2s[:, None], np.ones_like(p2s)[:, None])
    _, rss = _batched_lstsq([w, w * s_cols, w * r_cols], yn)
    best = int(np.argmin(rss))
    p1, p2 = p1s[best], p2s[best]

    def grid34(p2):
        lo = p2
        g3 = np.linspace(lo, 1.0, m + 1)
        j3, j4 = np.triu_indices(m + 1, k=1)
        return g3[j3], g3[j4]

    p3, p4 = p2, 1.0
    for _ in range(2):
        a3, a4 = grid34(p2)
        s = _sin2_bin_average(e, p1, p2, power)
        r_cols = _overlap_fraction(ee, a3[:, None], a4[:, None])
        _, rss = _batched_lstsq([w, w * s, w * r_cols], yn)
        j = int(np.argmin(rss))
        p3, p4 = a3[j], a4[j]
        # refine (p1, p2) on a local grid with (p3, p4) held
        step = 1.0 / m
        l1 = p1 + np.linspace(-2 * step, 2 * step, 33)
        l2 = p2 + np.linspace(-2 * step, 2 * step, 33)
        q1, q2 = (x.ravel() for x in np.meshgrid(l1, l2, indexing="ij"))
        ok = (q1 < q2 - 2.0 / n) & (q2 <= p3) & (q1 > -0.5)
        q1, q2 = q1[ok], q2[ok]
        s_cols = _sin2_bin_average(ee, q1[:, None], q2[:, None], power)
        r = _overlap_fraction(e, p3, p4)
        _, rss = _batched_lstsq([w, w * s_cols, w * r], yn)
        k = int(np.argmin(rss))
        p1, p2 = q1[k], q2[k]

    x0 = np.array([p1, p2, p3, p4])
    best_x, best_f = x0, vp_rss(x0)[0]
    for _ in range(3):
        res = optimize.minimize(
            lambda p: vp_rss(p)[0], best_x, method="Nelder-Mead",
            options={"xatol": 1e-11, "fatol": 1e-12 * best_f + 1e-26, "maxfev": 4000, "adaptive": True},
        )
        if res.fun < best_f - 1e-15 * max(best_f, 1e-300):
            best_x, best_f = res.x, res.fun
        else:
            break
    f_vp, coef = vp_rss(best_x)
    if coef is None or not np.isfinite(f_vp):
        raise FitError("gate fit failed to converge")

    def full_rss(q):
        a, b, c, *p = q
        if a < 0 or b < 0 or c < 0 or not valid(p):
            return np.inf
        return float(np.sum((design(p) @ np.array([a, b, c]) - yn) ** 2))

    q0 = np.concatenate([coef, best_x])
    res = optimize.minimize(full_rss, q0, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-12 * f_vp + 1e-26, "maxfev": 3000, "adaptive": True})
    q = res.x if res.fun < f_vp else q0
    a, b, c = q[:3] * scale
    p1, p2, p3, p4 = clamp(q[3:])
    to_t = lambda u: float(t0 + u * span)  # noqa: E731
    resid = float(np.sqrt(min(res.fun, f_vp))) * scale
    return GateFit(float(a), float(b), float(c), to_t(p1), to_t(p2), to_t(p3), to_t(p4), resid, power)


def arrival_histogram(stream: TimestampStream, period_ps: int, bin_width: float = HIST_BIN):
    """Histogram of in-cycle click times; returns (counts, edges in seconds)."""
    period = period_ps * 1e-12
    nb = int(round(period / bin_width))
    edges = np.linspace(0.0, period, nb + 1)
    counts, _ = np.histogram(stream.in_cycle_times(period_ps), bins=edges)
    return counts.astype(float), edges


# ---------------------------------------------------------------------------
# background model


@dataclass
class BackgroundModel:
    """Per-cycle click densities (1/s) of background and photon detections on a common grid.

    Arrays are indexed [detector C, D] x time bin; ``edges`` is the grid.
    """

    edges: np.ndarray
    m_b: np.ndarray
    m_p: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.m_b = np.asarray(self.m_b, dtype=float)
        self.m_p = np.asarray(self.m_p, dtype=float)
        nb = self.edges.size - 1
        if self.m_b.shape != (2, nb) or self.m_p.shape != (2, nb):
            raise GridMismatchError("densities must have shape (2, n_bins) matching the grid")
        if not np.allclose(np.diff(self.edges), self.dt, rtol=1e-9, atol=0):
            raise GridMismatchError("grid must be uniform")
        if np.any(self.m_b < 0) or np.any(self.m_p < 0):
            raise ValueError("densities must be non-negative")

    @property
    def dt(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def integral(self, kind: str, det: int, lo: float, hi: float) -> float:
        """Expected clicks per cycle of ``kind`` ('b' or 'p') in [lo, hi)."""
        m = (self.m_b if kind == "b" else self.m_p)[det]
        frac = _overlap_fraction(self.edges, lo, hi)
        return float(np.sum(m * frac) * self.dt)

    @classmethod
    def from_histograms(cls, hists, edges, fits, n_cycles: int) -> "BackgroundModel":
        """Estimate m_B from the (p2, p3) dark interval and m_P = excess inside the gate."""
        edges = np.asarray(edges, dtype=float)
        dt = edges[1] - edges[0]
        m_b, m_p = [], []
        for h, fit in zip(hists, fits):
            dens = np.asarray(h, dtype=float) / (n_cycles * dt)
            # bins wholly inside the dark interval
            dark = (edges[:-1] >= fit.p2) & (edges[1:] <= fit.p3)
            level = float(dens[dark].mean()) if dark.sum() >= 1 else fit.a / (n_cycles * dt)
            gate = _overlap_fraction(edges, fit.p1, fit.p2)
            m_b.append(np.full_like(dens, level) * gate)
            m_p.append(np.maximum(dens - level, 0.0) * gate)
        return cls(edges, np.array(m_b), np.array(m_p))


@dataclass
class BackgroundCorrelations:
    """Expected coincidence densities per cycle (1/s) versus tau = t_D - t_C."""

    tau: np.ndarray
    bb: np.ndarray
    bp: np.ndarray
    pb: np.ndarray
    pp: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.bb + self.bp + self.pb + self.pp

    @property
    def background(self) -> np.ndarray:
        """Terms subtracted from same-cycle correlations (photon-photon excluded)."""
        return self.bb + self.bp + self.pb

    def window_integral(self, lo, hi, which: str = "background"):
        """Exact integral of the piecewise-linear density over [lo, hi)."""
        y = getattr(self, which)
        return _pl_integral(self.tau, y, lo, hi)

    def as_dict(self):
        return {"M_BB": self.bb, "M_BP": self.bp, "M_PB": self.pb, "M_PP": self.pp, "M_total": self.total}


def _pl_integral(x, y, lo, hi):
    x, y = np.asarray(x, float), np.asarray(y, float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (y[1:] + y[:-1]))])

    def prim(z):
        z = np.clip(np.asarray(z, float), x[0], x[-1])
        i = np.clip(np.searchsorted(x, z, side="right") - 1, 0, x.size - 2)
        yz = np.interp(z, x, y)
        return cum[i] + 0.5 * (z - x[i]) * (y[i] + yz)

    return prim(hi) - prim(lo)


def background_correlations(model: BackgroundModel, T: float | None = None) -> BackgroundCorrelations:
    """M_XY(tau) = int m_X^C(t) m_Y^D(t + tau) dt for X, Y in {B, P}.

    The densities are step functions on the model grid, so each M is exactly
    piecewise linear with nodes at multiples of the grid spacing.  ``T``
    restricts the support to the first ``T`` seconds of each density's
    non-zero region when given.
    """
    dt = model.dt
    mb, mp = model.m_b.copy(), model.m_p.copy()
    if T is not None:
        for arr in (mb, mp):
            for d in (0, 1):
                nz = np.flatnonzero((model.m_b[d] + model.m_p[d]) > 0)
                if nz.size:
                    start = model.edges[nz[0]]
                    arr[d] *= _overlap_fraction(model.edges, start, start + T)
    lags = signal.correlation_lags(mb.shape[1], mb.shape[1])

    def corr(x_c, y_d):
        return signal.correlate(y_d, x_c, mode="full", method="auto") * dt

    return BackgroundCorrelations(
        lags * dt,
        corr(mb[0], mb[1]),
        corr(mb[0], mp[1]),
        corr(mp[0], mb[1]),
        corr(mp[0], mp[1]),
    )


# ---------------------------------------------------------------------------
# counting statistics


def mle_signal(n, lambda_b):
    """Poisson MLE of the signal mean given ``n`` counts and known background."""
    n_arr, lb = np.asarray(n, dtype=float), np.asarray(lambda_b, dtype=float)
    if np.any(n_arr < 0) or np.any(lb < 0) or np.any(~np.isfinite(lb)):
        raise ValueError("counts and background must be non-negative")
    out = np.maximum(0.0, n_arr - lb)
    return out if out.ndim else float(out)


def normalization_factor(eta_l: float) -> float:
    """Ratio of cross-detector coincidences in the same cycle (perpendicular
    polarisation) to those two cycles apart, for delay-line transmission eta_L."""
    eta = float(eta_l)
    if eta == 0.0:
        raise ValueError("delay transmission of zero never produces coincidences")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"delay transmission must lie in (0, 1], got {eta}")
    return eta / (1.0 + eta) ** 2


@dataclass
class CorrelationSet:
    """Cross-detector click pairs; tau = t_D - t_C (seconds, in-cycle times)."""

    t_c: np.ndarray
    t_d: np.ndarray
    mid_c: float
    mid_d: float
    cycle: np.ndarray | None = None

    def __post_init__(self):
        self.t_c = np.asarray(self.t_c, float)
        self.t_d = np.asarray(self.t_d, float)

    @classmethod
    def from_tau(cls, tau, mid: float = 0.0):
        tau = np.asarray(tau, float)
        return cls(np.zeros_like(tau), tau, mid, mid)

    def __len__(self):
        return self.t_c.size

    @property
    def tau(self) -> np.ndarray:
        return self.t_d - self.t_c

    @property
    def bin_c(self) -> np.ndarray:
        return np.where(self.t_c < self.mid_c, 1, 2)

    @property
    def bin_d(self) -> np.ndarray:
        return np.where(self.t_d < self.mid_d, 1, 2)

    @property
    def detector_first(self) -> np.ndarray:
        return np.where(self.tau >= 0, "C", "D")

    @property
    def detector_second(self) -> np.ndarray:
        return np.where(self.tau >= 0, "D", "C")

    def quadrant_counts(self) -> dict:
        bc, bd = self.bin_c, self.bin_d
        return {f"C{i}D{j}": int(np.sum((bc == i) & (bd == j))) for i in (1, 2) for j in (1, 2)}


def _gated(stream: TimestampStream, period_ps: int, fit: GateFit):
    t = stream.in_cycle_times(period_ps)
    keep = (t >= fit.p1) & (t < fit.p2)
    return stream.cycle_index[keep], t[keep]


def _pair_by_cycle(cyc_c, t_c, cyc_d, t_d, shift: int = 0):
    """All (C, D) pairs with cycle_D = cycle_C + shift."""
    order = np.argsort(cyc_d, kind="stable")
    cyc_d, t_d = cyc_d[order], t_d[order]
    target = cyc_c + shift
    lo = np.searchsorted(cyc_d, target, side="left")
    hi = np.searchsorted(cyc_d, target, side="right")
    cnt = hi - lo
    ic = np.repeat(np.arange(cyc_c.size), cnt)
    starts = np.repeat(lo, cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    idx_d = starts + offs
    return t_c[ic], t_d[idx_d], cyc_c[ic]


def extract_correlations(stream_c, stream_d, period_ps, fits, shift: int = 0) -> CorrelationSet:
    """Gated cross-detector pairs in the same cycle (``shift=0``) or ``shift`` cycles apart."""
    cc, tc = _gated(stream_c, period_ps, fits[0])
    cd, td = _gated(stream_d, period_ps, fits[1])
    a, b, cyc = _pair_by_cycle(cc, tc, cd, td, shift)
    return CorrelationSet(a, b, fits[0].midpoint, fits[1].midpoint, cyc)


# ---------------------------------------------------------------------------
# histograms and aggregates


@dataclass
class SlidingHistogram:
    bin_width: float
    bin_step: float
    centers: np.ndarray
    counts: np.ndarray
    background: np.ndarray
    values: np.ndarray
    errors: np.ndarray

    def to_csv(self, path):
        data = np.column_stack([self.centers * 1e9, self.counts, self.background, self.values * 1e-9, self.errors * 1e-9])
        np.savetxt(path, data, delimiter=",", header="tau_ns,counts,background,p_per_ns,err_per_ns", comments="", fmt="%.10g")
        return path


def _window_counts(tau_sorted, lo, hi):
    return np.searchsorted(tau_sorted, hi, side="left") - np.searchsorted(tau_sorted, lo, side="left")


def sliding_histogram(
    correlations,
    width: float = DEFAULT_WIDTH,
    step: float = DEFAULT_STEP,
    normalization: float | None = None,
    span: tuple | None = None,
    centers=None,
    background=None,
) -> SlidingHistogram:
    """Overlapping-window histogram of tau.

    Each window [c - width/2, c + width/2) counts pairs; ``background``
    (a callable (lo, hi) -> expected counts) is removed with the Poisson MLE
    and values are divided by ``normalization * width`` (number of
    experiments times width) to give a probability density.  Without a
    normalisation the values are counts per second of tau.
    """
    if not (width > 0 and step > 0):
        raise ValueError("width and step must be positive")
    if step > width * (1 + 1e-12):
        raise ValueError(f"window step {step} exceeds width {width}")
    tau = np.sort(correlations.tau if isinstance(correlations, CorrelationSet) else np.asarray(correlations, float))
    if centers is None:
        lo, hi = span if span is not None else ((tau[0], tau[-1]) if tau.size else (-width, width))
        k = int(np.floor((hi - lo - width) / step + 1e-9)) + 1
        centers = lo + 0.5 * width + step * np.arange(max(k, 1))
    centers = np.asarray(centers, float)
    wlo, whi = centers - 0.5 * width, centers + 0.5 * width
    counts = _window_counts(tau, wlo, whi).astype(float)
    bg = np.zeros_like(counts) if background is None else np.asarray(background(wlo, whi), float)
    sig = mle_signal(counts, bg)
    norm = (normalization if normalization is not None else 1.0) * width
    if norm <= 0:
        raise ValueError("normalisation must be positive")
    return SlidingHistogram(width, step, centers, counts, bg, sig / norm, np.sqrt(counts) / norm)


@dataclass(frozen=True)
class Measured:
    value: float
    sigma: float

    def __iter__(self):
        yield self.value
        yield self.sigma


def _ratio(num: Measured, den: Measured) -> Measured:
    if den.value == 0:
        raise UndefinedVisibilityError("zero denominator")
    r = num.value / den.value
    rel = np.hypot(num.sigma / den.value, r * den.sigma / den.value)
    return Measured(r, float(rel))


def _as_measured(x) -> Measured:
    if isinstance(x, Measured):
        return x
    if isinstance(x, tuple):
        return Measured(float(x[0]), float(x[1]))
    x = float(x)
    return Measured(x, float(np.sqrt(max(x, 0.0))))


def _contrast(a: Measured, b: Measured) -> Measured:
    """(a - b) / (a + b) with independent errors."""
    s = a.value + b.value
    if s == 0:
        raise UndefinedVisibilityError("zero denominator")
    v = (a.value - b.value) / s
    da = 2 * b.value / s**2
    db = 2 * a.value / s**2
    return Measured(v, float(np.hypot(da * a.sigma, db * b.sigma)))


def visibilities(
    n_par=None, n_perp=None, n_par_cross_bin=None, n_perp_cross_bin=None, n_0=None, n_pi=None, n_d1c2=None, n_c1d2=None
) -> dict:
    """Visibilities from per-experiment-normalised coincidence aggregates.

    Plain numbers are treated as raw counts with Poisson errors; pass
    :class:`Measured` or ``(value, sigma)`` for normalised quantities.
    Only visibilities whose inputs are supplied are returned.
    """
    out = {}
    if n_par is not None and n_perp is not None:
        r = _ratio(_as_measured(n_par), _as_measured(n_perp))
        out["V_HOM"] = Measured(1.0 - r.value, r.sigma)
    if n_par_cross_bin is not None and n_perp_cross_bin is not None:
        r = _ratio(_as_measured(n_par_cross_bin), _as_measured(n_perp_cross_bin))
        out["V_ref"] = Measured(1.0 - r.value, r.sigma)
    if n_0 is not None and n_pi is not None:
        out["V_phi"] = _contrast(_as_measured(n_pi), _as_measured(n_0))
    if n_d1c2 is not None and n_c1d2 is not None:
        out["V_feed"] = _contrast(_as_measured(n_d1c2), _as_measured(n_c1d2))
    if not out:
        raise ValueError("no complete set of aggregates supplied")
    return out


def snr(signal_counts, background_counts) -> float:
    """Integrated signal correlations over integrated background correction."""
    s, b = float(np.sum(signal_counts)), float(np.sum(background_counts))
    if b <= 0:
        raise ZeroDivisionError("signal-to-noise ratio undefined without background")
    return s / b


def cross_bin_matrix(correlations: CorrelationSet, background: dict | None = None, n_experiments=None):
    """Background-corrected probabilities of the four cross-detector bin combinations.

    ``background`` maps labels to expected background counts; ``n_experiments``
    (a number or :class:`Measured`) normalises counts to probabilities.
    Returns {label: Measured}.
    """
    counts = correlations.quadrant_counts()
    nexp = _as_measured(n_experiments) if n_experiments is not None else Measured(1.0, 0.0)
    if isinstance(n_experiments, (int, float)):
        nexp = Measured(float(n_experiments), 0.0)
    out = {}
    for lab in CROSS_LABELS:
        n = counts[lab]
        lb = 0.0 if background is None else float(background[lab])
        s = mle_signal(n, lb)
        out[lab] = _ratio(Measured(s, float(np.sqrt(n))), nexp)
    return out


# ---------------------------------------------------------------------------
# full dataset


@dataclass
class DatasetAnalysis:
    n_cycles: int
    period_ps: int
    fits: tuple
    model: BackgroundModel
    correlations: CorrelationSet
    bg_corr: BackgroundCorrelations
    n2_raw: int
    n2_background: float
    eta_l: float
    quadrant_counts: dict
    quadrant_background: dict
    matrix: dict = field(default_factory=dict)

    @property
    def n_experiments(self) -> Measured:
        """Number of detected two-photon experiments implied by the two-cycle peak."""
        n2 = mle_signal(self.n2_raw, self.n2_background)
        k = 2.0 * normalization_factor(self.eta_l)
        return Measured(k * n2, k * float(np.sqrt(self.n2_raw)))

    def background_in(self, lo, hi):
        return self.n_cycles * self.bg_corr.window_integral(lo, hi)

    def histogram(self, width=DEFAULT_WIDTH, step=DEFAULT_STEP, span=None, centers=None) -> SlidingHistogram:
        if span is None and centers is None:
            span = (-(self.fits[0].width), self.fits[0].width)
        return sliding_histogram(
            self.correlations, width, step, self.n_experiments.value, span=span, centers=centers,
            background=self.background_in,
        )

    def signal_total(self) -> float:
        return sum(mle_signal(self.quadrant_counts[k], self.quadrant_background[k]) for k in CROSS_LABELS)

    def aggregate(self, labels) -> Measured:
        """Normalised background-corrected counts summed over quadrant ``labels``."""
        n = sum(self.quadrant_counts[k] for k in labels)
        lb = sum(self.quadrant_background[k] for k in labels)
        return _ratio(Measured(mle_signal(n, lb), float(np.sqrt(n))), self.n_experiments)

    def snr(self) -> float:
        return snr(self.signal_total(), sum(self.quadrant_background.values()))

    def summary(self) -> dict:
        return {
            "n_cycles": self.n_cycles,
            "fits": {d: f.to_dict() for d, f in zip("CD", self.fits)},
            "n_pairs_same_cycle": len(self.correlations),
            "n2_raw": self.n2_raw,
            "n2_background": self.n2_background,
            "n_experiments": list(self.n_experiments),
            "quadrant_counts": self.quadrant_counts,
            "quadrant_background": self.quadrant_background,
            "matrix": {k: list(v) for k, v in self.matrix.items()},
            "snr": self.snr() if sum(self.quadrant_background.values()) > 0 else None,
        }


def analyze_dataset(
    stream_c, stream_d, n_cycles: int, period_ps: int, eta_l: float, bin_width: float = HIST_BIN, gate_power: int = 2
):
    """Gate, model background, extract correlations and normalise one dataset."""
    if n_cycles < 3:
        raise AnalysisError("need at least three cycles")
    hists, fits = [], []
    edges = None
    for s in (stream_c, stream_d):
        h, edges = arrival_histogram(s, period_ps, bin_width)
        hists.append(h)
        fits.append(fit_gate(h, edges, power=gate_power))
    fits = tuple(fits)
    model = BackgroundModel.from_histograms(hists, edges, fits, n_cycles)
    bg = background_correlations(model, T=fits[0].width)
    corr = extract_correlations(stream_c, stream_d, period_ps, fits, 0)

    n2 = sum(len(extract_correlations(stream_c, stream_d, period_ps, fits, s)) for s in (2, -2))
    ints = {
        (k, d): model.integral(k, d, fits[d].p1, fits[d].p2) for k in "bp" for d in (0, 1)
    }
    n2_bg = 2 * (n_cycles - 2) * (
        ints["b", 0] * ints["b", 1] + ints["b", 0] * ints["p", 1] + ints["p", 0] * ints["b", 1]
    )

    def bin_range(d, i):
        f = fits[d]
        return (f.p1, f.midpoint) if i == 1 else (f.midpoint, f.p2)

    qbg = {}
    for i in (1, 2):
        for j in (1, 2):
            bc = {k: model.integral(k, 0, *bin_range(0, i)) for k in "bp"}
            bd = {k: model.integral(k, 1, *bin_range(1, j)) for k in "bp"}
            qbg[f"C{i}D{j}"] = n_cycles * (bc["b"] * bd["b"] + bc["b"] * bd["p"] + bc["p"] * bd["b"])
    res = DatasetAnalysis(
        n_cycles, period_ps, fits, model, corr, bg, int(n2), float(n2_bg), float(eta_l), corr.quadrant_counts(), qbg
    )
    if res.n2_raw == 0:
        raise AnalysisError("no uncorrelated two-cycle coincidences; cannot normalise")
    res.matrix = cross_bin_matrix(corr, qbg, res.n_experiments)
    return res


def chi2_against_curve(hist: SlidingHistogram, curve: JointDensityCurve, n_experiments: float) -> tuple:
    """chi^2 of raw window counts against expected signal + background.

    Returns (chi2, dof).  Variances are the expected counts, floored at one.
    """
    wlo, whi = hist.centers - 0.5 * hist.bin_width, hist.centers + 0.5 * hist.bin_width
    expected = n_experiments * curve.cross_integral(wlo, whi) + hist.background
    var = np.maximum(expected, 1.0)
    chi2 = float(np.sum((hist.counts - expected) ** 2 / var))
    return chi2, int(hist.centers.size)
