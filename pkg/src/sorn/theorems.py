"""Numerical checks of the closed-form attention weights of periodic patches.

For a signal ``f`` and patch length ``p``, the un-normalized attention weight
between the patch starting at ``t1`` and the one starting at ``t1 + dt`` is
the integral of ``f(t) f(t + dt)`` over one patch. The closed forms below
are compared against composite Simpson quadrature of that integral.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TwoToneSignal",
    "FourierSignal",
    "simpson_weights",
    "closed_form_weight",
    "quadrature_weight",
    "closed_form_general",
    "quadrature_general",
    "DominanceReport",
    "dominance_report",
    "verify_two_tone_grid",
    "verify_fourier_random",
    "verify_all",
    "ComponentComparison",
    "fit_tones",
    "compare_standard_vs_skimming",
]


@dataclass(frozen=True)
class TwoToneSignal:
    """``c1 cos(w1 t) + c2 sin(w2 t)`` with ``w = 2 pi k / p`` and ``p = lcm(a, b)``."""

    c1: float
    c2: float
    a: int
    b: int

    def __post_init__(self):
        if self.a < 1 or self.b < 1 or self.a == self.b:
            raise ValueError("frequency indices must be distinct positive integers")

    @property
    def p(self) -> int:
        return math.lcm(self.a, self.b)

    @property
    def w1(self) -> float:
        return 2 * self.a * math.pi / self.p

    @property
    def w2(self) -> float:
        return 2 * self.b * math.pi / self.p

    @property
    def T1(self) -> float:
        return self.p / self.a

    @property
    def T2(self) -> float:
        return self.p / self.b

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.c1 * np.cos(self.w1 * t) + self.c2 * np.sin(self.w2 * t)


@dataclass(frozen=True)
class FourierSignal:
    """``a0 / 2 + sum_n (a_n cos(w_n t) + b_n sin(w_n t))`` with ``w_n = 2 pi n / p``."""

    a0: float
    a: tuple[float, ...]
    b: tuple[float, ...]
    p: float = 1.0

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("a and b must have the same length")
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))

    @property
    def N(self) -> int:
        return len(self.a)

    def omega(self, n: int) -> float:
        return 2 * n * math.pi / self.p

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.a0 / 2)
        for n, (an, bn) in enumerate(zip(self.a, self.b), start=1):
            w = self.omega(n)
            out = out + an * np.cos(w * t) + bn * np.sin(w * t)
        return out

    @classmethod
    def random(cls, N: int, rng, p: float = 1.0) -> "FourierSignal":
        rng = np.random.default_rng(rng)
        return cls(float(rng.uniform(-1, 1)), tuple(rng.uniform(-1, 1, N)), tuple(rng.uniform(-1, 1, N)), p)

    def energy_scale(self) -> float:
        """Upper bound on ``|closed_form_general|`` used to scale errors."""
        return self.a0 ** 2 * self.p / 4 + self.p / 2 * sum(x * x + y * y for x, y in zip(self.a, self.b))


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` (even) sub-intervals of width ``h``."""
    if n < 2 or n % 2:
        raise ValueError("Simpson's rule needs an even number of sub-intervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * h / 3


def _patch_integral(f, p: float, t1: float, dt, step: float) -> np.ndarray:
    n = int(math.ceil(p / step))
    n += n % 2
    h = p / n
    t = t1 + h * np.arange(n + 1)
    w = simpson_weights(n, h)
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    base = f(t) * w
    out = np.empty(dt.shape)
    k = np.rint(dt / h)
    on_grid = (np.abs(dt - k * h) <= 1e-12 * max(1.0, p)) & (k >= 0)
    if on_grid.any():
        # lags that land on the grid reuse one evaluation of f over the shifted range
        kmax = int(k[on_grid].max())
        ext = f(t1 + h * np.arange(n + 1 + kmax))
        for i in np.flatnonzero(on_grid):
            ki = int(k[i])
            out[i] = ext[ki:ki + n + 1] @ base
    rest = np.flatnonzero(~on_grid)
    for lo in range(0, rest.size, 16):
        idx = rest[lo:lo + 16]
        out[idx] = f(t[None, :] + dt[idx][:, None]) @ base
    return out


def closed_form_weight(signal: TwoToneSignal, dt):
    """``(p / 2) (c1^2 cos(w1 dt) + c2^2 cos(w2 dt))``."""
    dt = np.asarray(dt, dtype=float)
    return signal.p / 2 * (signal.c1 ** 2 * np.cos(signal.w1 * dt) + signal.c2 ** 2 * np.cos(signal.w2 * dt))


def quadrature_weight(signal: TwoToneSignal, t1: float, dt, step: float | None = None):
    """Simpson estimate of the patch product integral; ``step`` defaults to ``p / 1e5``."""
    step = signal.p / 1e5 if step is None else step
    out = _patch_integral(signal, signal.p, t1, dt, step)
    return out if np.ndim(dt) else float(out[0])


def closed_form_general(signal: FourierSignal, dt):
    dt = np.asarray(dt, dtype=float)
    out = np.full(dt.shape, signal.a0 ** 2 * signal.p / 4)
    for n, (an, bn) in enumerate(zip(signal.a, signal.b), start=1):
        out = out + signal.p / 2 * (an * an + bn * bn) * np.cos(signal.omega(n) * dt)
    return out


def quadrature_general(signal: FourierSignal, t1: float, dt, step: float | None = None):
    step = signal.p / 1e5 if step is None else step
    out = _patch_integral(signal, signal.p, t1, dt, step)
    return out if np.ndim(dt) else float(out[0])


@dataclass
class DominanceReport:
    lags: np.ndarray
    weights: np.ndarray
    maximizers: np.ndarray
    T1: float
    T2: float
    at_multiple_of_T1: bool
    at_multiple_of_T2_only: bool

    @property
    def dominant_period(self) -> float:
        if self.at_multiple_of_T1:
            return self.T1
        return self.T2 if self.at_multiple_of_T2_only else math.nan


def _near_multiple(x: float, period: float, tol: float) -> bool:
    k = round(x / period)
    return k >= 1 and abs(x - k * period) <= tol


def dominance_report(signal: TwoToneSignal, n_grid: int = 20000) -> DominanceReport:
    """Locate the lags in ``(0, p)`` with the largest closed-form weight.

    The trivial peak at ``dt = 0`` (and its copy at ``dt = p``) is skipped by
    keeping only interior local maxima. The weaker tone nudges the peaks off
    exact multiples, so a maximizer counts as a multiple of a period when it
    lies within a tenth of the shorter period of one.
    """
    if abs(signal.c1) == abs(signal.c2):
        raise ValueError("dominance analysis needs tones of different amplitude")
    lags = np.linspace(0, signal.p, n_grid + 1)[1:-1]
    w = closed_form_weight(signal, lags)
    step = signal.p / n_grid
    peak = np.flatnonzero((w[1:-1] >= w[:-2]) & (w[1:-1] >= w[2:])) + 1
    if peak.size == 0:
        return DominanceReport(lags, w, np.array([]), signal.T1, signal.T2, False, False)
    best = w[peak].max()
    top = lags[peak[w[peak] >= best - 1e-9 * max(1.0, abs(best))]]
    groups = np.split(top, np.flatnonzero(np.diff(top) > 2 * step) + 1)
    maxima = np.array([g.mean() for g in groups])
    tol = max(2 * step, 0.1 * min(signal.T1, signal.T2))
    on_t1 = all(_near_multiple(m, signal.T1, tol) for m in maxima)
    on_t2 = all(_near_multiple(m, signal.T2, tol) for m in maxima)
    return DominanceReport(lags, w, maxima, signal.T1, signal.T2, on_t1, on_t2 and not on_t1)


# ------------------------------------------------------------------ grids


def verify_two_tone_grid(n_lags: int = 100, step_divisor: int = 100000, tol: float = 1e-6,
                         t1: float = 0.0) -> dict:
    """Closed form vs quadrature over every (a, b, c1, c2) combination of the acceptance grid."""
    start = time.perf_counter()
    worst, rows = 0.0, 0
    for a in range(1, 5):
        for b in range(1, 5):
            if a == b:
                continue
            for c1 in (1.0, 2.0, 3.0):
                for c2 in (0.5, 1.0):
                    if not c2 < c1:
                        continue
                    sig = TwoToneSignal(c1, c2, a, b)
                    lags = np.arange(n_lags) * sig.p / n_lags
                    q = quadrature_weight(sig, t1, lags, sig.p / step_divisor)
                    err = np.abs(q - closed_form_weight(sig, lags)) / (c1 ** 2 + c2 ** 2)
                    worst = max(worst, float(err.max()))
                    rows += 1
    return {"signals": rows, "lags": n_lags, "max_rel_error": worst, "tolerance": tol,
            "passed": worst <= tol, "seconds": time.perf_counter() - start}


def verify_fourier_random(n_signals: int = 20, N: int = 5, n_lags: int = 50, seed: int = 0,
                          p: float = 1.0, step_divisor: int = 100000, tol: float = 1e-6) -> dict:
    """Closed form vs quadrature for random truncated Fourier series."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_signals):
        sig = FourierSignal.random(N, rng, p)
        # random lags drawn on the quadrature grid
        lags = rng.integers(0, int(step_divisor), n_lags) * (p / step_divisor)
        q = quadrature_general(sig, 0.0, lags, p / step_divisor)
        err = np.abs(q - closed_form_general(sig, lags)) / sig.energy_scale()
        worst = max(worst, float(err.max()))
    return {"signals": n_signals, "N": N, "lags": n_lags, "max_rel_error": worst, "tolerance": tol,
            "passed": worst <= tol, "seconds": time.perf_counter() - start}


def verify_all(seed: int = 0) -> dict:
    shift = {}
    sig = TwoToneSignal(2.0, 1.0, 2, 3)
    lags = np.linspace(0, sig.p, 25, endpoint=False)
    q0 = quadrature_weight(sig, 0.0, lags)
    q1 = quadrature_weight(sig, 0.37 * sig.p, lags)
    shift["max_rel_diff"] = float(np.max(np.abs(q0 - q1)) / (sig.c1 ** 2 + sig.c2 ** 2))
    shift["passed"] = shift["max_rel_diff"] < 1e-8
    dom = dominance_report(sig)
    report = {
        "two_tone": verify_two_tone_grid(),
        "fourier": verify_fourier_random(seed=seed),
        "shift_invariance": shift,
        "dominance": {"maximizers": dom.maximizers.tolist(), "T1": dom.T1, "T2": dom.T2,
                      "passed": bool(dom.at_multiple_of_T1)},
    }
    report["passed"] = all(v["passed"] for v in report.values())
    return report


# ------------------------------------------- standard vs skimming attention


@dataclass
class ComponentComparison:
    low_rmse_standard: float
    low_rmse_skimming: float
    high_rmse_standard: float
    high_rmse_skimming: float
    first_layer_corr_high: float
    first_layer_corr_low: float
    first_layer_dominant: str
    details: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.low_rmse_skimming / self.low_rmse_standard if self.low_rmse_standard > 0 else math.inf


def _tone_basis(t, periods) -> np.ndarray:
    cols = []
    for P in periods:
        cols += [np.cos(2 * np.pi * t / P), np.sin(2 * np.pi * t / P)]
    return np.column_stack(cols + [np.ones_like(t, dtype=float)])


def fit_tones(y, t, periods) -> list[np.ndarray]:
    """Least-squares projection of ``y`` onto each period's cosine/sine pair (plus intercept)."""
    B = _tone_basis(np.asarray(t, dtype=float), periods)
    coef, *_ = np.linalg.lstsq(B, np.asarray(y, dtype=float), rcond=None)
    return [B[:, 2 * i:2 * i + 2] @ coef[2 * i:2 * i + 2] for i in range(len(periods))]


def compare_standard_vs_skimming(x, components, periods, config_skimming, config_standard=None):
    """Train a gated stack and a plain attention layer identically and compare tone recovery.

    ``components`` are the true additive parts of ``x``, high amplitude
    first; ``periods`` are their period lengths in slots. Each reconstruction
    is projected on the tones and the error of every fitted component is
    reported. The standard model defaults to ``config_skimming`` with the
    gate removed and a single layer.
    """
    from dataclasses import replace

    from .training import train

    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    t = np.arange(T, dtype=float)
    if config_standard is None:
        config_standard = replace(config_skimming, disable_skimming=True, skimming_layers=1)
    skim = train(x[:, None], config_skimming)
    std = train(x[:, None], config_standard)
    rs = skim.reconstruct(x[:, None])
    rd = std.reconstruct(x[:, None])
    fit_s = fit_tones(rs["reconstruction"][:, 0], t, periods)
    fit_d = fit_tones(rd["reconstruction"][:, 0], t, periods)
    rmse = lambda a, b: float(np.sqrt(np.mean((a - b) ** 2)))
    layer0 = rs["layers"][0, :, 0]
    corr = [float(np.corrcoef(layer0, c)[0, 1]) if np.std(c) > 0 else 0.0 for c in components]
    fit0 = fit_tones(layer0, t, periods)
    amp0 = [float(np.sqrt(np.mean(f ** 2))) for f in fit0]
    return ComponentComparison(
        low_rmse_standard=rmse(fit_d[1], components[1]),
        low_rmse_skimming=rmse(fit_s[1], components[1]),
        high_rmse_standard=rmse(fit_d[0], components[0]),
        high_rmse_skimming=rmse(fit_s[0], components[0]),
        first_layer_corr_high=corr[0],
        first_layer_corr_low=corr[1],
        first_layer_dominant="high" if amp0[0] >= amp0[1] else "low",
        details={
            "sigma": [float(s.value) for s in skim.sigmas],
            "loss_trace_skimming": skim.loss_trace,
            "loss_trace_standard": std.loss_trace,
            "first_layer_fitted_rms": amp0,
        },
    )
