"""Synthetic compound-periodic task-duration datasets with labeled slowdowns.

Each slot draws ``tasks_per_slot`` durations from a gamma distribution whose
mean follows a sum of cosine tones. Slowdowns add exponential delays to a
fraction of the tasks inside chosen segments; a slot is labeled anomalous
when some decile of its durations exceeds the same decile of its
undisturbed durations by more than ``tolerance`` minutes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import DistributionSeries, IntervalScheme, get_scheme, normalize

__all__ = [
    "Segment",
    "SynthSpec",
    "LabelingRule",
    "DistortedTimeline",
    "SynthDataset",
    "default_segments",
    "distort_periods",
    "clean_mean_curve",
    "inject_noise",
    "sample_durations",
    "bin_durations",
    "inject_slowdowns",
    "gen_base",
    "generate",
    "autocorrelation",
]

DECILES = tuple(np.round(np.arange(1, 10) / 10, 1))


@dataclass(frozen=True)
class Segment:
    start: int
    length: int
    slow_ratio: float = 0.2
    avg_slowdown: float = 120.0

    def __post_init__(self):
        if self.start < 0 or self.length < 1:
            raise ValueError(f"bad segment {self}")
        if not 0 <= self.slow_ratio <= 1:
            raise ValueError("slow_ratio must lie in [0, 1]")
        if not self.avg_slowdown > 0:
            raise ValueError("avg_slowdown must be positive")

    @property
    def stop(self) -> int:
        return self.start + self.length


def default_segments(T: int, n: int = 10, length: int = 3, slow_ratio: float = 0.2,
                     avg_slowdown: float = 120.0) -> list[Segment]:
    """``n`` evenly spaced segments between 5% and 95% of the series."""
    if n == 0:
        return []
    starts = np.round(np.linspace(0.05 * T, 0.95 * T - length, n)).astype(int)
    return [Segment(int(s), length, slow_ratio, avg_slowdown) for s in starts]


@dataclass
class SynthSpec:
    tones: list[tuple[float, float]] = field(default_factory=lambda: [(40.0, 288.0), (10.0, 48.0)])
    base_duration: float = 60.0
    tasks_per_slot: int = 500
    T: int = 3000
    scheme: str = "sync"
    slot_duration: float = 5.0
    noise: float = 0.0
    distortion: float = 0.0
    n_segments: int = 10
    segment_length: int = 3
    slow_ratio: float = 0.2
    avg_slowdown: float = 120.0
    segments: list[Segment] | None = None
    tolerance: float = 10.0
    gamma_shape: float = 4.0
    min_mean: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.tones = [(float(a), float(p)) for a, p in self.tones]
        if any(a < 0 for a, _ in self.tones):
            raise ValueError("tone amplitudes must be non-negative")
        if any(p <= 0 for _, p in self.tones):
            raise ValueError("tone periods must be positive")
        if self.T < 1 or self.tasks_per_slot < 1:
            raise ValueError("T and tasks_per_slot must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.distortion < 0:
            raise ValueError("distortion R must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 <= self.slow_ratio <= 1:
            raise ValueError("slow_ratio must lie in [0, 1]")
        if self.segments is not None:
            self.segments = [s if isinstance(s, Segment) else Segment(**s) for s in self.segments]

    def resolved_segments(self) -> list[Segment]:
        if self.segments is not None:
            return list(self.segments)
        return default_segments(self.T, self.n_segments, self.segment_length, self.slow_ratio, self.avg_slowdown)

    @property
    def interval_scheme(self) -> IntervalScheme:
        return get_scheme(self.scheme)

    @property
    def max_amplitude(self) -> float:
        """Peak deviation of the undistorted periodic component from the base level."""
        t = np.arange(self.T)
        return float(np.abs(clean_mean_curve(self, t) - self.base_duration).max()) if self.tones else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tones"] = [list(t) for t in self.tones]
        d["resolved_segments"] = [asdict(s) for s in self.resolved_segments()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d.pop("resolved_segments", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LabelingRule:
    tolerance: float = 10.0
    quantiles: tuple[float, ...] = DECILES

    def gaps(self, durations, reference) -> np.ndarray:
        """Per-slot max over the grid of (observed quantile - reference quantile)."""
        q = np.asarray(self.quantiles)
        f = np.quantile(durations, q, axis=1)
        f_star = np.quantile(reference, q, axis=1)
        return (f - f_star).max(axis=0)

    def labels(self, durations, reference) -> np.ndarray:
        return (self.gaps(durations, reference) > self.tolerance).astype(np.int64)


@dataclass
class DistortedTimeline:
    phases: np.ndarray            # (n_tones, T) radians
    stretches: list[np.ndarray]   # per tone, the stretch factor of each cycle


def distort_periods(spec: SynthSpec, R: float | None = None, rng=None) -> DistortedTimeline:
    """Stretch every cycle of every tone by an independent factor drawn from ``(1, 1 + R]``."""
    R = spec.distortion if R is None else R
    if R < 0:
        raise ValueError("R must be non-negative")
    rng = np.random.default_rng(rng)
    t = np.arange(spec.T, dtype=float)
    phases = np.zeros((len(spec.tones), spec.T))
    stretches = []
    for i, (_, period) in enumerate(spec.tones):
        if R == 0:
            phases[i] = 2 * np.pi * t / period
            stretches.append(np.ones(int(np.ceil(spec.T / period)) + 1))
            continue
        s = []
        total = 0.0
        while total <= spec.T:
            u = rng.random()
            s.append(1.0 + R * (1.0 - u))  # u in [0, 1) -> (1, 1 + R]
            total += period * s[-1]
        s = np.asarray(s)
        bounds = np.concatenate([[0.0], np.cumsum(period * s)])
        k = np.searchsorted(bounds, t, side="right") - 1
        phases[i] = 2 * np.pi * (k + (t - bounds[k]) / (period * s[k]))
        stretches.append(s)
    return DistortedTimeline(phases, stretches)


def clean_mean_curve(spec: SynthSpec, t=None, timeline: DistortedTimeline | None = None) -> np.ndarray:
    """Mean task duration per slot: base plus the cosine tones."""
    if timeline is None:
        t = np.arange(spec.T, dtype=float) if t is None else np.asarray(t, dtype=float)
        phases = [2 * np.pi * t / p for _, p in spec.tones]
    else:
        phases = timeline.phases
    mu = np.full(len(phases[0]) if len(phases) else spec.T, spec.base_duration, dtype=float)
    for (amp, _), ph in zip(spec.tones, phases):
        mu = mu + amp * np.cos(ph)
    return mu


def inject_noise(mu, noise: float, max_amplitude: float, rng=None) -> np.ndarray:
    """Add zero-mean Gaussian noise with std ``noise * max_amplitude`` to the mean curve."""
    if noise < 0:
        raise ValueError("noise must be non-negative")
    mu = np.asarray(mu, dtype=float)
    if noise == 0:
        return mu.copy()
    rng = np.random.default_rng(rng)
    return mu + rng.normal(0.0, noise * max_amplitude, size=mu.shape)


def sample_durations(mu, tasks_per_slot: int, shape: float = 4.0, rng=None) -> np.ndarray:
    """``(T, tasks_per_slot)`` gamma draws with per-slot mean ``mu``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mean duration must be positive in every slot")
    rng = np.random.default_rng(rng)
    return rng.gamma(shape, (mu / shape)[:, None], size=(mu.size, tasks_per_slot))


def bin_durations(durations, scheme: IntervalScheme) -> np.ndarray:
    idx = scheme.bin_index(durations)
    if np.any(idx < 0):
        raise ValueError("some durations fall outside the interval scheme")
    T = durations.shape[0]
    flat = idx + scheme.dim * np.arange(T)[:, None]
    return np.bincount(flat.ravel(), minlength=T * scheme.dim).reshape(T, scheme.dim)


def inject_slowdowns(durations, segments, rule: LabelingRule, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Delay a ``slow_ratio`` share of tasks in every segment slot.

    Returns the perturbed durations and labels computed by ``rule`` against
    the undisturbed durations of the same slot.
    """
    durations = np.asarray(durations, dtype=float)
    T, n = durations.shape
    segs = sorted(segments, key=lambda s: s.start)
    for a, b in zip(segs, segs[1:]):
        if b.start < a.stop:
            raise ValueError(f"overlapping segments {a} and {b}")
    if segs and (segs[0].start < 0 or segs[-1].stop > T):
        raise ValueError("segments must lie within [0, T)")
    rng = np.random.default_rng(rng)
    out = durations.copy()
    for seg in segs:
        k = int(round(seg.slow_ratio * n))
        for t in range(seg.start, seg.stop):
            if k == 0:
                continue
            who = rng.choice(n, size=k, replace=False)
            out[t, who] += rng.exponential(seg.avg_slowdown, size=k)
    return out, rule.labels(out, durations)


@dataclass
class SynthDataset:
    spec: SynthSpec
    series: DistributionSeries   # normalized, counts retained
    labels: np.ndarray
    mean_curve: np.ndarray       # clean (noise-free) mean duration per slot
    perturbed_mean: np.ndarray   # after distortion and noise
    timeline: DistortedTimeline

    def write(self, directory, stem: str = "sync") -> dict[str, Path]:
        from .data import write_labels, write_series

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "series": d / f"{stem}.csv",
            "labels": d / f"{stem}.labels.csv",
            "spec": d / f"{stem}.spec.json",
        }
        write_series(self.series, paths["series"], use_counts=True)
        paths["scheme"] = paths["series"].with_suffix(".scheme.json")
        write_labels(self.series.timestamps, self.labels, paths["labels"])
        paths["spec"].write_text(json.dumps(self.spec.to_dict(), indent=2))
        return paths


def _streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def _base(spec: SynthSpec):
    if spec.tones and spec.base_duration <= sum(a for a, _ in spec.tones):
        raise ValueError("base_duration must exceed the sum of tone amplitudes")
    rng_distort, rng_noise, rng_tasks, rng_slow = _streams(spec.seed)
    timeline = distort_periods(spec, spec.distortion, rng_distort)
    mu_clean = clean_mean_curve(spec, timeline=timeline)
    if np.any(mu_clean <= 0):
        raise ValueError("mean duration must be positive in every slot")
    # noisy means are floored so the gamma sampler stays defined
    mu = np.maximum(inject_noise(mu_clean, spec.noise, spec.max_amplitude, rng_noise), spec.min_mean)
    clean = sample_durations(mu, spec.tasks_per_slot, spec.gamma_shape, rng_tasks)
    return timeline, mu_clean, mu, clean, rng_slow


def gen_base(spec: SynthSpec) -> tuple[DistributionSeries, np.ndarray]:
    """Slowdown-free counts and the clean mean curve."""
    _, mu_clean, _, clean, _ = _base(spec)
    scheme = spec.interval_scheme
    ts = spec.slot_duration * np.arange(spec.T)
    return DistributionSeries(ts, bin_durations(clean, scheme), scheme, spec.slot_duration), mu_clean


def generate(spec: SynthSpec | None = None) -> SynthDataset:
    """Full dataset: base series, slowdowns and labels; a pure function of ``spec``."""
    spec = spec or SynthSpec()
    timeline, mu_clean, mu, clean, rng_slow = _base(spec)
    durations, labels = inject_slowdowns(clean, spec.resolved_segments(), LabelingRule(spec.tolerance), rng_slow)
    scheme = spec.interval_scheme
    ts = spec.slot_duration * np.arange(spec.T)
    series = normalize(DistributionSeries(ts, bin_durations(durations, scheme), scheme, spec.slot_duration))
    return SynthDataset(spec, series, labels, mu_clean, mu, timeline)


def autocorrelation(x, lag: int) -> float:
    """Pearson correlation between ``x[:-lag]`` and ``x[lag:]``."""
    x = np.asarray(x, dtype=float)
    if not 0 < lag < x.size - 1:
        raise ValueError("lag out of range")
    a, b = x[:-lag], x[lag:]
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    return float((a * b).sum() / den) if den > 0 else 0.0
