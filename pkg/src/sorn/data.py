"""Interval schemes, duration-time distribution series, and their file formats."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "IntervalScheme",
    "TaskEvent",
    "DistributionSeries",
    "BinningReport",
    "SCHEMES",
    "get_scheme",
    "bin_events",
    "normalize",
    "split",
    "read_events_csv",
    "write_series",
    "read_series",
    "write_labels",
    "read_labels",
]

# Interval edges in minutes, ascending.
_EDGES = {
    "sync": (0, 10, 20, 30, 40, 70, 110, 150, 190, 230, 280, 330, 380, 430),
    "ali1": (0, 10, 20, 30, 40, 70, 110, 150, 190, 230, 280, 330, 380, 430),
    "ali2": (0, 10, 20, 30, 40, 70, 110, 150, 190, 230, 280, 330, 380, 430),
    "mustang": (0, 5, 10, 20, 30, 40, 70, 110, 150, 190, 230, 280, 330, 380, 430, 900, 1200, 9000),
}


@dataclass(frozen=True)
class IntervalScheme:
    """Left-closed duration intervals ``[s_d, s_{d+1})`` plus an optional overflow bin.

    With ``overflow`` enabled the last interval is ``[s_{D+1}, inf)`` and its
    representative midpoint is the last edge plus half the last finite width.
    """

    edges: tuple[float, ...]
    overflow: bool = True

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) < 2:
            raise ValueError("an interval scheme needs at least two edges")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"edges must be strictly increasing: {edges}")
        object.__setattr__(self, "edges", edges)

    @property
    def dim(self) -> int:
        return len(self.edges) - 1 + int(self.overflow)

    @property
    def midpoints(self) -> np.ndarray:
        e = np.asarray(self.edges)
        mids = (e[:-1] + e[1:]) / 2
        if self.overflow:
            mids = np.append(mids, e[-1] + (e[-1] - e[-2]) / 2)
        return mids

    def bin_index(self, durations) -> np.ndarray:
        """Bin index per duration, or -1 when it falls outside every interval."""
        d = np.asarray(durations, dtype=float)
        idx = np.searchsorted(self.edges, d, side="right") - 1
        top = len(self.edges) - 1
        if self.overflow:
            idx = np.where(d >= self.edges[-1], top, idx)
        else:
            idx = np.where(d >= self.edges[-1], -1, idx)
        return np.where(d < self.edges[0], -1, idx)

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "overflow": self.overflow}

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalScheme":
        return cls(tuple(d["edges"]), bool(d.get("overflow", True)))


SCHEMES = {name: IntervalScheme(edges) for name, edges in _EDGES.items()}


def get_scheme(name_or_edges) -> IntervalScheme:
    if isinstance(name_or_edges, IntervalScheme):
        return name_or_edges
    if isinstance(name_or_edges, str):
        try:
            return SCHEMES[name_or_edges.lower()]
        except KeyError:
            raise ValueError(f"unknown scheme {name_or_edges!r}; known: {sorted(SCHEMES)}") from None
    return IntervalScheme(tuple(name_or_edges))


@dataclass(frozen=True)
class TaskEvent:
    task_id: str
    end_timestamp: float
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"task {self.task_id!r}: negative duration {self.duration}")


@dataclass
class DistributionSeries:
    """Per-slot task counts (or proportions) over an interval scheme.

    ``timestamps`` are slot start times in minutes with a constant step of
    ``slot_duration``. ``missing`` marks slots that had no tasks at all.
    """

    timestamps: np.ndarray
    counts: np.ndarray | None
    scheme: IntervalScheme
    slot_duration: float
    proportions: np.ndarray | None = None
    missing: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.ndim != 2 or self.counts.shape[1] != self.scheme.dim:
                raise ValueError(f"counts shape {self.counts.shape} does not match D={self.scheme.dim}")
            if (self.counts < 0).any():
                raise ValueError("counts must be non-negative")
        if self.proportions is not None:
            self.proportions = np.asarray(self.proportions, dtype=float)
        if len(self.timestamps) != len(self):
            raise ValueError("one timestamp per slot is required")
        if len(self.timestamps) > 1:
            steps = np.diff(self.timestamps)
            if not np.allclose(steps, self.slot_duration, rtol=0, atol=1e-9 * max(1.0, self.slot_duration)):
                raise ValueError("timestamps must be strictly increasing with step slot_duration")
        if self.missing is None:
            self.missing = np.zeros(len(self), dtype=bool)
        else:
            self.missing = np.asarray(self.missing, dtype=bool)

    def __len__(self) -> int:
        ref = self.counts if self.counts is not None else self.proportions
        return 0 if ref is None else ref.shape[0]

    @property
    def dim(self) -> int:
        return self.scheme.dim

    @property
    def normalized(self) -> bool:
        return self.proportions is not None

    @property
    def values(self) -> np.ndarray:
        """The matrix the model consumes: proportions when available, else counts."""
        return self.proportions if self.proportions is not None else self.counts.astype(float)

    def expectation(self) -> np.ndarray:
        """Expected duration per slot under the normalized distribution (minutes)."""
        if self.proportions is None:
            raise ValueError("series is not normalized")
        return self.proportions @ self.scheme.midpoints

    def slice(self, start: int, stop: int) -> "DistributionSeries":
        return DistributionSeries(
            self.timestamps[start:stop],
            None if self.counts is None else self.counts[start:stop],
            self.scheme,
            self.slot_duration,
            None if self.proportions is None else self.proportions[start:stop],
            self.missing[start:stop],
        )


@dataclass
class BinningReport:
    total: int = 0
    binned: int = 0
    out_of_span: int = 0
    out_of_range: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "binned": self.binned,
            "out_of_span": self.out_of_span,
            "out_of_range": self.out_of_range,
            "rejected": [{"row": r, "reason": why} for r, why in self.rejected],
        }


def bin_events(events: Iterable[TaskEvent], scheme: IntervalScheme, slot_duration: float,
               span: tuple[float, float]) -> tuple[DistributionSeries, BinningReport]:
    """Count events per (slot, interval). Slot ``t`` covers ``[start + t*slot, start + (t+1)*slot)``."""
    if not slot_duration > 0:
        raise ValueError("slot_duration must be positive")
    start, end = map(float, span)
    if not end > start:
        raise ValueError(f"empty span {span}")
    n_slots = int(math.ceil((end - start) / slot_duration))
    counts = np.zeros((n_slots, scheme.dim), dtype=np.int64)
    report = BinningReport()
    ends, durs = [], []
    for row, ev in enumerate(events):
        report.total += 1
        if not ev.duration >= 0:
            report.rejected.append((row, f"negative duration {ev.duration}"))
            continue
        ends.append(ev.end_timestamp)
        durs.append(ev.duration)
    if report.rejected:
        detail = "; ".join(f"row {r}: {why}" for r, why in report.rejected[:10])
        raise ValueError(f"{len(report.rejected)} event(s) rejected: {detail}")
    ends = np.asarray(ends, dtype=float)
    durs = np.asarray(durs, dtype=float)
    in_span = (ends >= start) & (ends < end)
    report.out_of_span = int((~in_span).sum())
    slot = np.floor((ends[in_span] - start) / slot_duration).astype(np.int64)
    col = scheme.bin_index(durs[in_span])
    ok = col >= 0
    report.out_of_range = int((~ok).sum())
    np.add.at(counts, (slot[ok], col[ok]), 1)
    report.binned = int(ok.sum())
    timestamps = start + slot_duration * np.arange(n_slots)
    return DistributionSeries(timestamps, counts, scheme, slot_duration), report


def normalize(series: DistributionSeries) -> DistributionSeries:
    """Row-normalize counts; slots with no tasks become uniform and are flagged missing."""
    if series.counts is None:
        if series.proportions is None:
            raise ValueError("series has neither counts nor proportions")
        return series
    c = series.counts.astype(float)
    tot = c.sum(axis=1, keepdims=True)
    missing = tot[:, 0] == 0
    props = np.where(tot > 0, c / np.where(tot > 0, tot, 1.0), 1.0 / series.dim)
    return DistributionSeries(series.timestamps, series.counts, series.scheme, series.slot_duration,
                              props, missing | series.missing)


def split(series: DistributionSeries, labels: Sequence[int] | None, train_fraction: float):
    """Contiguous prefix/suffix split at ``floor(T * train_fraction)``."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(series)
    if labels is not None and len(labels) != n:
        raise ValueError(f"labels length {len(labels)} != series length {n}")
    cut = int(math.floor(n * train_fraction))
    if cut == 0 or cut == n:
        raise ValueError(f"split index {cut} leaves an empty part (T={n})")
    train, test = series.slice(0, cut), series.slice(cut, n)
    if labels is None:
        return train, test
    labels = np.asarray(labels)
    return (train, labels[:cut]), (test, labels[cut:])


# ---------------------------------------------------------------------- I/O


def read_events_csv(path) -> tuple[list[TaskEvent], list[tuple[int, str]]]:
    """Parse an events CSV; returns the good events and (line number, reason) per bad row."""
    events, bad = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return events, bad
        if [h.strip() for h in header] != ["task_id", "end_timestamp", "duration_min"]:
            raise ValueError(f"{path}: expected header task_id,end_timestamp,duration_min, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 3:
                    raise ValueError(f"expected 3 fields, got {len(row)}")
                end, dur = float(row[1]), float(row[2])
                if not (math.isfinite(end) and math.isfinite(dur)):
                    raise ValueError("non-finite value")
                events.append(TaskEvent(row[0], end, dur))
            except ValueError as exc:
                bad.append((lineno, str(exc)))
    return events, bad


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".scheme.json")


def write_series(series: DistributionSeries, path, use_counts: bool | None = None) -> None:
    """Write ``timestamp,bin_0..`` rows plus a ``.scheme.json`` sidecar."""
    path = Path(path)
    if use_counts is None:
        use_counts = series.counts is not None
    mat = series.counts if use_counts else series.proportions
    if mat is None:
        raise ValueError("requested matrix is not present on the series")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp"] + [f"bin_{d}" for d in range(series.dim)])
        for ts, row in zip(series.timestamps, mat):
            w.writerow([repr(float(ts))] + [str(int(v)) if use_counts else repr(float(v)) for v in row])
    meta = {
        **series.scheme.to_dict(),
        "slot_duration": series.slot_duration,
        "normalized": not use_counts,
        "missing": np.flatnonzero(series.missing).tolist(),
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2))


def read_series(path) -> DistributionSeries:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    scheme = IntervalScheme.from_dict(meta)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != scheme.dim + 1 or header[0] != "timestamp":
            raise ValueError(f"{path}: header does not match scheme dimension {scheme.dim}")
        rows = [r for r in reader if r]
    ts = np.array([float(r[0]) for r in rows])
    missing = np.zeros(len(rows), dtype=bool)
    missing[meta.get("missing", [])] = True
    if meta.get("normalized"):
        props = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), scheme.dim)
        return DistributionSeries(ts, None, scheme, float(meta["slot_duration"]), props, missing)
    counts = np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int64).reshape(len(rows), scheme.dim)
    return DistributionSeries(ts, counts, scheme, float(meta["slot_duration"]), None, missing)


def write_labels(timestamps, labels, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "label"])
        for ts, lab in zip(timestamps, labels):
            w.writerow([repr(float(ts)), int(lab)])


def read_labels(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["timestamp", "label"]:
            raise ValueError(f"{path}: expected header timestamp,label")
        rows = [r for r in reader if r]
    return np.array([float(r[0]) for r in rows]), np.array([int(r[1]) for r in rows], dtype=np.int64)
