"""Expectation-gap anomaly scores, thresholding, and point-wise metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "anomaly_score",
    "normalize_rows",
    "ThresholdPolicy",
    "parse_policy",
    "choose_threshold",
    "threshold",
    "best_f1_threshold",
    "evaluate",
    "point_adjust",
    "ScoreReport",
    "write_scores",
    "read_scores",
]

ROW_TOL = 1e-6


def normalize_rows(recon) -> np.ndarray:
    """Rescale reconstructed rows to unit mass (reconstructions are only near-normalized)."""
    r = np.asarray(recon, dtype=float)
    s = r.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("reconstruction has rows with non-positive mass")
    return r / s


def anomaly_score(x, recon, midpoints) -> np.ndarray:
    """Expected duration under ``x`` minus expected duration under ``recon``, per slot.

    Positive scores mean the observed tasks are slower than reconstructed.
    Both inputs must be row-normalized.
    """
    x = np.asarray(x, dtype=float)
    recon = np.asarray(recon, dtype=float)
    mids = np.asarray(midpoints, dtype=float)
    if x.shape != recon.shape or x.ndim != 2 or x.shape[1] != mids.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, reconstruction {recon.shape}, midpoints {mids.shape}")
    for name, m in (("x", x), ("reconstruction", recon)):
        dev = np.abs(m.sum(axis=1) - 1.0)
        if dev.size and dev.max() > ROW_TOL:
            raise ValueError(f"{name} rows are not normalized (max deviation {dev.max():.3g})")
    return (x - recon) @ mids


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str              # "quantile" | "fixed" | "best_f1"
    value: float | None = None

    def __str__(self) -> str:
        return self.kind if self.value is None else f"{self.kind}:{self.value:g}"


def parse_policy(text) -> ThresholdPolicy:
    if isinstance(text, ThresholdPolicy):
        return text
    kind, _, arg = str(text).partition(":")
    kind = kind.strip().lower().replace("-", "_")
    if kind == "best_f1":
        return ThresholdPolicy("best_f1")
    if kind in ("quantile", "fixed"):
        if not arg:
            raise ValueError(f"policy {kind} needs a value, e.g. {kind}:0.99")
        v = float(arg)
        if kind == "quantile" and not 0 <= v <= 1:
            raise ValueError("quantile must lie in [0, 1]")
        return ThresholdPolicy(kind, v)
    raise ValueError(f"unknown threshold policy {text!r}")


def best_f1_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximizing point-wise F1 over all cut points (evaluation only).

    Predictions are ``score > threshold``, so candidate cuts are every distinct
    score plus one just below the minimum (predict everything).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if s.size == 0:
        raise ValueError("no scores")
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    tp = np.cumsum(yy)
    k = np.arange(1, s.size + 1)
    # only the last index of a run of tied scores is a realizable cut
    last = np.r_[ss[1:] != ss[:-1], True]
    pos = y.sum()
    f1 = np.where(last, 2 * tp / (k + pos), -1.0)
    i = int(np.argmax(f1))
    below = ss[i + 1] if i + 1 < s.size else ss[i] - max(1.0, abs(ss[i]))
    return float(below), float(max(f1[i], 0.0))


def choose_threshold(policy, train_scores=None, scores=None, labels=None) -> float:
    policy = parse_policy(policy)
    if policy.kind == "fixed":
        return float(policy.value)
    if policy.kind == "quantile":
        if train_scores is None or len(train_scores) == 0:
            raise ValueError("quantile policy needs training-set scores")
        return float(np.quantile(np.asarray(train_scores, dtype=float), policy.value))
    if scores is None or labels is None:
        raise ValueError("best_f1 policy needs scores and labels")
    return best_f1_threshold(scores, labels)[0]


def threshold(scores, policy, train_scores=None, labels=None) -> np.ndarray:
    """Binary predictions ``score > threshold`` (one-sided: only slowdowns flag)."""
    th = choose_threshold(policy, train_scores, scores, labels)
    return (np.asarray(scores, dtype=float) > th).astype(np.int64)


def point_adjust(pred, labels) -> np.ndarray:
    """Mark a whole labeled segment detected when any slot inside it is predicted."""
    pred = np.asarray(pred).astype(bool).copy()
    y = np.asarray(labels).astype(bool)
    i, n = 0, y.size
    while i < n:
        if y[i]:
            j = i
            while j < n and y[j]:
                j += 1
            if pred[i:j].any():
                pred[i:j] = True
            i = j
        else:
            i += 1
    return pred.astype(np.int64)


def evaluate(pred, labels, adjust: bool = False) -> tuple[float, float, float]:
    pred = np.asarray(pred).astype(bool)
    y = np.asarray(labels).astype(bool)
    if pred.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    if adjust:
        pred = point_adjust(pred, y).astype(bool)
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class ScoreReport:
    scores: np.ndarray
    threshold: float
    policy: str
    predictions: np.ndarray
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    point_adjust: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, scores, policy, train_scores=None, labels=None, adjust=False) -> "ScoreReport":
        th = choose_threshold(policy, train_scores, scores, labels)
        pred = (np.asarray(scores) > th).astype(np.int64)
        rep = cls(np.asarray(scores, dtype=float), th, str(parse_policy(policy)), pred, point_adjust=adjust)
        if labels is not None:
            rep.precision, rep.recall, rep.f1 = evaluate(pred, labels, adjust)
        return rep

    def metrics(self) -> dict:
        prov = {
            "quantile": "quantile of training-set scores",
            "fixed": "fixed value",
            "best_f1": "best F1 over all cut points on the evaluated labels (evaluation only)",
        }[self.policy.split(":")[0]]
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "threshold_policy": self.policy,
            "threshold_provenance": prov,
            "point_adjust": self.point_adjust,
            "n_slots": int(self.scores.size),
            "n_predicted": int(self.predictions.sum()),
            **self.extra,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.metrics(), indent=2))


def write_scores(path, timestamps, scores, predictions) -> None:
    with open(path, "w") as fh:
        fh.write("timestamp,score,prediction\n")
        for ts, s, p in zip(timestamps, scores, predictions):
            fh.write(f"{float(ts)!r},{float(s)!r},{int(p)}\n")


def read_scores(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "timestamp,score,prediction":
        raise ValueError(f"{path}: expected header timestamp,score,prediction")
    vals = [r.split(",") for r in rows[1:] if r.strip()]
    ts = np.array([float(v[0]) for v in vals])
    sc = np.array([float(v[1]) for v in vals])
    pr = np.array([int(v[2]) for v in vals], dtype=np.int64)
    return ts, sc, pr
