"""Mini-batch training over random contiguous windows."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .data import DistributionSeries
from .model import SornModel, TrainConfig

__all__ = ["Adam", "valid_window_starts", "train", "TrainingError"]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    """Adaptive moment estimation with the usual defaults."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)


def valid_window_starts(T: int, W: int, missing=None) -> np.ndarray:
    """Start indices of length-``W`` windows that contain no missing slot."""
    if T < W:
        raise ValueError(f"series length {T} is shorter than the window length {W}")
    starts = np.arange(T - W + 1)
    if missing is None or not np.any(missing):
        return starts
    bad = np.concatenate([[0], np.cumsum(np.asarray(missing, dtype=int))])
    return starts[(bad[starts + W] - bad[starts]) == 0]


def _as_matrix(series) -> tuple[np.ndarray, np.ndarray | None, object]:
    if isinstance(series, DistributionSeries):
        if not series.normalized:
            raise ValueError("training expects a normalized series; call normalize() first")
        return series.proportions, series.missing, series.scheme
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x, None, None


def train(series, config: TrainConfig | None = None, *, scheme=None,
          on_epoch: Callable[[int, float], None] | None = None) -> SornModel:
    """Fit gate widths, transport logits and the trust gate on ``series``.

    ``series`` is a normalized :class:`DistributionSeries` or a raw ``(T, D)``
    array (used for signal experiments). Each epoch visits every valid
    window once in a seeded random order, ``batch_size`` windows per step.
    The per-epoch mean loss is recorded in ``model.loss_trace``.
    """
    config = config or TrainConfig()
    x, missing, series_scheme = _as_matrix(series)
    scheme = scheme if scheme is not None else series_scheme
    T, D = x.shape
    W = config.window_length
    starts = valid_window_starts(T, W, missing)
    if starts.size == 0:
        raise ValueError("no window free of missing slots")
    model = SornModel.init(config, D, scheme)
    cost = model.cost
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    offsets = np.arange(W)
    trace: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(starts)
        total, n = 0.0, 0
        for b, lo in enumerate(range(0, order.size, config.batch_size)):
            batch = order[lo:lo + config.batch_size]
            fp = model.forward(x[batch[:, None] + offsets], cost)
            value = fp.loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch {b} "
                    f"(window starts {batch[:5].tolist()}{'...' if batch.size > 5 else ''}); "
                    f"params: " + ", ".join(f"{p.name}={np.round(p.value, 4).tolist()}" for p in params
                                            if p.value.size == 1))
            if params:
                opt.zero_grad()
                ad.backward(fp.loss)
                opt.step()
            total += value * batch.size
            n += batch.size
        trace.append(total / n)
        log.debug("epoch %d loss %.6g", epoch, trace[-1])
        if on_epoch is not None:
            on_epoch(epoch, trace[-1])
        k = config.early_stop_patience
        if len(trace) > k and trace[-k - 1] - min(trace[-k:]) < config.early_stop_tol:
            break
    model.loss_trace = trace
    return model
