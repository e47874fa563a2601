"""Skimming attention: gated raw-patch attention layers stacked on residuals.

Series inside the model use a ``(batch, D, W)`` layout so every dimension is
attended independently. For slot ``i`` the query and key are the ``p``
slots preceding it (left-padded by replicating the first slot) and the value
is slot ``i`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "extend_windows",
    "patch_selector",
    "gate_curve",
    "LayerOutput",
    "StackOutput",
    "layer_forward",
    "stack_forward",
]


def extend_windows(x: np.ndarray, p: int) -> np.ndarray:
    """Sliding windows of length ``p + 1`` with stride 1 and edge-replicated left padding.

    Returns an array of shape ``(T, p + 1, D)`` where window ``t`` holds slots
    ``t - p .. t``.
    """
    if p < 1:
        raise ValueError(f"patch size must be >= 1, got {p}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if T < 1:
        raise ValueError("series must have at least one slot")
    idx = np.maximum(np.arange(T)[:, None] + np.arange(-p, 1)[None, :], 0)
    return x[idx]


def patch_selector(W: int, p: int) -> np.ndarray:
    """Constant 0/1 matrix ``S`` with ``(x @ S).reshape(W, p) == extend_windows(x, p)[:, :p]``."""
    S = np.zeros((W, W * p))
    for i in range(W):
        for k in range(p):
            S[max(i - p + k, 0), i * p + k] = 1.0
    return S


def gate_curve(sigma, W: int) -> Tensor:
    """``G[i, j] = 1 - exp(-(i - j)^2 / sigma^2)`` as a differentiable ``W x W`` tensor."""
    lag2 = (np.arange(W)[:, None] - np.arange(W)[None, :]) ** 2.0
    sigma = ad.constant(sigma)
    return ad.sub(np.ones((W, W)), ad.exp(ad.neg(ad.div(lag2, ad.square(sigma)))))


@dataclass
class LayerOutput:
    output: Tensor    # reconstruction of this layer, (B, D, W)
    logits: Tensor    # raw attention logits q k^T, (B, D, W, W)
    weights: Tensor   # softmax(logits * G), (B, D, W, W)


@dataclass
class StackOutput:
    reconstruction: Tensor
    layers: list[LayerOutput]
    residuals: list[Tensor]

    @property
    def first_logits(self) -> Tensor:
        return self.layers[0].logits


def layer_forward(x: Tensor, p: int, sigma=None, selector: np.ndarray | None = None) -> LayerOutput:
    """One attention layer over ``x`` of shape ``(B, D, W)``.

    ``sigma=None`` disables the gate (plain attention, every slot may attend
    to itself).
    """
    x = ad.constant(x)
    if x.ndim != 3:
        raise ad.ShapeError(f"layer_forward expects (B, D, W), got {x.shape}")
    B, D, W = x.shape
    S = patch_selector(W, p) if selector is None else selector
    patches = ad.reshape(ad.matmul(x, ad.broadcast_to(S, (B, W, W * p))), (B, D, W, p))
    logits = ad.matmul(patches, ad.transpose(patches))
    gated = logits if sigma is None else ad.mul(logits, ad.broadcast_to(gate_curve(sigma, W), logits.shape))
    weights = ad.row_softmax(gated)
    out = ad.reshape(ad.matmul(weights, ad.reshape(x, (B, D, W, 1))), (B, D, W))
    return LayerOutput(out, logits, weights)


def stack_forward(x: Tensor, p: int, sigmas) -> StackOutput:
    """Run layers in sequence, each on the residual left by the previous ones.

    ``sigmas`` holds one gate width per layer; an entry of None makes that
    layer ungated. The reconstruction is the sum of all layer outputs, so
    ``x - reconstruction`` equals the final residual.
    """
    x = ad.constant(x)
    B, D, W = x.shape
    S = patch_selector(W, p)
    residual = x
    layers, residuals = [], [x]
    total = None
    for sigma in sigmas:
        out = layer_forward(residual, p, sigma, selector=S)
        layers.append(out)
        total = out.output if total is None else ad.add(total, out.output)
        residual = ad.sub(residual, out.output)
        residuals.append(residual)
    if total is None:
        raise ValueError("a stack needs at least one layer")
    return StackOutput(total, layers, residuals)
