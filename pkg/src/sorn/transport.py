"""Learned transport between duration intervals.

A single ``D x D`` logit matrix is column-softmaxed into a plan whose entry
``[i, j]`` is the share of interval ``j``'s mass sent to interval ``i``.
Moving mass toward slower intervals costs the gap between their midpoints;
moving it toward faster ones is free.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import IntervalScheme

__all__ = ["cost_matrix", "normalized_plan", "apply_transport", "transport_cost", "slot_costs"]


def cost_matrix(scheme_or_midpoints) -> np.ndarray:
    """``C[i, j] = M[i] - M[j]`` when ``i > j``, else 0."""
    if isinstance(scheme_or_midpoints, IntervalScheme):
        mids = scheme_or_midpoints.midpoints
    else:
        mids = np.asarray(scheme_or_midpoints, dtype=float)
    if mids.ndim != 1 or mids.size == 0:
        raise ValueError("midpoints must be a non-empty vector")
    if np.any(np.diff(mids) <= 0):
        raise ValueError("midpoints must be strictly increasing")
    return np.tril(mids[:, None] - mids[None, :], k=-1)


def normalized_plan(logits) -> Tensor:
    """Column softmax, so every column of the plan sums to one."""
    return ad.col_softmax(logits)


def apply_transport(plan: Tensor, x: Tensor) -> Tensor:
    """Apply the plan to every slot.

    ``x`` may be a ``(T, D)`` matrix (one distribution per row) or a
    ``(B, D, W)`` batch in model layout.
    """
    plan, x = ad.constant(plan), ad.constant(x)
    D = plan.shape[0]
    if x.ndim == 2:
        _expect(x.shape[1] == D, "apply_transport", plan.shape, x.shape)
        return ad.transpose(ad.matmul(plan, ad.transpose(x)))
    _expect(x.ndim == 3 and x.shape[1] == D, "apply_transport", plan.shape, x.shape)
    return ad.matmul(ad.broadcast_to(plan, (x.shape[0], D, D)), x)


def slot_costs(plan: Tensor, x: Tensor, C: np.ndarray) -> Tensor:
    """Per-slot cost ``sum_ij plan[i, j] * x[t, j] * C[i, j]`` for a ``(B, D, W)`` batch."""
    plan, x = ad.constant(plan), ad.constant(x)
    B, D, W = x.shape
    per_source = ad.sum(ad.mul(plan, C), axis=0)  # cost of moving one unit out of interval j
    row = ad.broadcast_to(ad.reshape(per_source, (1, D)), (B, 1, D))
    return ad.reshape(ad.matmul(row, x), (B, W))


def transport_cost(plan, x_t, C) -> float:
    """Cost of transporting a single distribution ``x_t`` (length ``D``)."""
    plan = np.asarray(ad.constant(plan).value)
    x_t = np.asarray(x_t, dtype=float)
    C = np.asarray(C, dtype=float)
    _expect(plan.shape == C.shape and plan.shape[1] == x_t.shape[0], "transport_cost",
            plan.shape, x_t.shape)
    return float((plan * x_t[None, :] * C).sum())


def _expect(cond, op, *shapes):
    if not cond:
        raise ad.ShapeError(f"{op}: incompatible shapes " + ", ".join(str(s) for s in shapes))
