"""The reconstruction model: skimming stack, transport layer, and picky loss."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .attention import StackOutput, gate_curve, stack_forward
from .autodiff import Parameter, Tensor
from .data import IntervalScheme
from .transport import apply_transport, cost_matrix, normalized_plan, slot_costs

__all__ = [
    "TrainConfig",
    "DATASET_PRESETS",
    "SornModel",
    "ForwardPass",
    "trust_weights",
    "picky_loss",
    "centered_starts",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1

# (skimming layers, patch size) reported per dataset
DATASET_PRESETS = {"ali1": (10, 2), "ali2": (6, 2), "mustang": (6, 2), "sync": (6, 10)}


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 50
    window_length: int = 20
    skimming_layers: int = 2
    patch_size: int = 2
    lam: float = 0.5
    seed: int = 0
    disable_skimming: bool = False
    disable_ot: bool = False
    disable_picky: bool = False
    threshold_policy: str = "quantile:0.99"
    sigma_init: float | None = None      # None -> 2 * patch_size
    sigma_hat_init: float | None = None  # None -> 2 * patch_size
    ot_init: float = 5.0
    early_stop_tol: float = 1e-5
    early_stop_patience: int = 5

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "window_length",
                     "skimming_layers", "patch_size", "ot_init", "early_stop_patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        for name in ("sigma_init", "sigma_hat_init"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.window_length < 2:
            raise ValueError("window_length must be at least 2")

    @property
    def sigma0(self) -> float:
        return float(self.sigma_init) if self.sigma_init is not None else 2.0 * self.patch_size

    @property
    def sigma_hat0(self) -> float:
        return float(self.sigma_hat_init) if self.sigma_hat_init is not None else 2.0 * self.patch_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def for_dataset(cls, name: str, **overrides) -> "TrainConfig":
        layers, patch = DATASET_PRESETS[name.lower()]
        return cls(skimming_layers=layers, patch_size=patch, **overrides)


def trust_weights(first_logits: Tensor, sigma_hat) -> Tensor:
    """Softmax over slots of the gated row sums of the dimension-averaged logits.

    ``first_logits`` has shape ``(B, D, W, W)``; the result is ``(B, W)`` and
    sums to one over each window.
    """
    A = ad.constant(first_logits)
    B, D, W, _ = A.shape
    mean = ad.scale(ad.sum(A, axis=1), 1.0 / D)
    gated = ad.mul(mean, ad.broadcast_to(gate_curve(sigma_hat, W), (B, W, W)))
    return ad.softmax(ad.sum(gated, axis=-1), axis=-1)


def picky_loss(recon: Tensor, x: Tensor, weights: Tensor, costs: Tensor | None, lam: float) -> Tensor:
    """Trust-weighted L2 reconstruction error plus ``lam`` times the transport cost.

    All per-slot terms are ``(B, W)``; the result is averaged over the batch.
    ``recon`` and ``x`` are ``(B, D, W)``.
    """
    recon, x, weights = ad.constant(recon), ad.constant(x), ad.constant(weights)
    per_slot = ad.l2norm(ad.sub(recon, x), axis=1)
    if costs is not None and lam != 0:
        per_slot = ad.add(per_slot, ad.scale(costs, lam))
    return ad.scale(ad.sum(ad.mul(weights, per_slot)), 1.0 / recon.shape[0])


@dataclass
class ForwardPass:
    x: Tensor
    stack: StackOutput
    skimmed: Tensor          # sum of layer outputs
    reconstruction: Tensor   # after transport
    weights: Tensor          # trust weights (B, W)
    costs: Tensor | None
    loss: Tensor


def centered_starts(T: int, W: int) -> np.ndarray:
    """Start of the length-``W`` window centred on each slot, clipped to the series."""
    return np.clip(np.arange(T) - W // 2, 0, max(T - W, 0))


@dataclass
class SornModel:
    config: TrainConfig
    scheme: IntervalScheme | None
    dim: int
    sigmas: list[Parameter] = field(default_factory=list)
    sigma_hat: Parameter | None = None
    plan_logits: Parameter | None = None
    loss_trace: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)   # free-form run facts (e.g. training slots)

    @classmethod
    def init(cls, config: TrainConfig, dim: int, scheme: IntervalScheme | None = None) -> "SornModel":
        if scheme is not None and scheme.dim != dim:
            raise ValueError(f"scheme dimension {scheme.dim} != data dimension {dim}")
        n_gated = 0 if config.disable_skimming else config.skimming_layers
        sigmas = [Parameter(config.sigma0, f"sigma_{l}") for l in range(n_gated)]
        return cls(config, scheme, dim, sigmas,
                   Parameter(config.sigma_hat0, "sigma_hat"),
                   Parameter(config.ot_init * np.eye(dim), "P_logits"))

    @property
    def cost(self) -> np.ndarray:
        if self.scheme is None:
            return np.zeros((self.dim, self.dim))
        return cost_matrix(self.scheme)

    def parameters(self) -> list[Parameter]:
        params = list(self.sigmas)
        if not self.config.disable_picky:
            params.append(self.sigma_hat)
        if not self.config.disable_ot:
            params.append(self.plan_logits)
        return params

    def plan(self) -> np.ndarray:
        return normalized_plan(self.plan_logits.value).value

    def forward(self, windows, cost: np.ndarray | None = None) -> ForwardPass:
        """Forward pass over a ``(B, W, D)`` batch of windows."""
        arr = np.asarray(windows, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.shape[-1] != self.dim:
            raise ad.ShapeError(f"windows have D={arr.shape[-1]}, model expects {self.dim}")
        cfg = self.config
        x = ad.constant(np.ascontiguousarray(np.swapaxes(arr, 1, 2)))
        gates = [None] if cfg.disable_skimming else self.sigmas
        stack = stack_forward(x, cfg.patch_size, gates)
        skimmed = stack.reconstruction
        if cfg.disable_ot:
            recon, costs = skimmed, None
        else:
            plan = normalized_plan(self.plan_logits)
            recon = apply_transport(plan, skimmed)
            costs = slot_costs(plan, skimmed, self.cost if cost is None else cost)
        B, _, W = x.shape
        if cfg.disable_picky:
            weights = ad.constant(np.full((B, W), 1.0 / W))
        else:
            weights = trust_weights(stack.first_logits, self.sigma_hat)
        loss = picky_loss(recon, x, weights, costs, cfg.lam)
        return ForwardPass(x, stack, skimmed, recon, weights, costs, loss)

    def reconstruct(self, series, chunk: int = 256) -> dict[str, np.ndarray]:
        """Reconstruct every slot of a ``(T, D)`` series from the window centred on it.

        Returns ``reconstruction`` (after transport), ``skimmed`` (before),
        ``layers`` (``L x T x D``) and ``trust`` (per-slot trust weight scaled so
        that a uniform window gives 1).
        """
        x = np.asarray(series, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        T = x.shape[0]
        W = min(self.config.window_length, T)
        starts = centered_starts(T, W)
        pos = np.arange(T) - starts
        cost = self.cost
        out = {k: np.empty((T, self.dim)) for k in ("reconstruction", "skimmed")}
        n_layers = 1 if self.config.disable_skimming else len(self.sigmas)
        layers = np.empty((n_layers, T, self.dim))
        trust = np.empty(T)
        for lo in range(0, T, chunk):
            idx = np.arange(lo, min(lo + chunk, T))
            win = x[starts[idx][:, None] + np.arange(W)[None, :]]
            fp = self.forward(win, cost)
            sel = (np.arange(len(idx)), slice(None), pos[idx])
            out["reconstruction"][idx] = fp.reconstruction.value[sel]
            out["skimmed"][idx] = fp.skimmed.value[sel]
            for l, layer in enumerate(fp.stack.layers):
                layers[l, idx] = layer.output.value[sel]
            trust[idx] = fp.weights.value[np.arange(len(idx)), pos[idx]] * W
        out["layers"] = layers
        out["trust"] = trust
        return out

    # ------------------------------------------------------------ checkpoint

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "scheme": None if self.scheme is None else self.scheme.to_dict(),
            "dim": self.dim,
            "config": self.config.to_dict(),
            "sigma": [float(s.value) for s in self.sigmas],
            "sigma_hat": float(self.sigma_hat.value),
            "P_logits": self.plan_logits.value.tolist(),
            "P_normalized": self.plan().tolist(),
            "C": self.cost.tolist(),
            "loss_trace": [float(v) for v in self.loss_trace],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SornModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {d.get('format_version')!r}")
        config = TrainConfig.from_dict(d["config"])
        scheme = None if d["scheme"] is None else IntervalScheme.from_dict(d["scheme"])
        logits = np.asarray(d["P_logits"], dtype=float)
        return cls(config, scheme, int(d.get("dim", logits.shape[0])),
                   [Parameter(v, f"sigma_{l}") for l, v in enumerate(d["sigma"])],
                   Parameter(d["sigma_hat"], "sigma_hat"),
                   Parameter(logits, "P_logits"),
                   list(d["loss_trace"]),
                   dict(d.get("meta", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SornModel":
        return cls.from_dict(json.loads(Path(path).read_text()))
