"""Shared-trunk network with expression, AU and valence/arousal heads.

A small fully connected trunk (tanh between layers, inverted dropout at
train time) feeds three linear heads off the same feature space: 7
expression logits (softmax), 17 AU logits (sigmoid) and 2 unbounded
valence/arousal outputs.  Forward/backward are hand-written numpy with
exact analytic gradients; :func:`gradient_check` verifies them against
central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .relatedness import N_AUS, N_EMOTIONS

N_VA = 2


@dataclass(frozen=True)
class NetworkConfig:
    """Trunk and head shape; heads default to 7 expressions, 17 AUs, 2 VA."""

    input_dim: int = 32
    hidden_dims: tuple[int, ...] = (64, 64)
    dropout_rate: float = 0.5
    seed: int = 0
    head_dims: tuple[int, int, int] = (N_EMOTIONS, N_AUS, 2)

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if len(self.hidden_dims) == 0:
            raise ValueError("hidden_dims must be non-empty")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if len(self.head_dims) != 3 or any(d < 1 for d in self.head_dims):
            raise ValueError("head_dims must be three positive sizes")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "head_dims", tuple(int(h) for h in self.head_dims))


@dataclass
class PredictionTriple:
    """Per-sample outputs: emotion simplex, AU sigmoids, raw valence/arousal."""

    emo_probs: np.ndarray  # (n, 7), rows sum to 1
    au_probs: np.ndarray   # (n, 17), in (0, 1)
    va: np.ndarray         # (n, 2), unbounded


@dataclass
class ForwardCache:
    """Everything backward needs from the matching forward call."""

    x: np.ndarray
    layer_inputs: list[np.ndarray]
    activations: list[np.ndarray]
    dropout_masks: list[np.ndarray | None]
    features: np.ndarray
    emo_probs: np.ndarray
    au_probs: np.ndarray
    train_mode: bool = False


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_vjp(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient on softmax outputs back to the logits."""
    inner = np.sum(d_probs * probs, axis=-1, keepdims=True)
    return probs * (d_probs - inner)


def sigmoid_vjp(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient on sigmoid outputs back to the logits."""
    return d_probs * probs * (1.0 - probs)


class Network:
    """Trainable parameter set: trunk layers plus the three output heads.

    Parameters live in ``weights``/``biases`` lists ordered trunk first,
    then the emotion, AU and VA heads.  ``grad_weights``/``grad_biases``
    mirror them and accumulate across backward calls until
    :meth:`zero_grads`.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        dims = [config.input_dim, *config.hidden_dims]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            self.weights.append(_glorot(rng, fan_in, fan_out))
            self.biases.append(np.zeros(fan_out))
        top = dims[-1]
        for head_dim in config.head_dims:
            self.weights.append(_glorot(rng, top, head_dim))
            self.biases.append(np.zeros(head_dim))
        self.grad_weights = [np.zeros_like(w) for w in self.weights]
        self.grad_biases = [np.zeros_like(b) for b in self.biases]
        self._dropout_rng = np.random.default_rng(rng.integers(2**63))

    @property
    def n_trunk_layers(self) -> int:
        return len(self.config.hidden_dims)

    def _heads(self) -> tuple[int, int, int]:
        k = self.n_trunk_layers
        return k, k + 1, k + 2  # emo, au, va indices into weights/biases

    def forward(
        self, x: np.ndarray, train_mode: bool = False
    ) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], PredictionTriple, ForwardCache]:
        """Run the network; returns (logits triple, predictions, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.config.input_dim}), got {x.shape}"
            )
        if not np.isfinite(x).all():
            raise ValueError("input batch contains non-finite values")

        h = x
        layer_inputs, activations, masks = [], [], []
        rate = self.config.dropout_rate
        for layer in range(self.n_trunk_layers):
            layer_inputs.append(h)
            a = np.tanh(h @ self.weights[layer] + self.biases[layer])
            activations.append(a)
            if train_mode and rate > 0.0:
                mask = (self._dropout_rng.random(a.shape) >= rate) / (1.0 - rate)
                h = a * mask
            else:
                mask = None
                h = a
            masks.append(mask)

        i_emo, i_au, i_va = self._heads()
        emo_logits = h @ self.weights[i_emo] + self.biases[i_emo]
        au_logits = h @ self.weights[i_au] + self.biases[i_au]
        va = h @ self.weights[i_va] + self.biases[i_va]
        emo_probs = softmax(emo_logits)
        au_probs = sigmoid(au_logits)
        preds = PredictionTriple(emo_probs=emo_probs, au_probs=au_probs, va=va)
        cache = ForwardCache(
            x=x,
            layer_inputs=layer_inputs,
            activations=activations,
            dropout_masks=masks,
            features=h,
            emo_probs=emo_probs,
            au_probs=au_probs,
            train_mode=train_mode,
        )
        return (emo_logits, au_logits, va), preds, cache

    def backward(
        self,
        cache: ForwardCache,
        d_emo_logits: np.ndarray,
        d_au_logits: np.ndarray,
        d_va: np.ndarray,
    ) -> None:
        """Accumulate parameter gradients for the given upstream gradients."""
        n = cache.x.shape[0]
        dims = self.config.head_dims
        for name, g, dim in (
            ("d_emo_logits", d_emo_logits, dims[0]),
            ("d_au_logits", d_au_logits, dims[1]),
            ("d_va", d_va, dims[2]),
        ):
            if g.shape != (n, dim):
                raise ValueError(f"{name} has shape {g.shape}, expected {(n, dim)}")

        i_emo, i_au, i_va = self._heads()
        h = cache.features
        d_h = np.zeros_like(h)
        for idx, g in ((i_emo, d_emo_logits), (i_au, d_au_logits), (i_va, d_va)):
            self.grad_weights[idx] += h.T @ g
            self.grad_biases[idx] += g.sum(axis=0)
            d_h += g @ self.weights[idx].T

        for layer in reversed(range(self.n_trunk_layers)):
            mask = cache.dropout_masks[layer]
            if mask is not None:
                d_h = d_h * mask
            a = cache.activations[layer]
            d_pre = d_h * (1.0 - a * a)  # tanh'
            self.grad_weights[layer] += cache.layer_inputs[layer].T @ d_pre
            self.grad_biases[layer] += d_pre.sum(axis=0)
            d_h = d_pre @ self.weights[layer].T

    def zero_grads(self) -> None:
        for g in self.grad_weights:
            g[:] = 0.0
        for g in self.grad_biases:
            g[:] = 0.0

    # Flat views, used by the optimizer, the gradient checker and checkpoints.

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0
        for w in self.weights:
            w[:] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[:] = flat[pos : pos + b.size]
            pos += b.size

    def get_flat_grads(self) -> np.ndarray:
        return np.concatenate(
            [g.ravel() for g in self.grad_weights] + [g.ravel() for g in self.grad_biases]
        )

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def save_network(net: Network, path: str | Path) -> None:
    """Checkpoint config plus parameters; values round-trip bit-exactly."""
    cfg = net.config
    config_json = json.dumps(
        {
            "input_dim": cfg.input_dim,
            "hidden_dims": list(cfg.hidden_dims),
            "dropout_rate": cfg.dropout_rate,
            "seed": cfg.seed,
            "head_dims": list(cfg.head_dims),
        }
    )
    np.savez(path, format_version=1, config=config_json, params=net.get_flat_params())


def load_network(path: str | Path) -> Network:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        raw = json.loads(str(data["config"]))
        params = np.asarray(data["params"], dtype=np.float64)
    cfg = NetworkConfig(
        input_dim=int(raw["input_dim"]),
        hidden_dims=tuple(raw["hidden_dims"]),
        dropout_rate=float(raw["dropout_rate"]),
        seed=int(raw["seed"]),
        head_dims=tuple(raw["head_dims"]),
    )
    net = Network(cfg)
    net.set_flat_params(params)
    return net


def gradient_check(
    net: Network,
    batch: np.ndarray,
    loss_and_grad: Callable[[Network, np.ndarray], tuple[float, np.ndarray]],
    n_coords: int = 200,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    ``loss_and_grad(net, batch)`` must return the scalar loss and the flat
    analytic gradient, and must be deterministic (dropout disabled); a
    repeated evaluation that differs raises.  A random subset of at least
    ``n_coords`` parameter coordinates is probed.
    """
    loss0, grad = loss_and_grad(net, batch)
    loss1, _ = loss_and_grad(net, batch)
    if loss0 != loss1:
        raise ValueError(
            "loss closure is not deterministic (two evaluations differ); "
            "disable dropout before gradient checking"
        )
    rng = np.random.default_rng(seed)
    n_coords = min(max(n_coords, 1), net.n_params)
    coords = rng.choice(net.n_params, size=n_coords, replace=False)
    params = net.get_flat_params()
    max_rel = 0.0
    try:
        for c in coords:
            orig = params[c]
            params[c] = orig + h
            net.set_flat_params(params)
            lp, _ = loss_and_grad(net, batch)
            params[c] = orig - h
            net.set_flat_params(params)
            lm, _ = loss_and_grad(net, batch)
            params[c] = orig
            numeric = (lp - lm) / (2.0 * h)
            denom = max(abs(numeric) + abs(grad[c]), 1e-8)
            max_rel = max(max_rel, abs(numeric - grad[c]) / denom)
    finally:
        net.set_flat_params(params)
    return max_rel
