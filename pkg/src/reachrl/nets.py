"""Minimal feed-forward network machinery in plain numpy.

Hand-derived reverse-mode gradients for an MLP (tanh hidden layers, identity
output), the Adam optimizer, and a diagonal-Gaussian policy head with a
state-independent, learnable log standard deviation.  Everything runs in
float64 so gradient checks and determinism stay crisp.

Forward passes never mutate parameters; training mutates a locally-owned
copy, so read-only inference may be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class Mlp:
    """Fully-connected net; weight k has shape (in_k, out_k), row-major."""

    layer_shapes: list[tuple[int, int]]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        for (i, o), w, b in zip(self.layer_shapes, self.weights, self.biases):
            if w.shape != (i, o) or b.shape != (o,):
                raise ValidationError(
                    f"parameter shapes {w.shape}/{b.shape} do not match layer ({i}, {o})"
                )
        for (_, o1), (i2, _) in zip(self.layer_shapes, self.layer_shapes[1:]):
            if o1 != i2:
                raise ValidationError(f"layer shapes do not chain: {self.layer_shapes}")

    @property
    def in_dim(self) -> int:
        return self.layer_shapes[0][0]

    @property
    def out_dim(self) -> int:
        return self.layer_shapes[-1][1]

    def params(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)


def mlp_init(sizes: list[int], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform initialised MLP for the given layer sizes."""
    weights, biases, shapes = [], [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        shapes.append((fan_in, fan_out))
    return Mlp(layer_shapes=shapes, weights=weights, biases=biases)


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValidationError(f"{what} length {x.shape[0]} != expected {dim}")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == dim:
        return x, False
    raise ValidationError(f"{what} shape {x.shape} incompatible with dimension {dim}")


def mlp_forward_cached(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass returning the output and all post-activation layers."""
    h, _ = _as_batch(x, net.in_dim, "input")
    cache = [h]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k != last:
            h = np.tanh(h)
        cache.append(h)
    return h, cache


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Affine + tanh composition; identity on the output layer."""
    _, squeeze = _as_batch(x, net.in_dim, "input")
    out, _ = mlp_forward_cached(net, x)
    return out[0] if squeeze else out


def mlp_backward_cached(
    net: Mlp, cache: list[np.ndarray], output_grad: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Backprop through a cached forward pass.

    ``output_grad`` is d(scalar loss)/d(output), summed over the batch by the
    caller's convention.  Returns (weight_grads, bias_grads, input_grad).
    """
    g = np.asarray(output_grad, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache[-1].shape:
        raise ValidationError(
            f"output_grad shape {g.shape} != forward output shape {cache[-1].shape}"
        )
    n_layers = len(net.weights)
    weight_grads: list[np.ndarray] = [None] * n_layers
    bias_grads: list[np.ndarray] = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        if k != n_layers - 1:
            g = g * (1.0 - cache[k + 1] ** 2)  # tanh'
        weight_grads[k] = cache[k].T @ g
        bias_grads[k] = g.sum(axis=0)
        g = g @ net.weights[k].T
    return weight_grads, bias_grads, g


def mlp_backward(
    net: Mlp, x: np.ndarray, output_grad: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Exact gradients of output . output_grad w.r.t. parameters and input."""
    _, squeeze = _as_batch(x, net.in_dim, "input")
    _, cache = mlp_forward_cached(net, x)
    wg, bg, gin = mlp_backward_cached(net, cache, output_grad)
    return wg, bg, (gin[0] if squeeze else gin)


@dataclass
class AdamState:
    """Adam moments for one parameter list, plus the shared hyperparameters."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update with bias correction; params are updated in place."""
    if len(params) != len(grads):
        raise ValidationError(f"{len(params)} params but {len(grads)} grads")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient in Adam step")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so the global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


@dataclass
class GaussianHead:
    """State-independent log standard deviations, clamped to a safe range."""

    log_std: np.ndarray

    def clamp(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over action dimensions.

    Accepts vectors (returns a scalar) or batches (returns a vector).
    """
    mean = np.asarray(mean, dtype=float)
    action = np.asarray(action, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    z = (action - mean) * np.exp(-log_std)
    per_dim = -0.5 * z**2 - log_std - _HALF_LOG_2PI
    summed = per_dim.sum(axis=-1)
    return float(summed) if summed.ndim == 0 else summed


def gaussian_sample(
    mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray | float]:
    """Draw action = mean + std * z and its log probability."""
    mean = np.asarray(mean, dtype=float)
    std = np.exp(np.asarray(log_std, dtype=float))
    z = rng.standard_normal(mean.shape)
    action = mean + std * z
    return action, gaussian_log_prob(mean, log_std, action)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of the diagonal Gaussian: sum(log_std + 0.5 ln(2 pi e))."""
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(log_std + 0.5 * math.log(2.0 * math.pi * math.e)))


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "layer_shapes": [list(s) for s in net.layer_shapes],
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    shapes = [tuple(s) for s in doc["layer_shapes"]]
    weights = [
        np.asarray(w, dtype=float).reshape(shape) for w, shape in zip(doc["weights"], shapes)
    ]
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return Mlp(layer_shapes=shapes, weights=weights, biases=biases)
