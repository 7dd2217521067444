"""Dueling categorical network in numpy, with hand-written backprop and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import NumericalError


@dataclass
class NetworkParams:
    """Parameter arrays in a fixed order: trunk layers, value head, advantage head."""

    arrays: dict[str, np.ndarray]
    n_actions: int
    n_atoms: int

    @property
    def names(self) -> list[str]:
        return list(self.arrays)

    @property
    def n_trunk(self) -> int:
        return sum(1 for k in self.arrays if k.startswith("trunk") and k.endswith(".w"))

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(k, tuple(v.shape)) for k, v in self.arrays.items()]

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()},
                             self.n_actions, self.n_atoms)

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def __getitem__(self, key):
        return self.arrays[key]


def init_params(obs_dim: int, n_actions: int, n_atoms: int = 51,
                hidden: tuple[int, ...] = (512, 512, 512),
                rng: np.random.Generator | None = None,
                zero_heads: bool = True) -> NetworkParams:
    """Fan-in scaled uniform trunk; heads zeroed so the initial policy is uniform."""
    rng = rng or np.random.default_rng(0)
    arrays = {}
    fan_in = obs_dim
    for i, width in enumerate(hidden):
        bound = 1.0 / np.sqrt(fan_in)
        arrays[f"trunk{i}.w"] = rng.uniform(-bound, bound, size=(fan_in, width))
        arrays[f"trunk{i}.b"] = rng.uniform(-bound, bound, size=width)
        fan_in = width
    for name, out in (("value", n_atoms), ("adv", n_actions * n_atoms)):
        if zero_heads:
            arrays[f"{name}.w"] = np.zeros((fan_in, out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            arrays[f"{name}.w"] = rng.uniform(-bound, bound, size=(fan_in, out))
        arrays[f"{name}.b"] = np.zeros(out)
    return NetworkParams(arrays, n_actions, n_atoms)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each trunk layer
    pre: list[np.ndarray] = field(default_factory=list)     # pre-activations
    features: np.ndarray | None = None
    probs: np.ndarray | None = None


def _check(x, layer):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite activations at layer {layer}")


def forward_logits(params: NetworkParams, obs: np.ndarray, cache: ForwardCache | None = None):
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    for i in range(params.n_trunk):
        if cache is not None:
            cache.inputs.append(x)
        z = x @ params[f"trunk{i}.w"] + params[f"trunk{i}.b"]
        _check(z, i)
        if cache is not None:
            cache.pre.append(z)
        x = np.maximum(z, 0.0)
    if cache is not None:
        cache.features = x
    value = x @ params["value.w"] + params["value.b"]
    adv = (x @ params["adv.w"] + params["adv.b"]).reshape(-1, params.n_actions, params.n_atoms)
    logits = value[:, None, :] + adv - adv.mean(axis=1, keepdims=True)
    _check(logits, params.n_trunk)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: NetworkParams, obs: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
    """Per-action atom probabilities, shape ``(batch, n_actions, n_atoms)``."""
    probs = softmax(forward_logits(params, obs, cache))
    if cache is not None:
        cache.probs = probs
    return probs


def backward(params: NetworkParams, cache: ForwardCache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient w.r.t. the dueling logits."""
    A = params.n_actions
    g_value = grad_logits.sum(axis=1)
    g_adv = grad_logits - grad_logits.sum(axis=1, keepdims=True) / A
    g_adv = g_adv.reshape(g_adv.shape[0], -1)
    h = cache.features
    grads = {
        "value.w": h.T @ g_value,
        "value.b": g_value.sum(axis=0),
        "adv.w": h.T @ g_adv,
        "adv.b": g_adv.sum(axis=0),
    }
    g_h = g_value @ params["value.w"].T + g_adv @ params["adv.w"].T
    for i in reversed(range(params.n_trunk)):
        g_z = g_h * (cache.pre[i] > 0)
        grads[f"trunk{i}.w"] = cache.inputs[i].T @ g_z
        grads[f"trunk{i}.b"] = g_z.sum(axis=0)
        if i:
            g_h = g_z @ params[f"trunk{i}.w"].T
    return {k: grads[k] for k in params.names}


class AdamState:
    def __init__(self, params: NetworkParams, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps


def adam_step(params: NetworkParams, grads: dict[str, np.ndarray], lr: float,
              state: AdamState) -> NetworkParams:
    """One bias-corrected Adam update, in place.  Returns ``params``."""
    t = state.t + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    # a non-finite gradient aborts training, so a partially applied step is moot
    for k, g in grads.items():
        g = np.ascontiguousarray(g, dtype=np.float64).reshape(-1)
        bad = kernels.adam_update(params.arrays[k].reshape(-1), g, state.m[k].reshape(-1),
                                  state.v[k].reshape(-1), lr, state.beta1, state.beta2,
                                  c1, c2, state.eps)
        if bad:
            raise NumericalError(f"non-finite gradient in {k} ({bad} entries)")
    state.t = t
    return params


def clip_grads(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm
