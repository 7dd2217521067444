"""Categorical (C51) value distributions: expectations, targets, loss."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..sim import Action
from .network import ForwardCache, NetworkParams, backward, forward


def support(v_min: float, v_max: float, n_atoms: int = 51) -> np.ndarray:
    return np.linspace(v_min, v_max, n_atoms)


def q_values(dist: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Expected value of each action's distribution (last axis = atoms)."""
    return dist @ atoms


def greedy(q: np.ndarray) -> np.ndarray:
    """Argmax over actions; exact ties resolve to Stop."""
    q = np.atleast_2d(q)
    go_better = q[:, Action.GO] > q[:, Action.STOP]
    return np.where(go_better, int(Action.GO), int(Action.STOP))


def select_actions(params: NetworkParams, obs: np.ndarray, epsilon: float,
                   rng: np.random.Generator, atoms: np.ndarray) -> np.ndarray:
    """Epsilon-greedy over a batch of observations."""
    obs = np.atleast_2d(obs)
    n = obs.shape[0]
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(0, params.n_actions, size=n)
    if explore.all():
        return random_actions
    chosen = greedy(q_values(forward(params, obs), atoms))
    return np.where(explore, random_actions, chosen)


def select_action(params: NetworkParams, obs: np.ndarray, epsilon: float,
                  rng: np.random.Generator, atoms: np.ndarray) -> Action:
    return Action(int(select_actions(params, obs, epsilon, rng, atoms)[0]))


def categorical_projection(next_dist: np.ndarray, reward, done, gamma: float,
                           atoms: np.ndarray) -> np.ndarray:
    """Project the Bellman-shifted distribution back onto ``atoms``.

    Accepts a single distribution (1-D) or a batch (2-D with per-row reward
    and done).  Each atom ``z_j`` moves to ``clip(r + (1 - done) * gamma * z_j)``
    and its mass is split linearly between the two neighbouring atoms.
    """
    single = np.ndim(next_dist) == 1
    p = np.ascontiguousarray(np.atleast_2d(next_dist), dtype=np.float64)
    r = np.array(np.broadcast_to(np.asarray(reward, dtype=np.float64), p.shape[:1]))
    d = np.array(np.broadcast_to(np.asarray(done, dtype=np.uint8), p.shape[:1]))
    out = kernels.categorical_projection(p, r, d, float(gamma), float(atoms[0]), float(atoms[-1]))
    return out[0] if single else out


def double_dqn_target(online: NetworkParams, target: NetworkParams, next_obs: np.ndarray,
                      rewards, dones, gamma: float, atoms: np.ndarray) -> np.ndarray:
    """Online network picks the next action, target network supplies its distribution."""
    next_obs = np.atleast_2d(next_obs)
    a_star = greedy(q_values(forward(online, next_obs), atoms))
    target_dist = forward(target, next_obs)[np.arange(len(a_star)), a_star]
    return categorical_projection(target_dist, rewards, dones, gamma, atoms)


def loss_and_td(params: NetworkParams, target_params: NetworkParams, batch: dict,
                is_weights: np.ndarray, gamma: float, atoms: np.ndarray,
                online_for_selection: NetworkParams | None = None, with_grads: bool = True):
    """Weighted cross-entropy loss, gradients, and new priorities.

    ``batch`` holds arrays ``obs``, ``action``, ``reward``, ``next_obs``, ``done``.
    Returns ``(loss, priorities, grads)``; priorities are the per-sample
    cross-entropies plus 1e-6.
    """
    selector = online_for_selection or params
    target = double_dqn_target(selector, target_params, batch["next_obs"], batch["reward"],
                               batch["done"], gamma, atoms)
    return cross_entropy_loss(params, batch["obs"], batch["action"], target, is_weights,
                              with_grads)


def cross_entropy_loss(params, obs, actions, target, is_weights, with_grads=True):
    cache = ForwardCache()
    probs = forward(params, obs, cache)
    n = len(actions)
    rows = np.arange(n)
    taken = probs[rows, actions]
    log_p = np.log(np.clip(taken, 1e-300, None))
    ce = -(target * log_p).sum(axis=1)
    w = np.asarray(is_weights, dtype=np.float64)
    loss = float((w * ce).mean())
    grads = None
    if with_grads:
        g = np.zeros_like(probs)
        # d CE / d logits = p * sum(target) - target, on the taken action only
        g[rows, actions] = (w / n)[:, None] * (taken * target.sum(axis=1, keepdims=True) - target)
        grads = backward(params, cache, g)
    return loss, ce + 1e-6, grads
