"""Prioritized replay: ring storage plus a sum tree over ``priority ** alpha``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import NotReadyError


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool
    priority: float | None = None


class SumTree:
    """Complete binary tree of sums; node 1 is the root, leaves start at ``base``."""

    def __init__(self, capacity: int):
        base = 1
        while base < capacity:
            base <<= 1
        self.base = base
        self.tree = np.zeros(2 * base)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self, n: int) -> np.ndarray:
        return self.tree[self.base:self.base + n]

    def update(self, idx, values):
        idx = np.ascontiguousarray(np.atleast_1d(idx), dtype=np.int64)
        values = np.ascontiguousarray(np.atleast_1d(values), dtype=np.float64)
        kernels.sumtree_update(self.tree, self.base, idx, values)

    def find(self, targets) -> np.ndarray:
        targets = np.ascontiguousarray(np.atleast_1d(targets), dtype=np.float64)
        return kernels.sumtree_find(self.tree, self.base, targets)


class ReplayBuffer:
    def __init__(self, capacity: int = 50_000, obs_dim: int = 12, alpha: float = 0.5):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.alpha = alpha
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.priority = np.zeros(capacity)
        self.tree = SumTree(capacity)
        self.size = 0
        self.cursor = 0
        self.max_priority = 1.0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> int:
        i = self.cursor
        self.obs[i] = t.observation
        self.next_obs[i] = t.next_observation
        self.action[i] = int(t.action)
        self.reward[i] = t.reward
        self.done[i] = bool(t.done)
        p = self.max_priority if t.priority is None else float(t.priority)
        if p <= 0:
            raise ValueError("priority must be > 0")
        self.priority[i] = p
        self.tree.update(i, p ** self.alpha)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves(self.size)
        return leaves / leaves.sum()

    def sample(self, batch_size: int, eta: float, rng: np.random.Generator):
        """Stratified proportional sample.  Returns ``(indices, batch, is_weights)``."""
        if self.size < batch_size or batch_size < 1:
            raise NotReadyError(f"buffer holds {self.size} transitions, need {batch_size}")
        total = self.tree.total
        edges = np.linspace(0.0, total, batch_size + 1)
        targets = rng.uniform(edges[:-1], edges[1:])
        idx = np.minimum(self.tree.find(targets), self.size - 1)
        probs = self.tree.tree[self.tree.base + idx] / total
        weights = (self.size * probs) ** (-eta)
        weights /= weights.max()
        batch = {
            "obs": self.obs[idx], "action": self.action[idx], "reward": self.reward[idx],
            "next_obs": self.next_obs[idx], "done": self.done[idx],
        }
        return idx, batch, weights

    def update_priorities(self, indices, priorities):
        priorities = np.asarray(priorities, dtype=np.float64)
        if np.any(priorities <= 0) or not np.all(np.isfinite(priorities)):
            raise ValueError("priorities must be finite and > 0")
        self.priority[indices] = priorities
        self.tree.update(indices, priorities ** self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max()))
