"""Two-state, two-action episodic MDP with a known optimal policy.

State 0: Go -> reward 0, move to state 1; Stop -> reward 0.5, episode ends.
State 1: Go -> reward 0, episode ends;     Stop -> reward 1, episode ends.
With any discount above 0.5 the optimum is Go in state 0 and Stop in state 1.
Observations are one-hot in the first two entries of a length-12 vector.
"""
from __future__ import annotations

import numpy as np

from ..env import AgentStep
from ..sim import Action

# (state, action) -> (reward, next state or None when terminal)
TRANSITIONS = {
    (0, Action.GO): (0.0, 1),
    (0, Action.STOP): (0.5, None),
    (1, Action.GO): (0.0, None),
    (1, Action.STOP): (1.0, None),
}


def one_hot(state: int, dim: int = 12) -> np.ndarray:
    obs = np.zeros(dim)
    obs[state] = 1.0
    return obs


class TwoStateEnv:
    """Single-agent wrapper with the same interface as ``TrafficEnv``."""

    agent_id = 0

    def __init__(self, obs_dim: int = 12):
        self.obs_dim = obs_dim
        self.state = 0

    def reset(self, seed=None):
        self.state = 0
        return self.observations()

    def observations(self):
        if self.state is None:
            return {}
        return {self.agent_id: one_hot(self.state, self.obs_dim)}

    def step(self, actions):
        action = Action(actions.get(self.agent_id, Action.STOP))
        reward, nxt = TRANSITIONS[(self.state, action)]
        obs = one_hot(self.state, self.obs_dim)
        done = nxt is None
        next_obs = np.zeros(self.obs_dim) if done else one_hot(nxt, self.obs_dim)
        self.state = nxt
        return {self.agent_id: AgentStep(self.agent_id, obs, action, reward, next_obs, done)}, done


def value_iteration(gamma: float, sweeps: int = 100) -> np.ndarray:
    """Optimal Q table, shape (2 states, 2 actions)."""
    q = np.zeros((2, 2))
    for _ in range(sweeps):
        v = q.max(axis=1)
        new = np.zeros_like(q)
        for (s, a), (r, nxt) in TRANSITIONS.items():
            new[s, a] = r + (0.0 if nxt is None else gamma * v[nxt])
        q = new
    return q
