"""Shared-policy training loop: every acting agent feeds one buffer and one network."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, NumericalError
from .distributional import loss_and_td, select_actions, support
from .network import AdamState, NetworkParams, adam_step, clip_grads, init_params
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 32
    lr: float = 5e-4
    episodes: int = 150
    horizon: float = 1000.0
    v_min: float = -20.0
    v_max: float = 20.0
    n_atoms: int = 51
    hidden: tuple[int, ...] = (512, 512, 512)
    buffer_capacity: int = 50_000
    alpha: float = 0.5
    target_sync: int = 500
    train_every: int = 4
    learning_starts: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.02
    eps_fraction: float = 0.3
    eta_start: float = 0.4
    eta_end: float = 1.0
    grad_clip: float | None = 10.0
    input_scale: tuple[float, ...] | None = None
    steps_per_episode: int | None = None
    eval_every: int = 0
    divergence_limit: float = 1e3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.v_min >= self.v_max:
            raise ConfigError("v_min must be < v_max")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")

    def planned_env_steps(self, dt: float = 0.5) -> int:
        per_episode = self.steps_per_episode or int(math.ceil(self.horizon / dt))
        return max(1, self.episodes * per_episode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if self.input_scale is not None:
            d["input_scale"] = list(self.input_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        if d.get("input_scale") is not None:
            d["input_scale"] = tuple(d["input_scale"])
        return cls(**d)


def linear_schedule(start: float, end: float, fraction: float, progress: float) -> float:
    if fraction <= 0 or progress >= fraction:
        return end
    return start + (end - start) * min(1.0, progress / fraction)


@dataclass
class Checkpoint:
    params: NetworkParams
    config: TrainConfig
    obs_dim: int
    grad_steps: int = 0
    env_steps: int = 0
    log: list[dict] = field(default_factory=list)
    last_returns: dict = field(default_factory=dict)


class Policy:
    """Read-only greedy/epsilon policy over a parameter snapshot."""

    def __init__(self, params: NetworkParams, config: TrainConfig):
        self.params = params
        self.config = config
        self.atoms = support(config.v_min, config.v_max, config.n_atoms)
        self.scale = _scale(config, params["trunk0.w"].shape[0])
        self.queries = 0

    def act(self, observations: dict, epsilon: float, rng: np.random.Generator) -> dict:
        if not observations:
            return {}
        ids = list(observations)
        obs = np.stack([observations[i] for i in ids]) / self.scale
        self.queries += len(ids)
        chosen = select_actions(self.params, obs, epsilon, rng, self.atoms)
        return {i: int(a) for i, a in zip(ids, chosen)}


def _scale(config: TrainConfig, obs_dim: int) -> np.ndarray:
    if config.input_scale is None:
        return np.ones(obs_dim)
    scale = np.asarray(config.input_scale, dtype=np.float64)
    if scale.shape != (obs_dim,):
        raise ConfigError(f"input_scale needs {obs_dim} entries")
    return scale


def discounted_return(rewards, gamma: float) -> float:
    g = 0.0
    for r in reversed(list(rewards)):
        g = r + gamma * g
    return g


def train(env_factory: Callable, config: TrainConfig, obs_dim: int = 12, n_actions: int = 2,
          evaluate: Callable[[Policy], float] | None = None,
          episode_seeds: Callable[[int], int] | None = None,
          on_episode: Callable[[dict], None] | None = None,
          on_step: Callable[[dict], None] | None = None) -> Checkpoint:
    """Train the shared network and return the final checkpoint.

    ``env_factory()`` returns an environment with ``reset(seed)``,
    ``step(actions) -> (agent_steps, done)`` and ``observations()``.  One gradient step is taken every
    ``train_every`` environment steps once ``learning_starts`` transitions are
    stored; the target network is re-synced every ``target_sync`` gradient
    steps.  ``evaluate(policy)`` is called every ``eval_every`` episodes.
    """
    rng = np.random.default_rng(config.seed)
    params = init_params(obs_dim, n_actions, config.n_atoms, config.hidden, rng)
    target = params.copy()
    adam = AdamState(params)
    atoms = support(config.v_min, config.v_max, config.n_atoms)
    scale = _scale(config, obs_dim)
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, config.alpha)
    ckpt = Checkpoint(params, config, obs_dim)
    planned = config.planned_env_steps()
    recent_loss: deque = deque(maxlen=100)
    seed_of = episode_seeds or (lambda ep: config.seed * 100_003 + ep)
    env = env_factory()

    for episode in range(config.episodes):
        obs = env.reset(seed_of(episode))
        returns: dict[int, float] = {}
        discounts: dict[int, float] = {}
        losses = []
        steps = 0
        done = False
        while not done:
            progress = ckpt.env_steps / planned
            eps = linear_schedule(config.eps_start, config.eps_end, config.eps_fraction, progress)
            actions = {}
            if obs:
                ids = list(obs)
                batch_obs = np.stack([obs[i] for i in ids]) / scale
                chosen = select_actions(params, batch_obs, eps, rng, atoms)
                actions = {i: int(a) for i, a in zip(ids, chosen)}
            agent_steps, done = env.step(actions)
            if on_step is not None:
                on_step(agent_steps)
            for aid, st in agent_steps.items():
                buffer.push(Transition(st.observation / scale, int(st.action), st.reward,
                                       st.next_observation / scale, st.done))
                disc = discounts.get(aid, 1.0)
                returns[aid] = returns.get(aid, 0.0) + disc * st.reward
                discounts[aid] = disc * config.gamma
            obs = env.observations()
            ckpt.env_steps += 1
            steps += 1

            if (ckpt.env_steps % config.train_every == 0
                    and len(buffer) >= max(config.learning_starts, config.batch_size)):
                eta = linear_schedule(config.eta_start, config.eta_end, 1.0, progress)
                idx, batch, weights = buffer.sample(config.batch_size, eta, rng)
                loss, prios, grads = loss_and_td(params, target, batch, weights,
                                                 config.gamma, atoms)
                clip_grads(grads, config.grad_clip)
                adam_step(params, grads, config.lr, adam)
                buffer.update_priorities(idx, prios)
                ckpt.grad_steps += 1
                losses.append(loss)
                recent_loss.append(abs(loss))
                if ckpt.grad_steps % config.target_sync == 0:
                    target = params.copy()
                if len(recent_loss) == recent_loss.maxlen and \
                        float(np.mean(recent_loss)) > config.divergence_limit:
                    raise DivergenceError(ckpt)

        row = {
            "episode": episode,
            "steps": steps,
            "mean_return": float(np.mean(list(returns.values()))) if returns else 0.0,
            "mean_loss": float(np.mean(losses)) if losses else 0.0,
            "epsilon": eps,
            "buffer_size": len(buffer),
            "eval_w_bar": "",
        }
        if evaluate is not None and config.eval_every and (episode + 1) % config.eval_every == 0:
            row["eval_w_bar"] = float(evaluate(Policy(params.copy(), config)))
        ckpt.log.append(row)
        ckpt.last_returns = returns
        if on_episode is not None:
            on_episode(row)
        log.debug("episode %d: return %.4f loss %.4f", episode, row["mean_return"], row["mean_loss"])
    return ckpt


class DivergenceError(NumericalError):
    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        super().__init__(f"running mean |loss| exceeded {checkpoint.config.divergence_limit} "
                         f"after {checkpoint.grad_steps} gradient steps")
