"""Policy evaluation episodes, optionally fanned out over worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .demand import DemandConfig, OdPattern
from .env import RewardConfig, TrafficEnv
from .metrics import MetricsAccumulator, average_waiting_time
from .network import ControlMode, RoadNetwork
from .sim import SimConfig


class RandomPolicy:
    """Uniform Go/Stop choices: the untrained reference policy."""

    def __init__(self, n_actions: int = 2):
        self.n_actions = n_actions
        self.queries = 0

    def act(self, observations: dict, epsilon: float, rng: np.random.Generator) -> dict:
        ids = list(observations)
        self.queries += len(ids)
        picks = rng.integers(0, self.n_actions, size=len(ids))
        return {i: int(a) for i, a in zip(ids, picks)}


@dataclass(frozen=True)
class EpisodeSpec:
    network: RoadNetwork
    demand: DemandConfig
    pattern: OdPattern
    seed: int
    sim_config: SimConfig = SimConfig()
    reward: RewardConfig = RewardConfig()
    trace_path: str | None = None


@dataclass
class EpisodeResult:
    seed: int
    w_bar: float
    accumulator: MetricsAccumulator
    queries: int


def run_episode(spec: EpisodeSpec, policy=None, epsilon: float = 0.0) -> EpisodeResult:
    """One full-horizon episode; ``policy`` may be None only without RV junctions."""
    has_agents = any(i.control_mode is ControlMode.RV_CONTROLLED
                     for i in spec.network.intersections)
    if has_agents and policy is None:
        raise ValueError("an RV-controlled network needs a policy")
    trace = open(spec.trace_path, "w", newline="") if spec.trace_path else None
    try:
        env = TrafficEnv(spec.network, spec.demand, spec.pattern, spec.reward,
                         spec.sim_config, trace=trace)
        rng = np.random.default_rng([spec.seed, 7])
        obs = env.reset(spec.seed)
        queries_before = getattr(policy, "queries", 0)
        done = False
        while not done:
            actions = policy.act(obs, epsilon, rng) if obs else {}
            _, done = env.step(actions)
            obs = env.observations()
    finally:
        if trace is not None:
            trace.close()
    acc = MetricsAccumulator().record_simulation(env.sim, run=spec.seed)
    queries = getattr(policy, "queries", 0) - queries_before
    return EpisodeResult(spec.seed, average_waiting_time(acc).value, acc, queries)


def _run(args):
    spec, policy, epsilon = args
    return run_episode(spec, policy, epsilon)


def evaluate(specs: list[EpisodeSpec], policy=None, epsilon: float = 0.0,
             workers: int = 1) -> list[EpisodeResult]:
    """Results in the order of ``specs``, independent of ``workers``."""
    jobs = [(s, policy, epsilon) for s in specs]
    if workers <= 1 or len(jobs) <= 1:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))
