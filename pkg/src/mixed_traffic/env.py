"""Multi-agent Go/Stop environment over the simulator.

Each RV inside the control zone of an RV-controlled intersection is an agent,
keyed by its vehicle id.  All agents are scored by one shared policy but each
receives the observation of its own intersection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import DemandConfig, OdPattern, SpawnEvent, generate_spawn_schedule
from .errors import ConfigError, ContractViolation
from .metrics import MetricsAccumulator
from .network import ControlMode, Direction, RoadNetwork
from .sim import Action, SimConfig, Simulation

OBS_DIM = 12
N_ACTIONS = len(Action)


@dataclass(frozen=True)
class RewardConfig:
    beta: float = 1.0
    tau_scale: float = 60.0

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.tau_scale <= 0:
            raise ConfigError("tau_scale must be > 0")


@dataclass(frozen=True)
class AgentStep:
    agent_id: int
    observation: np.ndarray
    action: Action
    reward: float
    next_observation: np.ndarray
    done: bool


def build_observation(sim: Simulation, iid: int) -> np.ndarray:
    """``[q_N, tau_N, q_S, tau_S, q_E, tau_E, q_W, tau_W, sigma_N, sigma_S, sigma_E, sigma_W]``.

    ``q_d`` counts vehicles stopped (speed below the waiting threshold) in the
    control zone on approach ``d``; ``tau_d`` is their mean waiting time at this
    intersection; ``sigma_d`` flags a vehicle from ``d`` inside the junction box.
    """
    node = sim.network.intersections[iid]
    if node.control_mode is not ControlMode.RV_CONTROLLED:
        raise ContractViolation(f"intersection {iid} is signalized")
    thr = sim.config.waiting_speed_threshold
    radius = node.control_zone_radius
    obs = np.zeros(OBS_DIM)
    for d in Direction:
        link_id = sim.network.approach_link(iid, d)
        if link_id is None:
            continue
        length = sim.network.links[link_id].length
        waits = [veh.waits.get(iid, 0.0) for veh in sim.link_vehicles(link_id)
                 if veh.speed < thr and length - veh.position <= radius]
        if waits:
            obs[2 * d] = len(waits)
            obs[2 * d + 1] = sum(waits) / len(waits)
    for m in sim.occupancy[iid].values():
        obs[8 + m.approach] = 1.0
    return obs


def compute_reward(action: Action, tau_dstar: float, conflict_occurred: bool,
                   cfg: RewardConfig = RewardConfig()) -> float:
    local = tau_dstar / cfg.tau_scale
    if action == Action.STOP:
        local = -local
    return cfg.beta * local + (-1.0 if conflict_occurred else 0.0)


class TrafficEnv:
    """Episode manager: ``reset`` then ``step`` until ``done``.

    ``demand`` and ``pattern`` regenerate the spawn schedule on every reset
    (with the reset seed); alternatively pass an explicit ``schedule``.
    """

    def __init__(self, network: RoadNetwork, demand: DemandConfig | None = None,
                 pattern: OdPattern | None = None, reward: RewardConfig = RewardConfig(),
                 sim_config: SimConfig = SimConfig(), horizon: float | None = None,
                 trace=None):
        if horizon is None:
            if demand is None:
                raise ConfigError("horizon required without a demand config")
            horizon = demand.horizon
        self.network = network
        self.demand = demand
        self.pattern = pattern
        self.reward_cfg = reward
        self.sim_config = sim_config
        self.horizon = float(horizon)
        self.trace = trace
        self.sim: Simulation | None = None
        self._obs: dict[int, np.ndarray] = {}
        self._agents: dict[int, tuple[int, Direction]] = {}

    def reset(self, seed: int | None = None,
              schedule: list[SpawnEvent] | None = None) -> dict[int, np.ndarray]:
        if schedule is None:
            if self.demand is None or self.pattern is None:
                raise ConfigError("reset needs a schedule or a demand config and pattern")
            demand = self.demand
            if seed is not None:
                demand = DemandConfig(demand.total_vehicles, demand.horizon, demand.penetration,
                                      seed, demand.departure_window)
            schedule = generate_spawn_schedule(demand, self.pattern, self.network)
        self.sim = Simulation(self.network, schedule, self.sim_config, trace=self.trace)
        return self._observe()

    def _observe(self) -> dict[int, np.ndarray]:
        self._agents = {vid: (iid, d) for vid, iid, d in self.sim.eligible_agents()}
        cache: dict[int, np.ndarray] = {}
        self._obs = {}
        for vid, (iid, _) in self._agents.items():
            if iid not in cache:
                cache[iid] = build_observation(self.sim, iid)
            self._obs[vid] = cache[iid]
        return dict(self._obs)

    def sync(self) -> dict[int, np.ndarray]:
        """Re-read eligibility after the simulation was edited directly (scripted scenarios)."""
        return self._observe()

    def observations(self) -> dict[int, np.ndarray]:
        """Observations of the currently eligible agents."""
        return dict(self._obs)

    @property
    def agents(self) -> dict[int, tuple[int, Direction]]:
        return dict(self._agents)

    @property
    def clock(self) -> float:
        return self.sim.clock

    def metrics(self, run: object = 0) -> MetricsAccumulator:
        """Waiting-time statistics of the current episode so far."""
        return MetricsAccumulator().record_simulation(self.sim, run)

    def step(self, actions: dict[int, Action]) -> tuple[dict[int, AgentStep], bool]:
        unknown = sorted(set(actions) - set(self._agents))
        if unknown:
            raise ContractViolation(f"unknown agent ids {unknown}")
        full = {vid: Action(actions.get(vid, Action.STOP)) for vid in self._agents}
        before = self._obs
        agents = self._agents
        _, events = self.sim.step(full)
        charged = {e.vehicle_id for e in events if e.kind == "conflict"}
        done = self.sim.clock >= self.horizon - 1e-9

        next_cache: dict[int, np.ndarray] = {}
        self._observe()
        steps = {}
        for vid, (iid, d) in agents.items():
            if iid not in next_cache:
                next_cache[iid] = build_observation(self.sim, iid)
            obs = before[vid]
            reward = compute_reward(full[vid], float(obs[2 * d + 1]), vid in charged,
                                    self.reward_cfg)
            steps[vid] = AgentStep(vid, obs, full[vid], reward, next_cache[iid],
                                   done or vid not in self._agents)
        return steps, done
