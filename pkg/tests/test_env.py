import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixed_traffic.demand import DemandConfig, VehicleClass, od_pattern_from_experiment
from mixed_traffic.env import (OBS_DIM, RewardConfig, TrafficEnv, build_observation,
                               compute_reward)
from mixed_traffic.errors import ConfigError, ContractViolation
from mixed_traffic.network import Direction, build_grid
from mixed_traffic.sim import Action, Simulation

RV, HV = VehicleClass.RV, VehicleClass.HV
N, S, E, W = Direction.N, Direction.S, Direction.E, Direction.W


def place(sim, cls, o, d, dist, speed=0.0):
    net = sim.network
    route = sim.route_for(net.boundary_nodes[o][0], net.boundary_nodes[d][0])
    return sim.add_vehicle(cls, route, 0, net.links[route.links[0]].length - dist, speed)


def scripted_env(rv_ids=(0,)):
    env = TrafficEnv(build_grid(1, 1, 200.0, set(rv_ids)), horizon=100.0)
    env.reset(schedule=[])
    return env


def test_reward_examples():
    cfg = RewardConfig(beta=1.0, tau_scale=60.0)
    assert compute_reward(Action.GO, 6.0, False, cfg) == pytest.approx(0.1)
    assert compute_reward(Action.STOP, 6.0, False, cfg) == pytest.approx(-0.1)
    assert compute_reward(Action.GO, 6.0, True, cfg) == pytest.approx(-0.9)
    assert compute_reward(Action.STOP, 0.0, True, cfg) == -1.0


@given(st.floats(1e-6, 1e4), st.one_of(st.just(0.0), st.floats(1e-3, 5)))
def test_reward_sign_structure(tau, beta):
    cfg = RewardConfig(beta=beta)
    go, stop = compute_reward(Action.GO, tau, False, cfg), compute_reward(Action.STOP, tau, False, cfg)
    assert go == -stop
    if beta > 0:
        assert go > 0 > stop
    assert compute_reward(Action.GO, tau, True, cfg) == pytest.approx(go - 1.0)


def test_reward_config_validation():
    with pytest.raises(ConfigError):
        RewardConfig(beta=-1)
    with pytest.raises(ConfigError):
        RewardConfig(tau_scale=0)


def test_empty_observation():
    sim = Simulation(build_grid(1, 1, 200.0, {0}))
    obs = build_observation(sim, 0)
    assert obs.shape == (OBS_DIM,) and not obs.any()


def test_signalized_observation_rejected():
    with pytest.raises(ContractViolation):
        build_observation(Simulation(build_grid(1, 1)), 0)


def test_scripted_observation_oracle():
    sim = Simulation(build_grid(1, 1, 200.0, {0}))
    # queue of three stopped HVs from N, bumper gaps exactly s0 so IDM keeps them still
    queue = [place(sim, HV, N, S, 7.0 * k) for k in range(3)]
    crosser = place(sim, RV, E, W, 1.0, 5.0)
    sim.step({crosser.id: Action.GO})
    assert crosser.in_box
    for veh, w in zip(queue, (2.0, 4.0, 6.0)):
        assert veh.speed < 0.1 and not veh.in_box
        veh.waiting_clock = w
        veh.waits = {0: w}
    obs = build_observation(sim, 0)
    expected = np.zeros(12)
    expected[0], expected[1] = 3, 4.0   # q_N, tau_N
    expected[8 + E] = 1.0               # sigma_E
    np.testing.assert_array_equal(obs, expected)


def test_moving_vehicle_not_queued():
    sim = Simulation(build_grid(1, 1, 200.0, {0}))
    v = place(sim, HV, W, E, 20.0, 0.2)
    obs = build_observation(sim, 0)
    assert obs[2 * W] == 0 and v.speed == 0.2


def test_threshold_is_strict():
    sim = Simulation(build_grid(1, 1, 200.0, {0}))
    place(sim, HV, W, E, 20.0, 0.1)
    place(sim, HV, S, N, 20.0, 0.0999)
    obs = build_observation(sim, 0)
    assert obs[2 * W] == 0 and obs[2 * S] == 1


def test_reset_is_fresh_and_deterministic():
    net = build_grid(2, 2, 200.0, {0, 3})
    env = TrafficEnv(net, DemandConfig(200, 120.0, 1.0), od_pattern_from_experiment(1))
    first = env.reset(5)
    assert env.clock == 0.0 and not env.sim.vehicles and first == {}
    maps = []
    for _ in range(2):
        env.reset(5)
        for _ in range(40):
            env.step({})
        maps.append({k: v.tolist() for k, v in env.observations().items()})
    assert maps[0] == maps[1]
    assert env.metrics().spawned > 0
    env.reset(5)
    assert env.metrics().spawned == 0 and not env.metrics().waits


def test_step_contracts():
    env = scripted_env()
    steps, done = env.step({})
    assert steps == {} and not done
    with pytest.raises(ContractViolation):
        env.step({999: Action.GO})
    with pytest.raises(ConfigError):
        TrafficEnv(build_grid(1, 1))


def test_go_at_empty_junction_has_no_penalty():
    env = scripted_env()
    rv = place(env.sim, RV, N, S, 10.0, 5.0)
    obs = env.sync()
    assert set(obs) == {rv.id} and len(obs[rv.id]) == 12
    steps, _ = env.step({rv.id: Action.GO})
    assert steps[rv.id].reward >= 0.0


def test_missing_action_defaults_to_stop():
    env = scripted_env()
    rv = place(env.sim, RV, N, S, 10.0, 5.0)
    env.sync()
    steps, _ = env.step({})
    assert steps[rv.id].action is Action.STOP


def test_conflict_penalty_on_second_entrant():
    env = scripted_env()
    first = place(env.sim, RV, N, S, 1.0, 5.0)
    second = place(env.sim, RV, E, W, 5.0, 5.0)
    env.sync()
    s1, _ = env.step({first.id: Action.GO, second.id: Action.GO})
    assert s1[first.id].done and not s1[second.id].done
    s2, _ = env.step({second.id: Action.GO})
    assert s2[second.id].reward == pytest.approx(-1.0)  # tau = 0, penalty only
    assert s1[first.id].reward == 0.0


def test_reward_uses_own_approach_wait():
    env = scripted_env()
    rv = place(env.sim, RV, N, S, 0.0, 0.0)
    other = place(env.sim, HV, E, W, 0.0, 0.0)
    rv.waiting_clock, rv.waits = 12.0, {0: 12.0}
    other.waiting_clock, other.waits = 30.0, {0: 30.0}
    env.sync()
    steps, _ = env.step({rv.id: Action.STOP})
    assert steps[rv.id].reward == pytest.approx(-12.0 / 60.0)


def test_episode_done_at_horizon():
    env = TrafficEnv(build_grid(1, 1, 200.0, {0}), horizon=2.0)
    env.reset(schedule=[])
    dones = [env.step({})[1] for _ in range(4)]
    assert dones == [False, False, False, True]


def test_observations_finite_nonnegative_over_episode():
    net = build_grid(2, 2, 200.0, {0, 3})
    env = TrafficEnv(net, DemandConfig(300, 150.0, 0.75, 2), od_pattern_from_experiment(4))
    obs = env.reset()
    rng = np.random.default_rng(1)
    done = False
    seen = 0
    while not done:
        for o in obs.values():
            assert o.shape == (12,) and np.isfinite(o).all() and (o >= 0).all()
            for d in range(4):
                assert (o[2 * d] == 0) <= (o[2 * d + 1] == 0)
            assert set(np.unique(o[8:])) <= {0.0, 1.0}
            seen += 1
        steps, done = env.step({k: Action(int(rng.integers(2))) for k in obs})
        for st_ in steps.values():
            assert np.isfinite(st_.reward)
        obs = env.observations()
    assert seen > 0
