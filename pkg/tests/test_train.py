import numpy as np
import pytest

from mixed_traffic.demand import DemandConfig, od_pattern_from_experiment
from mixed_traffic.env import TrafficEnv
from mixed_traffic.errors import ConfigError
from mixed_traffic.network import build_grid
from mixed_traffic.rainbow.toy import TwoStateEnv, value_iteration
from mixed_traffic.rainbow.train import (DivergenceError, Policy, TrainConfig, discounted_return,
                                         linear_schedule, train)
from mixed_traffic.sim import Action

SMALL = dict(hidden=(16,), batch_size=8, learning_starts=8, train_every=1, target_sync=20,
             steps_per_episode=2)


def test_zero_episodes_returns_initial_network():
    ckpt = train(TwoStateEnv, TrainConfig(episodes=0, hidden=(8,)))
    assert ckpt.log == [] and ckpt.grad_steps == 0 and ckpt.env_steps == 0
    assert not ckpt.params["value.w"].any()


def test_config_validation():
    for bad in (dict(gamma=0.0), dict(batch_size=0), dict(v_min=1.0, v_max=1.0), dict(episodes=-1)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    cfg = TrainConfig(hidden=(4, 4), input_scale=(1.0,) * 12)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_schedules():
    assert linear_schedule(1.0, 0.02, 0.3, 0.0) == 1.0
    assert linear_schedule(1.0, 0.02, 0.3, 0.15) == pytest.approx(0.51)
    assert linear_schedule(1.0, 0.02, 0.3, 0.9) == 0.02
    assert linear_schedule(0.4, 1.0, 0.0, 0.0) == 1.0


def test_value_iteration_oracle():
    q = value_iteration(0.99)
    np.testing.assert_allclose(q, [[0.99, 0.5], [0.0, 1.0]])


def test_discounted_return():
    assert discounted_return([1.0, 1.0, 1.0], 0.5) == 1.75
    assert discounted_return([], 0.9) == 0.0


def test_logged_return_matches_agent_steps():
    env = TrafficEnv(build_grid(2, 2, 200.0, {0, 3}), DemandConfig(60, 60.0, 1.0),
                     od_pattern_from_experiment(6), horizon=60.0)
    rewards = {}

    def on_step(steps):
        for aid, st in steps.items():
            rewards.setdefault(aid, []).append(st.reward)

    cfg = TrainConfig(episodes=1, horizon=60.0, hidden=(8,), learning_starts=10_000)
    ckpt = train(lambda: env, cfg, on_step=on_step)
    assert set(ckpt.last_returns) == set(rewards) and rewards
    for aid, rs in rewards.items():
        assert ckpt.last_returns[aid] == pytest.approx(discounted_return(rs, 0.99), abs=1e-9)
    assert ckpt.log[0]["mean_return"] == pytest.approx(np.mean(list(ckpt.last_returns.values())))


def test_training_is_deterministic():
    cfg = TrainConfig(episodes=40, seed=3, **SMALL)
    a, b = train(TwoStateEnv, cfg), train(TwoStateEnv, cfg)
    assert a.log == b.log and a.grad_steps > 0
    for k in a.params.arrays:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_divergence_guard_raises_with_checkpoint():
    cfg = TrainConfig(episodes=200, divergence_limit=1e-9, **SMALL)
    with pytest.raises(DivergenceError) as info:
        train(TwoStateEnv, cfg)
    assert info.value.checkpoint.grad_steps == 100


def test_policy_counts_queries():
    ckpt = train(TwoStateEnv, TrainConfig(episodes=0, hidden=(8,)))
    pol = Policy(ckpt.params, ckpt.config)
    obs = {1: np.zeros(12), 2: np.ones(12)}
    acts = pol.act(obs, 0.0, np.random.default_rng(0))
    assert acts == {1: int(Action.STOP), 2: int(Action.STOP)}
    assert pol.act({}, 0.0, np.random.default_rng(0)) == {}
    assert pol.queries == 2
