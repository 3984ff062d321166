from dataclasses import replace

import numpy as np
import pytest

from tcl_rl.agent import QAgent, QTable
from tcl_rl.control import ReferenceProfile
from tcl_rl.errors import InvalidInputError, InvalidParameterError
from tcl_rl.experiment import (
    EpisodeRecord,
    ExperimentConfig,
    FixedK,
    GreedyAgent,
    LearningAgent,
    baseline_policy,
    constant_sweep,
    episode_mse,
    evaluate_agents,
    generalization_run,
    run_episode,
    smooth_curve,
    summarize,
    test_seeds as derive_test_seeds,
    train,
)

SMALL = ExperimentConfig(stochastic=True, n_train_episodes=6, n_test_episodes=4, n_repeats=2, sweep_samples=4)


def _record(apl, rpl):
    n = len(apl)
    z = np.zeros(n)
    return EpisodeRecord(z, np.asarray(apl, float), np.asarray(rpl, float), z, z, 0.0)


def test_episode_mse_examples():
    assert episode_mse(_record([1.2, 1.3], [1.2, 1.3])) == 0
    assert episode_mse(_record([1.3, 1.4, 1.5], [1.2, 1.3, 1.4])) == pytest.approx(0.01)
    assert episode_mse(_record([1.0, 1.4], [1.2, 1.2])) == pytest.approx(0.04)
    with pytest.raises(InvalidInputError):
        episode_mse(_record([], []))


def test_smooth_curve_examples():
    x = np.random.default_rng(0).random(30)
    np.testing.assert_array_equal(smooth_curve(x, 1), x)
    np.testing.assert_allclose(smooth_curve([0.3] * 25, 20), 0.3)
    np.testing.assert_allclose(smooth_curve([0, 2, 4], 2), [0, 1, 3])
    with pytest.raises(InvalidParameterError):
        smooth_curve(x, 0)


def test_smooth_curve_against_loop():
    x = np.random.default_rng(1).random(57)
    w = 20
    brute = [sum(x[max(0, i - w + 1): i + 1]) / len(x[max(0, i - w + 1): i + 1]) for i in range(len(x))]
    np.testing.assert_allclose(smooth_curve(x, w), brute, rtol=1e-12)


def test_summarize():
    assert summarize([1, 1, 1]) == (1, 1, 0)
    med, mean, std = summarize([0, 2])
    assert (med, mean) == (1, 1)
    assert std == pytest.approx(np.sqrt(2))
    assert summarize([5]) == (5, 5, 0)
    with pytest.raises(InvalidInputError):
        summarize([])


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(horizon=200, control_step=3)
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(smoothing_window=0)
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(start_time=-1)
    c = ExperimentConfig()
    assert (c.horizon, c.control_step, c.n_train_episodes, c.n_test_episodes, c.n_repeats, c.smoothing_window) == (
        200, 1, 100, 50, 5, 20
    )


def test_k_zero_is_baseline():
    cfg = ExperimentConfig()
    a = run_episode(FixedK(0.0), cfg)
    b = run_episode(baseline_policy(), cfg)
    np.testing.assert_array_equal(a.apl, b.apl)
    assert np.all(a.voltages == 1.0)


@pytest.mark.parametrize("stochastic", [False, True])
def test_episode_deterministic(stochastic):
    cfg = ExperimentConfig(stochastic=stochastic)
    a = run_episode(FixedK(2.0), cfg, seed=11)
    b = run_episode(FixedK(2.0), cfg, seed=11)
    for field in ("times", "apl", "rpl", "voltages", "actions"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.mse == b.mse


@pytest.mark.parametrize("step,horizon,start", [(1, 200, 0), (5, 200, 0), (1, 200, 175), (5, 400, 175)])
def test_episode_bookkeeping(step, horizon, start):
    cfg = ExperimentConfig(control_step=step, horizon=horizon, start_time=start)
    rec = run_episode(FixedK(0.5), cfg)
    n = horizon // step
    assert len(rec) == len(rec.apl) == len(rec.rpl) == len(rec.voltages) == len(rec.actions) == n
    assert rec.times[0] == start and rec.times[-1] == start + (n - 1) * step
    assert abs(episode_mse(rec) - rec.mse) <= 1e-12
    assert np.all((rec.voltages >= 0.9) & (rec.voltages <= 1.1))


def test_first_observation_at_nominal_voltage():
    rec = run_episode(FixedK(7.0), ExperimentConfig())
    assert rec.apl[0] == pytest.approx(1.4)
    assert rec.voltages[0] == 0.9


def test_baseline_mse_magnitude():
    mse = run_episode(baseline_policy(), ExperimentConfig()).mse
    assert 0.1465 / 10 < mse < 0.1465 * 10


def test_step_profile_episode():
    cfg = ExperimentConfig(horizon=400, profile=ReferenceProfile.step_down(1.4, 1.1, 200))
    rec = run_episode(FixedK(0.5), cfg)
    assert np.all(rec.rpl[:200] == 1.4) and np.all(rec.rpl[200:] == 1.1)
    assert cfg.encoder().n_states == 20


def test_record_loads():
    rec = run_episode(baseline_policy(), ExperimentConfig(horizon=10), record_loads=True)
    assert rec.thetas.shape == (10, 20) and rec.switches.shape == (10, 20)
    assert list(rec.switches[0]) == [1] * 10 + [0] * 10
    np.testing.assert_allclose(rec.apl, (rec.switches * 0.14).sum(axis=1))


def test_learning_episode_updates_table():
    cfg = ExperimentConfig(stochastic=True)
    enc = cfg.encoder()
    agent = QAgent(cfg.agent, enc.n_states)
    rec = run_episode(LearningAgent(agent, 0.5, np.random.default_rng(0)), cfg, seed=1, encoder=enc)
    assert np.count_nonzero(agent.q.values) > 0
    assert np.all(agent.q.values <= 0)
    assert set(rec.actions) <= set(cfg.agent.actions)


def test_greedy_all_zero_table_uses_first_action():
    cfg = ExperimentConfig()
    agent = QAgent(cfg.agent, cfg.encoder().n_states)
    rec = run_episode(GreedyAgent(agent), cfg)
    assert np.all(rec.actions == 0.1)


def test_sweep_singleton():
    cfg = ExperimentConfig()
    res = constant_sweep([2.0], cfg, include_baseline=False)
    assert len(res.rows) == 1 and res.best_k == 2.0
    mse = run_episode(FixedK(2.0), cfg).mse
    assert res.best.median == res.best.mean == mse
    assert res.best.std == 0


def test_sweep_common_seeds_and_history():
    cfg = replace(SMALL, sweep_samples=3)
    res = constant_sweep([0.5, 7.0], cfg)
    assert [r.label for r in res.rows] == ["baseline", "0.5", "7"]
    assert all(len(r.mses) == 3 for r in res.rows)
    assert len(res.historical.samples) == 2 * 3 * 200
    assert res.best_k in (0.5, 7.0)


def test_train_deterministic_and_shapes():
    agents_a, a = train(SMALL)
    agents_b, b = train(SMALL)
    assert a.train_mse.shape == (2, 6)
    assert a.smoothed_curve.shape == (6,)
    assert [len(t) for t in a.test_mse] == [4, 4]
    np.testing.assert_array_equal(a.train_mse, b.train_mse)
    np.testing.assert_array_equal(a.pooled_test_mse, b.pooled_test_mse)
    for x, y in zip(agents_a, agents_b):
        np.testing.assert_array_equal(x.q.values, y.q.values)
    assert (a.median, a.mean, a.std) == summarize(a.pooled_test_mse)


def test_train_parallel_matches_serial():
    _, a = train(SMALL, jobs=1)
    _, b = train(SMALL, jobs=2)
    np.testing.assert_array_equal(a.train_mse, b.train_mse)
    np.testing.assert_array_equal(a.pooled_test_mse, b.pooled_test_mse)


def test_repeats_differ():
    _, s = train(SMALL)
    assert not np.array_equal(s.train_mse[0], s.train_mse[1])


def test_evaluate_replays_train_test_phase():
    agents, s = train(SMALL)
    reloaded = [QAgent(SMALL.agent, a.q.n_states, QTable(a.q.n_states, a.q.n_actions, a.q.values.copy())) for a in agents]
    again = evaluate_agents(reloaded, SMALL)
    for x, y in zip(s.test_mse, again):
        np.testing.assert_array_equal(x, y)
    assert derive_test_seeds(SMALL, 0) != derive_test_seeds(SMALL, 1)


def test_generalization_requires_longer_test():
    with pytest.raises(InvalidParameterError):
        generalization_run(SMALL)
    with pytest.raises(InvalidParameterError):
        generalization_run(replace(SMALL, test_horizon=100))


def test_generalization_equal_windows():
    cfg = replace(SMALL, test_horizon=SMALL.horizon)
    g = generalization_run(cfg, ks=[0.5, 7.0])
    np.testing.assert_array_equal(g.rl_test_mse, g.training.pooled_test_mse)
    np.testing.assert_array_equal(g.constant_test_mse, g.constant_train_mse)


def test_constant_k_distribution_shift():
    cfg = replace(SMALL, start_time=175, test_horizon=400)
    g = generalization_run(cfg, ks=[0.5, 7.0])
    assert len(g.rl_test_mse) == 2 * 4
    assert not np.allclose(g.constant_test_mse, g.constant_train_mse)
