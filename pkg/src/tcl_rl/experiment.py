"""Experiment protocol: rollouts, constant-k sweeps, Q-learning training and testing.

Seeding: repeat ``r`` of a training run is driven by ``SeedSequence(seed + r)``,
which spawns one stream for the training episodes (feeder draws and
exploration, consumed in episode order) and one for the test episodes
(feeder draws only). Sweeps draw their episode seeds from
``SeedSequence(seed)`` so every k sees the same sampled feeders.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentConfig, QAgent
from .control import ReferenceProfile, VoltageLimits, baseline_voltage, command_voltage, rpl_at
from .discretization import BinningSpec, HistoricalDataset, StateEncoder, parse_binning, rpl_binning
from .errors import InvalidInputError, InvalidParameterError
from .tcl import SUBSTEPS_PER_SECOND, FeederState, aggregate_power, default_feeder, init_states, step_feeder

DEFAULT_SWEEP_KS = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)


@dataclass(frozen=True)
class ExperimentConfig:
    start_time: float = 0.0
    horizon: float = 200.0
    control_step: float = 1.0
    n_train_episodes: int = 100
    n_test_episodes: int = 50
    n_repeats: int = 5
    smoothing_window: int = 20
    profile: ReferenceProfile = field(default_factory=lambda: ReferenceProfile.constant(1.2))
    stochastic: bool = False
    binning: str | BinningSpec = "equal:0.9,1.7,10"
    historical: HistoricalDataset | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    seed: int = 0
    limits: VoltageLimits = field(default_factory=VoltageLimits)
    test_horizon: float | None = None
    sweep_samples: int = 50
    substeps_per_second: int = SUBSTEPS_PER_SECOND

    def __post_init__(self):
        if self.start_time < 0:
            raise InvalidParameterError("start_time must be >= 0")
        if self.control_step <= 0 or self.horizon <= 0:
            raise InvalidParameterError("horizon and control_step must be positive")
        for h in (self.horizon, self.test_horizon):
            if h is not None and not _divides(self.control_step, h):
                raise InvalidParameterError(f"horizon {h} is not a multiple of control_step {self.control_step}")
        if min(self.n_train_episodes, self.n_test_episodes, self.n_repeats, self.sweep_samples) < 0:
            raise InvalidParameterError("episode counts must be >= 0")
        if self.n_repeats < 1:
            raise InvalidParameterError("n_repeats must be >= 1")
        if self.smoothing_window < 1:
            raise InvalidParameterError("smoothing_window must be >= 1")

    def n_steps(self, horizon: float | None = None) -> int:
        return int(round((self.horizon if horizon is None else horizon) / self.control_step))

    def encoder(self) -> StateEncoder:
        apl = self.binning
        if not isinstance(apl, BinningSpec):
            apl = parse_binning(apl, rpl=self.profile.level_before, historical=self.historical)
        return StateEncoder(apl, rpl_binning(self.profile.levels))


def _divides(step: float, horizon: float) -> bool:
    n = horizon / step
    return abs(n - round(n)) < 1e-9 and round(n) >= 1


@dataclass
class EpisodeRecord:
    times: np.ndarray
    apl: np.ndarray
    rpl: np.ndarray
    voltages: np.ndarray
    actions: np.ndarray
    mse: float
    thetas: np.ndarray | None = None
    switches: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class ExperimentSummary:
    """Training curves and pooled test statistics of one training run."""

    train_mse: np.ndarray
    smoothed_curves: np.ndarray
    smoothed_curve: np.ndarray
    test_mse: list[np.ndarray]
    median: float
    mean: float
    std: float

    @property
    def pooled_test_mse(self) -> np.ndarray:
        return np.concatenate(self.test_mse) if self.test_mse else np.array([])


@dataclass
class SweepRow:
    k: float | None
    mses: np.ndarray
    median: float
    mean: float
    std: float

    @property
    def label(self) -> str:
        return "baseline" if self.k is None else f"{self.k:g}"


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_k: float | None
    historical: HistoricalDataset | None = None

    def row(self, k: float | None) -> SweepRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    @property
    def baseline(self) -> SweepRow:
        return self.row(None)

    @property
    def best(self) -> SweepRow:
        return self.row(self.best_k)


@dataclass
class GeneralizationSummary:
    constant_k: float
    rl_test_mse: np.ndarray
    constant_test_mse: np.ndarray
    constant_train_mse: np.ndarray
    training: ExperimentSummary

    @property
    def rl_median(self) -> float:
        return float(np.median(self.rl_test_mse))

    @property
    def constant_median(self) -> float:
        return float(np.median(self.constant_test_mse))


# policies


@dataclass
class FixedK:
    """Constant proportional coefficient; k = 0 is the uncontrolled baseline."""

    k: float

    def choose(self, state: int) -> tuple[int, float]:
        return -1, self.k


@dataclass
class GreedyAgent:
    agent: QAgent

    def choose(self, state: int) -> tuple[int, float]:
        a = int(np.argmax(self.agent.q.values[state]))
        return a, self.agent.config.actions[a]


@dataclass
class LearningAgent:
    agent: QAgent
    eps: float
    rng: np.random.Generator

    def choose(self, state: int) -> tuple[int, float]:
        a = self.agent.act(state, self.eps, self.rng)
        return a, self.agent.config.actions[a]


def baseline_policy() -> FixedK:
    return FixedK(0.0)


def episode_mse(record: EpisodeRecord) -> float:
    if len(record.apl) == 0:
        raise InvalidInputError("empty episode record")
    return float(np.mean((np.asarray(record.apl) - np.asarray(record.rpl)) ** 2))


def run_episode(
    policy,
    config: ExperimentConfig,
    seed: int = 0,
    horizon: float | None = None,
    encoder: StateEncoder | None = None,
    record_loads: bool = False,
) -> EpisodeRecord:
    """Simulate one control episode over [start_time, start_time + horizon).

    At each control step the APL is observed at the voltage held from the
    previous step (v = 1 initially), the policy picks k, the commanded
    voltage is applied for one step. A ``LearningAgent`` policy gets a
    Q-update per transition, rewarded on the next observation. Before
    ``start_time`` the feeder runs uncontrolled at nominal voltage.
    """
    feeder = default_feeder(config.stochastic, seed)
    state = init_states(feeder)
    step = config.control_step
    substeps = max(1, int(round(step * config.substeps_per_second)))
    if config.start_time > 0:
        warm = max(1, int(round(config.start_time * config.substeps_per_second)))
        state = step_feeder(state, feeder, baseline_voltage(), config.start_time, warm)
    n = config.n_steps(horizon)
    needs_state = not isinstance(policy, FixedK)
    if needs_state and encoder is None:
        encoder = config.encoder()
    learning = isinstance(policy, LearningAgent)

    times = config.start_time + step * np.arange(n)
    apl = np.empty(n)
    rpl = np.empty(n)
    volts = np.empty(n)
    ks = np.empty(n)
    thetas = np.empty((n, state.theta.size)) if record_loads else None
    switches = np.empty((n, state.theta.size), dtype=np.int8) if record_loads else None

    v = baseline_voltage()
    prev = None
    for i in range(n):
        p = aggregate_power(state, feeder, v)
        ref = rpl_at(config.profile, times[i])
        s = encoder(p, ref) if needs_state else -1
        if learning and prev is not None:
            policy.agent.learn(prev[0], prev[1], p, ref, s)
        a, k = policy.choose(s)
        if record_loads:
            thetas[i] = state.theta
            switches[i] = state.switch
        v = command_voltage(k, p, ref, config.limits)
        apl[i], rpl[i], volts[i], ks[i] = p, ref, v, k
        state = step_feeder(state, feeder, v, step, substeps)
        prev = (s, a)
    if learning:
        t_end = config.start_time + n * step
        p = aggregate_power(state, feeder, v)
        ref = rpl_at(config.profile, t_end)
        policy.agent.learn(prev[0], prev[1], p, ref, encoder(p, ref))

    rec = EpisodeRecord(times, apl, rpl, volts, ks, 0.0, thetas, switches)
    rec.mse = episode_mse(rec)
    return rec


def smooth_curve(per_episode_mse, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average the available prefix."""
    if window < 1:
        raise InvalidParameterError("window must be >= 1")
    x = np.asarray(per_episode_mse, dtype=float)
    return np.array([x[max(0, i + 1 - window): i + 1].mean() for i in range(len(x))])


def summarize(mses) -> tuple[float, float, float]:
    """(median, mean, sample std with n-1 denominator; 0 for one sample)."""
    x = np.asarray(mses, dtype=float)
    if x.size == 0:
        raise InvalidInputError("no samples to summarize")
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return float(np.median(x)), float(np.mean(x)), std


def _draw_seeds(rng: np.random.Generator, n: int) -> list[int]:
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n)]


def sweep_seeds(config: ExperimentConfig) -> list[int]:
    if not config.stochastic:
        return [config.seed]
    return _draw_seeds(np.random.default_rng(np.random.SeedSequence(config.seed)), config.sweep_samples)


def repeat_streams(config: ExperimentConfig, repeat: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(training stream, test stream) for one repeat."""
    train_ss, test_ss = np.random.SeedSequence(config.seed + repeat).spawn(2)
    return np.random.default_rng(train_ss), np.random.default_rng(test_ss)


def test_seeds(config: ExperimentConfig, repeat: int) -> list[int]:
    return _draw_seeds(repeat_streams(config, repeat)[1], config.n_test_episodes)


def constant_sweep(ks, config: ExperimentConfig, horizon: float | None = None, include_baseline: bool = True) -> SweepResult:
    """Evaluate constant-k control (and the baseline) on common sampled feeders.

    One episode per k when deterministic, ``sweep_samples`` when stochastic.
    The best k has the lowest median MSE. APL samples of the constant-k
    episodes are returned as historical data.
    """
    seeds = sweep_seeds(config)
    rows = []
    history = []
    candidates = ([None] if include_baseline else []) + [float(k) for k in ks]
    for k in candidates:
        policy = baseline_policy() if k is None else FixedK(k)
        records = [run_episode(policy, config, s, horizon=horizon) for s in seeds]
        mses = np.array([r.mse for r in records])
        if k is not None:
            history.extend(float(x) for r in records for x in r.apl)
        rows.append(SweepRow(k, mses, *summarize(mses)))
    controlled = [r for r in rows if r.k is not None]
    best = min(controlled, key=lambda r: (r.median, r.mean)).k if controlled else None
    hist = HistoricalDataset(tuple(history), "constant-sweep") if history else None
    return SweepResult(rows, best, hist)


def evaluate_agents(agents, config: ExperimentConfig, horizon: float | None = None) -> list[np.ndarray]:
    """Greedy test MSEs per repeat; repeat r uses its own test seed stream."""
    encoder = config.encoder()
    out = []
    for r, agent in enumerate(agents):
        policy = GreedyAgent(agent)
        out.append(np.array([
            run_episode(policy, config, s, horizon=horizon, encoder=encoder).mse
            for s in test_seeds(config, r)
        ]))
    return out


def _train_repeat(config: ExperimentConfig, repeat: int):
    encoder = config.encoder()
    agent = QAgent(config.agent, encoder.n_states)
    rng, _ = repeat_streams(config, repeat)
    train_mse = np.empty(config.n_train_episodes)
    for e in range(config.n_train_episodes):
        seed = _draw_seeds(rng, 1)[0]
        policy = LearningAgent(agent, agent.epsilon(e), rng)
        train_mse[e] = run_episode(policy, config, seed, encoder=encoder).mse
    return agent, train_mse


def train(config: ExperimentConfig, jobs: int = 1) -> tuple[list[QAgent], ExperimentSummary]:
    """Train ``n_repeats`` independent agents, then test each greedily.

    Repeats may run in worker processes (``jobs > 1``); results do not
    depend on ``jobs``.
    """
    if jobs > 1 and config.n_repeats > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_repeat, [config] * config.n_repeats, range(config.n_repeats)))
    else:
        results = [_train_repeat(config, r) for r in range(config.n_repeats)]
    agents = [a for a, _ in results]
    train_mse = np.array([m for _, m in results]).reshape(config.n_repeats, config.n_train_episodes)
    test_mse = evaluate_agents(agents, config)
    return agents, build_summary(train_mse, test_mse, config.smoothing_window)


def build_summary(train_mse: np.ndarray, test_mse: list[np.ndarray], window: int) -> ExperimentSummary:
    curves = np.array([smooth_curve(m, window) for m in train_mse]).reshape(train_mse.shape)
    pooled = np.concatenate(test_mse) if test_mse else np.array([])
    stats = summarize(pooled) if pooled.size else (math.nan, math.nan, math.nan)
    return ExperimentSummary(
        train_mse=train_mse,
        smoothed_curves=curves,
        smoothed_curve=curves.mean(axis=0) if curves.size else np.array([]),
        test_mse=test_mse,
        median=stats[0],
        mean=stats[1],
        std=stats[2],
    )


def generalization_run(config: ExperimentConfig, ks=DEFAULT_SWEEP_KS, jobs: int = 1) -> GeneralizationSummary:
    """Train on ``horizon``, then test RL and the training-optimal constant k on ``test_horizon``."""
    if config.test_horizon is None or config.test_horizon < config.horizon:
        raise InvalidParameterError("test_horizon must be set and >= horizon")
    agents, summary = train(config, jobs=jobs)
    train_sweep = constant_sweep(ks, config, include_baseline=False)
    k = train_sweep.best_k
    rl = np.concatenate(evaluate_agents(agents, config, horizon=config.test_horizon))
    const = constant_sweep([k], config, horizon=config.test_horizon, include_baseline=False).row(k).mses
    return GeneralizationSummary(k, rl, const, train_sweep.row(k).mses, summary)


def feeder_trajectory(config: ExperimentConfig, seed: int, voltage: float, duration: float) -> list[FeederState]:
    """States every control step of an open-loop run at fixed voltage."""
    feeder = default_feeder(config.stochastic, seed)
    state = init_states(feeder)
    out = [state]
    steps = int(round(duration / config.control_step))
    for _ in range(steps):
        state = step_feeder(state, feeder, voltage, config.control_step)
        out.append(state)
    return out

