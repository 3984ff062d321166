"""CSV emission and run manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import BinningSpec
from .experiment import EpisodeRecord, ExperimentConfig, ExperimentSummary, SweepResult

TRAJECTORY_CSV = "trajectory.csv"
SWEEP_CSV = "sweep.csv"
HISTORY_TXT = "apl_history.txt"
CURVE_CSV = "training_curve.csv"
TEST_CSV = "test_mse.csv"
MANIFEST = "manifest.json"


def fmt(x) -> str:
    """Locale-independent, round-trippable number formatting."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_trajectory(path: Path, rec: EpisodeRecord) -> None:
    header = ["time", "apl", "rpl", "voltage", "k"]
    n_loads = 0 if rec.thetas is None else rec.thetas.shape[1]
    header += [f"theta_{i + 1}" for i in range(n_loads)]
    header += [f"switch_{i + 1}" for i in range(n_loads)]

    def rows():
        for i in range(len(rec)):
            row = [rec.times[i], rec.apl[i], rec.rpl[i], rec.voltages[i], rec.actions[i]]
            if n_loads:
                row += list(rec.thetas[i]) + [int(s) for s in rec.switches[i]]
            yield row

    write_csv(path, header, rows())


def write_sweep(path: Path, result: SweepResult) -> None:
    rows = (
        [r.label, len(r.mses), r.median, r.mean, r.std, "1" if (r.k is not None and r.k == result.best_k) else "0"]
        for r in result.rows
    )
    write_csv(path, ["k", "n", "median", "mean", "std", "best"], rows)


def write_training(out: Path, summary: ExperimentSummary) -> None:
    n_rep, n_ep = summary.train_mse.shape
    header = ["episode", "smoothed_mean"]
    header += [f"smoothed_r{r}" for r in range(n_rep)] + [f"mse_r{r}" for r in range(n_rep)]
    rows = (
        [e, summary.smoothed_curve[e], *summary.smoothed_curves[:, e], *summary.train_mse[:, e]]
        for e in range(n_ep)
    )
    write_csv(out / CURVE_CSV, header, rows)


def write_test(path: Path, per_repeat: list[np.ndarray], label: str = "rl", extra: dict[str, np.ndarray] | None = None) -> None:
    def rows():
        for r, mses in enumerate(per_repeat):
            for e, m in enumerate(mses):
                yield [label, r, e, m]
        for name, mses in (extra or {}).items():
            for e, m in enumerate(mses):
                yield [name, 0, e, m]

    write_csv(path, ["policy", "repeat", "episode", "mse"], rows())


def config_to_dict(config: ExperimentConfig) -> dict:
    binning = config.binning
    if isinstance(binning, BinningSpec):
        binning = {"edges": list(binning.edges)}
    a = config.agent
    return {
        "start_time": config.start_time,
        "horizon": config.horizon,
        "control_step": config.control_step,
        "n_train_episodes": config.n_train_episodes,
        "n_test_episodes": config.n_test_episodes,
        "n_repeats": config.n_repeats,
        "smoothing_window": config.smoothing_window,
        "profile": config.profile.describe(),
        "stochastic": config.stochastic,
        "binning": binning,
        "historical_samples": None if config.historical is None else len(config.historical.samples),
        "agent": {
            "learning_rate_alpha": a.learning_rate_alpha,
            "exploration_rate_eps0": a.exploration_rate_eps0,
            "exploration_decay": a.exploration_decay,
            "discount_gamma": a.discount_gamma,
            "actions": list(a.actions),
            "reward_scale": a.reward_scale,
        },
        "seed": config.seed,
        "limits": [config.limits.v_min, config.limits.v_max],
        "test_horizon": config.test_horizon,
        "sweep_samples": config.sweep_samples,
        "substeps_per_second": config.substeps_per_second,
    }


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int
    out: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def write(self, out: Path) -> None:
        (out / MANIFEST).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
