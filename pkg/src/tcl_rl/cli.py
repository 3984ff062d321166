"""Command-line entry point: ``tcl-rl simulate|sweep|train|evaluate|rerun``.

Every run writes into ``--out`` (one directory per run) together with a
``manifest.json`` recording the exact argument vector; ``tcl-rl rerun
<manifest> --out <dir>`` replays it. Options can also come from
``--config FILE`` holding ``option = value`` lines; flags win.
"""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import io
from .agent import AgentConfig, QAgent, QTable
from .control import ReferenceProfile, VoltageLimits
from .discretization import HistoricalDataset
from .errors import DegenerateDataError, InvalidInputError, InvalidParameterError, InvalidStateError
from .experiment import (
    DEFAULT_SWEEP_KS,
    ExperimentConfig,
    FixedK,
    baseline_policy,
    constant_sweep,
    evaluate_agents,
    run_episode,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of 'option = value' lines (flags win)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stochastic", action="store_true", help="stochastic thermal capacitances")
    p.add_argument("--profile", default="constant:1.2", help="constant:<lvl> | step:<before>,<after>,<t>")
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--tests", type=int, default=50)
    p.add_argument("--samples", type=int, default=50, help="sampled episodes per k in stochastic sweeps")
    p.add_argument("--window", type=int, default=20, help="training-curve smoothing window")
    p.add_argument("--binning", default="equal:0.9,1.7,10",
                   help="equal:lo,hi,n | fd[:file] | quantile:[file,]n | rpledge:lo,hi,n")
    p.add_argument("--historical", help="historical APL file (one value per line, '#' comments)")
    p.add_argument("--vmin", type=float, default=0.9)
    p.add_argument("--vmax", type=float, default=1.1)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for training repeats")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcl-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parser.set_defaults(_subparsers=sub.choices)

    p = sub.add_parser("simulate", help="one episode with a fixed k or the baseline")
    _add_shared(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=float, help="constant proportional coefficient")
    g.add_argument("--baseline", action="store_true", help="no control (nominal voltage)")

    p = sub.add_parser("sweep", help="constant-k sweep plus baseline")
    _add_shared(p)
    p.add_argument("--ks", type=_float_list, default=list(DEFAULT_SWEEP_KS))

    p = sub.add_parser("train", help="Q-learning training with repeats and greedy testing")
    _add_shared(p)

    p = sub.add_parser("evaluate", help="greedy evaluation of saved Q-tables")
    _add_shared(p)
    p.add_argument("--qtable", action="append", default=[], help="Q-table file (repeatable; order = repeat index)")
    p.add_argument("--qtables", help="directory holding qtable_r<i>.txt files")
    p.add_argument("--test-horizon", type=float, help="evaluate on a longer window than --horizon")
    p.add_argument("--ks", type=_float_list, default=list(DEFAULT_SWEEP_KS),
                   help="candidate constant k values for the generalization comparison")

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def _config_file_defaults(path: str) -> dict[str, str]:
    file = Path(path)
    if not file.is_file():
        raise InvalidInputError(f"config file not found: {file}")
    out = {}
    for lineno, line in enumerate(file.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{file}:{lineno}: expected 'option = value'")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    values = _config_file_defaults(args.config)
    sub = args._subparsers[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("config", "help"):
            raise UsageError(f"unknown option in config file: {key}")
        action = known[key]
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    historical = HistoricalDataset.from_file(args.historical) if args.historical else None
    if args.binning.split(":", 1)[0] in ("fd", "quantile") and historical is None:
        kind, _, rest = args.binning.partition(":")
        needs_file = kind == "fd" and not rest or kind == "quantile" and "," not in rest
        if needs_file:
            raise InvalidInputError(f"{kind} binning needs --historical <file>")
    config = ExperimentConfig(
        start_time=args.start,
        horizon=args.horizon,
        control_step=args.step,
        n_train_episodes=args.episodes,
        n_test_episodes=args.tests,
        n_repeats=args.repeats,
        smoothing_window=args.window,
        profile=ReferenceProfile.parse(args.profile),
        stochastic=args.stochastic,
        binning=args.binning,
        historical=historical,
        agent=AgentConfig(),
        seed=args.seed,
        limits=VoltageLimits(args.vmin, args.vmax),
        test_horizon=getattr(args, "test_horizon", None),
        sweep_samples=args.samples,
    )
    if args.command in ("train", "evaluate"):
        config.encoder()  # fail early on bad binning/historical data
    return config


def _qtable_paths(args) -> list[Path]:
    paths = [Path(p) for p in args.qtable]
    if args.qtables:
        found = sorted(
            Path(args.qtables).glob("qtable_r*.txt"),
            key=lambda p: int(re.search(r"qtable_r(\d+)", p.name).group(1)),
        )
        paths += found
    if not paths:
        raise InvalidInputError("no Q-table given (--qtable or --qtables)")
    return paths


def cmd_simulate(args, config: ExperimentConfig, out: Path) -> None:
    policy = baseline_policy() if args.baseline or args.k is None else FixedK(args.k)
    rec = run_episode(policy, config, config.seed, record_loads=True)
    io.write_trajectory(out / io.TRAJECTORY_CSV, rec)
    print(f"mse={rec.mse:.6g} rows={len(rec)} -> {out / io.TRAJECTORY_CSV}")


def cmd_sweep(args, config: ExperimentConfig, out: Path) -> None:
    result = constant_sweep(args.ks, config)
    io.write_sweep(out / io.SWEEP_CSV, result)
    if result.historical is not None:
        result.historical.to_file(out / io.HISTORY_TXT)
    for r in result.rows:
        mark = " *" if r.k is not None and r.k == result.best_k else ""
        print(f"{r.label:>8}  median={r.median:.4f} mean={r.mean:.4f} std={r.std:.4f}{mark}")


def cmd_train(args, config: ExperimentConfig, out: Path) -> None:
    agents, summary = train(config, jobs=args.jobs)
    io.write_training(out, summary)
    io.write_test(out / io.TEST_CSV, summary.test_mse)
    for r, agent in enumerate(agents):
        agent.q.save(out / f"qtable_r{r}.txt")
    print(f"test median={summary.median:.4f} mean={summary.mean:.4f} std={summary.std:.4f}")


def cmd_evaluate(args, config: ExperimentConfig, out: Path) -> None:
    encoder = config.encoder()
    agents = []
    for path in _qtable_paths(args):
        q = QTable.load(path)
        if q.n_states != encoder.n_states:
            raise InvalidInputError(f"{path}: {q.n_states} states but binning gives {encoder.n_states}")
        agents.append(QAgent(config.agent, encoder.n_states, q))
    horizon = config.test_horizon or config.horizon
    per_repeat = evaluate_agents(agents, config, horizon=horizon)
    extra = {}
    if horizon != config.horizon:
        chosen = constant_sweep(args.ks, config, include_baseline=False).best_k
        test = constant_sweep([chosen], config, horizon=horizon, include_baseline=False)
        extra[f"k={chosen:g}"] = test.row(chosen).mses
    io.write_test(out / io.TEST_CSV, per_repeat, extra=extra)
    pooled = np.concatenate(per_repeat)
    print(f"rl median={np.median(pooled):.4f} mean={pooled.mean():.4f}")
    for name, m in extra.items():
        print(f"{name} median={np.median(m):.4f} mean={m.mean():.4f}")


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "train": cmd_train, "evaluate": cmd_evaluate}


def _replace_out(argv: list[str], out: str) -> list[str]:
    result, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        result.append(a)
    return result + ["--out", out]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = _apply_config_file(parser, argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.command == "rerun":
            manifest = io.RunManifest.read(Path(args.manifest)) if Path(args.manifest).is_file() else None
            if manifest is None:
                raise InvalidInputError(f"manifest not found: {args.manifest}")
            return main(_replace_out(manifest.argv, args.out))
        config = config_from_args(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, config, out)
        io.RunManifest(args.command, argv, io.config_to_dict(config), config.seed, str(out)).write(out)
    except (UsageError, InvalidParameterError, argparse.ArgumentTypeError) as exc:
        print(f"tcl-rl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, DegenerateDataError, InvalidStateError, OSError) as exc:
        print(f"tcl-rl: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
