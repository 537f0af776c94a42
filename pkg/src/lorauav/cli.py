"""Command line entry point: ``lorauav {generate,train,evaluate,baseline,export}``.

Every scalar key of the scenario and training configs is also a flag
(``--num-uavs 2``, ``--total-steps 200000``); flags override ``--config``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import DEFAULT_SEEDS, ConfigError, ScenarioConfig, TrainConfig, desk_scenario, load_config
from .scenario import generate_scenario, save_scenario


def _scalar_fields(cls):
    for f in dataclasses.fields(cls):
        if isinstance(f.default, (bool, int, float)):
            yield f


def _add_config_flags(p: argparse.ArgumentParser, train: bool) -> None:
    p.add_argument("--config", type=Path, help="JSON file with 'scenario' and 'train' blocks")
    p.add_argument("--desk", action="store_true", help="start from the reduced two-cluster deployment")
    groups = [("scenario", ScenarioConfig)] + ([("train", TrainConfig)] if train else [])
    for title, cls in groups:
        g = p.add_argument_group(f"{title} keys")
        for f in _scalar_fields(cls):
            g.add_argument("--" + f.name.replace("_", "-"), dest=f"{title}.{f.name}", type=type(f.default),
                           default=None, metavar=type(f.default).__name__.upper())


def _configs(args) -> tuple[ScenarioConfig, TrainConfig]:
    if args.config is not None:
        scen, train = load_config(args.config)
        if args.desk:
            raise ConfigError("--desk and --config are mutually exclusive")
    else:
        scen, train = (desk_scenario() if args.desk else ScenarioConfig()), TrainConfig()
    changes = {"scenario": {}, "train": {}}
    for key, value in vars(args).items():
        if "." in key and value is not None:
            block, name = key.split(".", 1)
            changes[block][name] = value
    return scen.replace(**changes["scenario"]).validate(), train.replace(**changes["train"]).validate()


def _seeds(args) -> list[int]:
    return list(args.seeds) if args.seeds else list(DEFAULT_SEEDS)


def cmd_generate(args) -> int:
    scen, _ = _configs(args)
    if args.preset:
        scen = harness.get_preset(args.preset).scenario_config(scen)
    scenario = generate_scenario(scen, seed=args.seed)
    save_scenario(args.out, scenario)
    print(f"wrote {args.out}: {len(scenario.devices)} devices, {len(scenario.uavs)} UAVs")
    return 0


def _report(preset_dir: Path) -> None:
    summary = json.loads((preset_dir / "summary.json").read_text())
    print(f"{summary['preset']}: EE {summary['mean_ee']:.6g} +/- {summary['std_ee']:.3g} "
          f"over seeds {summary['seeds']} -> {preset_dir}")


def cmd_train(args) -> int:
    scen, train = _configs(args)
    if args.steps is not None:
        train = train.replace(total_steps=args.steps).validate()
    preset = harness.get_preset(args.preset)
    if not preset.learned:
        raise harness.HarnessError(f"preset {preset.name} is a baseline; use the 'baseline' command")
    _report(harness.run_experiment(preset, _seeds(args), train, scen, args.output_root, args.episodes))
    return 0


def cmd_baseline(args) -> int:
    scen, _ = _configs(args)
    name = {"random": "random", "heuristic": "fixed_heuristic"}[args.kind]
    _report(harness.run_experiment(name, _seeds(args), TrainConfig(), scen, args.output_root, args.episodes))
    return 0


def cmd_evaluate(args) -> int:
    ckpt = Path(args.checkpoint)
    run_dir = ckpt.parent if ckpt.is_file() else ckpt
    scores = harness.evaluate_checkpoint(run_dir, args.episodes, args.seed,
                                         checkpoint=ckpt if ckpt.is_file() else None)
    print(json.dumps({"episode_ee": scores, "mean_ee": float(np.mean(scores)), "std_ee": float(np.std(scores))}))
    return 0


def cmd_export(args) -> int:
    files = harness.export_trajectories(args.trace, args.out, args.episode)
    for kind, path in files.items():
        print(f"{kind}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorauav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a scenario and write it as JSON")
    _add_config_flags(p, train=False)
    p.add_argument("--preset", choices=sorted(harness.PRESETS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    for name, helptext in (("train", "train a MAPPO preset over one or more seeds"),
                           ("baseline", "evaluate a non-learning policy over one or more seeds")):
        p = sub.add_parser(name, help=helptext)
        if name == "train":
            p.add_argument("--preset", choices=["hetero", "ug_only", "g_only"], default="hetero")
            p.add_argument("--steps", type=int, default=None, help="shorthand for --total-steps")
        else:
            p.add_argument("kind", choices=["random", "heuristic"])
        _add_config_flags(p, train=name == "train")
        p.add_argument("--seeds", type=int, nargs="+", help=f"default: {' '.join(map(str, DEFAULT_SEEDS))}")
        p.add_argument("--episodes", type=int, default=harness.DEFAULT_EVAL_EPISODES)
        p.add_argument("--output-root", type=Path, default=None,
                       help=f"default: ${harness.OUTPUT_ROOT_ENV} or ./{harness.DEFAULT_OUTPUT_ROOT}")
        p.set_defaults(func=cmd_train if name == "train" else cmd_baseline)

    p = sub.add_parser("evaluate", help="re-evaluate a stored checkpoint with greedy actions")
    p.add_argument("checkpoint", help="checkpoint.bin or its run directory")
    p.add_argument("--episodes", type=int, default=harness.DEFAULT_EVAL_EPISODES)
    p.add_argument("--seed", type=int, default=None, help="default: the run's own seed")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="turn a trace into UAV path, device and association tables")
    p.add_argument("trace", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--episode", type=int, default=0)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, harness.HarnessError, FileNotFoundError) as exc:
        print(f"lorauav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
