"""Command-line entry point: ``wireid {generate,run,baseline,sweep,eval}``.

Every RunConfig and GenerationParams field has a flag of the same name
(underscores become dashes).  Values resolve as flags > ``--config`` JSON
file > built-in defaults, and the resolved config is written with each
report.  Exit codes: 0 ok, 1 I/O or data failure, 2 bad usage.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .metrics import MetricError, cmc_map
from .pipeline import (
    SWEEP_AXES,
    ConfigError,
    RunConfig,
    ablation_sweep,
    load_run_scenario,
    run_baseline,
    run_umtf,
    sweep_csv,
)
from .scenario import (
    GenerationParams,
    ParameterError,
    ScenarioFormatError,
    ScenarioIntegrityError,
    generate_scenario,
    load_scenario,
    save_scenario,
)

PROG = "wireid"

# RunConfig fields that are not plain flags
_RUN_SKIP = {"generation", "seed", "scenario_path", "scenario_seed"}


class UsageError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_fields(parser, cls, skip=()):
    group = parser.add_argument_group(f"{cls.__name__} fields")
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            group.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS)
        else:
            group.add_argument(_flag(f.name), dest=f.name, type=type(default), default=argparse.SUPPRESS,
                               metavar=type(default).__name__.upper(), help=f"default {default}")


def _common(parser):
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    parser.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default: .)")
    parser.add_argument("--config", default=None, help="JSON file with config values")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=PROG, description="Wireless-assisted unsupervised person re-id.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario JSON")
    _common(g)
    g.add_argument("--output", default="scenario.json", help="file name inside --out-dir")
    _add_fields(g, GenerationParams)

    for name, text in (("run", "full wireless-assisted training run"),
                       ("baseline", "visual-only baseline run"),
                       ("sweep", "one wireless run per value of an ablation axis")):
        r = sub.add_parser(name, help=text)
        _common(r)
        r.add_argument("--scenario", dest="scenario_path", default=argparse.SUPPRESS,
                       help="scenario JSON (otherwise one is generated)")
        r.add_argument("--scenario-seed", dest="scenario_seed", type=int, default=argparse.SUPPRESS,
                       help="seed for the generated scenario")
        r.add_argument("--lambda", dest="lam", type=float, default=argparse.SUPPRESS,
                       help="alias of --lam")
        _add_fields(r, RunConfig, _RUN_SKIP)
        _add_fields(r, GenerationParams)
        if name == "sweep":
            r.add_argument("--axis", required=True, choices=SWEEP_AXES)
            r.add_argument("--values", required=True, help="comma-separated values")
            r.add_argument("--jobs", type=int, default=1, help="worker processes")

    e = sub.add_parser("eval", help="score a saved feature dump against a scenario")
    _common(e)
    e.add_argument("--scenario", required=True, help="scenario JSON with ground truth")
    e.add_argument("--features", required=True, help=".npy array, one row per video id")
    return p


def _read_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


def _split(values: dict, cls) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    return {k: v for k, v in values.items() if k in names}


def resolve_generation(args, file_cfg: dict) -> GenerationParams:
    merged = dict(file_cfg.get("generation", {}))
    merged.update(_split(vars(args), GenerationParams))
    return GenerationParams.from_dict(merged)


def resolve_run_config(args, file_cfg: dict) -> RunConfig:
    flags = vars(args)
    merged = {k: v for k, v in file_cfg.items() if k != "generation"}
    merged.update({k: v for k, v in _split(flags, RunConfig).items() if k != "generation"})
    cfg = RunConfig.from_dict(merged)
    cfg.generation = resolve_generation(args, file_cfg)
    cfg.validate()
    cfg.generation.validate()
    return cfg


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args, file_cfg) -> int:
    params = resolve_generation(args, file_cfg)
    params.validate()
    seed = getattr(args, "seed", file_cfg.get("seed", 0))
    path = _out_dir(args) / args.output
    save_scenario(generate_scenario(params, seed), path)
    print(f"wrote {path}")
    return 0


def cmd_run(args, file_cfg, wireless: bool) -> int:
    cfg = resolve_run_config(args, file_cfg)
    report = (run_umtf if wireless else run_baseline)(cfg)
    rp, mp = report.write(_out_dir(args))
    for note in report.notices:
        print(f"notice: {note}", file=sys.stderr)
    fin = report.final
    score = "n/a" if fin.get("mAP") is None else f"{fin['mAP']:.4f}"
    print(f"{report.mode}: final mAP {score}; wrote {rp} and {mp}")
    return 0


def cmd_sweep(args, file_cfg) -> int:
    cfg = resolve_run_config(args, file_cfg)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--values: {exc}") from exc
    rows = ablation_sweep(cfg, args.axis, values, load_run_scenario(cfg), jobs=args.jobs)
    path = _out_dir(args) / f"sweep_{args.axis}.csv"
    path.write_text(sweep_csv(rows))
    (path.with_suffix(".config.json")).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_eval(args, file_cfg) -> int:
    scenario = load_scenario(args.scenario)
    if not scenario.has_ground_truth:
        raise ScenarioFormatError(f"{args.scenario}: scenario carries no ground truth")
    try:
        X = np.load(args.features, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read features {args.features}: {exc}") from exc
    if X.ndim != 2 or len(X) != len(scenario.videos):
        raise ScenarioFormatError(
            f"{args.features}: expected {len(scenario.videos)} feature rows, got shape {X.shape}")
    sc = cmc_map(X, scenario.camera_ids(), scenario.video_identities())
    result = {"mAP": sc.mAP, "r1": sc.cmc[1], "r5": sc.cmc[5], "r10": sc.cmc[10],
              "n_queries": sc.n_queries, "n_skipped": sc.n_skipped}
    path = _out_dir(args) / "eval.json"
    path.write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    print(f"mAP {sc.mAP:.4f}  r1 {sc.cmc[1]:.4f}  r5 {sc.cmc[5]:.4f}  r10 {sc.cmc[10]:.4f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = _read_config_file(args.config)
        if args.command == "generate":
            return cmd_generate(args, file_cfg)
        if args.command in ("run", "baseline"):
            return cmd_run(args, file_cfg, wireless=args.command == "run")
        if args.command == "sweep":
            return cmd_sweep(args, file_cfg)
        return cmd_eval(args, file_cfg)
    except (UsageError, ConfigError, ParameterError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        msg = f"{exc.filename}: {exc.strerror}" if exc.filename and exc.strerror else str(exc)
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1
    except (ScenarioFormatError, ScenarioIntegrityError, MetricError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
