"""Command-line entry point.

Subcommands: train, eval, gen-data, bench, regress, ablate. Every command is
deterministic given its full flag set. Config precedence: built-in defaults
< config file (flat key=value lines, '#' comments) < command-line flags.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import sys

from . import ablation, bench, envs_data, offline_rl, regression
from . import policy as pol, rank_one_net as ron
from .numerics import RngStream


class UsageError(Exception):
    """Bad flags, config keys, or missing inputs; maps to exit code 2."""


def _parse_value(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def load_config_file(path) -> dict:
    """Flat key=value config; '#' starts a comment; unknown keys are the
    caller's problem to reject."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        values[key.strip()] = _parse_value(raw.strip())
    return values


def merge_config(defaults: dict, file_values: dict, flag_values: dict) -> dict:
    merged = dict(defaults)
    for key, val in file_values.items():
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        merged[key] = val
    for key, val in flag_values.items():
        if val is not None:
            if key not in defaults:
                raise UsageError(f"unknown option {key!r}")
            merged[key] = val
    return merged


def _int_list(raw: str) -> tuple:
    try:
        return tuple(int(x) for x in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints: {raw!r}")


_TRAIN_DEFAULTS = {
    "env": "reach1d", "tier": "expert", "dataset": "", "steps": 50_000,
    "k": 10, "seed": 0, "beta": None, "gamma": 0.99, "tau": 0.005,
    "batch_size": 256, "policy_delay": 2, "lr": 3e-4,
    "hidden": (256, 256, 256), "log_interval": 1000, "eval_interval": 1000,
    "eval_episodes": 10, "metrics_out": "metrics.csv",
    "checkpoint_out": "checkpoint",
}


def default_beta(tier: str) -> float:
    """100 for expert-style tiers, 0 otherwise."""
    return 100.0 if tier in ("expert", "medium_expert") else 0.0


def default_dataset_path(env: str, tier: str) -> str:
    return f"{env}-{tier}.jsonl"


def _trainer_config(cfg: dict) -> offline_rl.TrainerConfig:
    beta = cfg["beta"] if cfg["beta"] is not None else default_beta(cfg["tier"])
    hidden = cfg["hidden"] if isinstance(cfg["hidden"], tuple) \
        else _int_list(str(cfg["hidden"]))
    return offline_rl.TrainerConfig(
        gamma=cfg["gamma"], tau=cfg["tau"], k_heads=cfg["k"], beta=beta,
        batch_size=cfg["batch_size"], total_steps=cfg["steps"],
        policy_delay=cfg["policy_delay"], seed=cfg["seed"], lr=cfg["lr"],
        critic_hidden=hidden, policy_hidden=hidden,
        log_interval=cfg["log_interval"], eval_interval=cfg["eval_interval"],
        eval_episodes=cfg["eval_episodes"])


def _load_dataset_for(cfg: dict) -> envs_data.OfflineDataset:
    path = cfg["dataset"] or default_dataset_path(cfg["env"], cfg["tier"])
    try:
        dataset = envs_data.load_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"dataset file not found: {path}") from None
    except envs_data.EnvError as exc:
        raise UsageError(str(exc)) from None
    envs_data.validate_dataset(dataset)
    return dataset


def cmd_train(args) -> int:
    cfg = merge_config(_TRAIN_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _TRAIN_DEFAULTS))
    dataset = _load_dataset_for(cfg)
    env = envs_data.get_env(dataset.env_id)
    config = _trainer_config(cfg)
    prefix = cfg["checkpoint_out"]
    try:
        state, metrics = offline_rl.train(config, dataset, eval_env=env)
    except offline_rl.DivergenceError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    ron.save_network(state.critic, f"{prefix}-critic.bin")
    pol.save_policy(state.policy, f"{prefix}-policy.bin")
    offline_rl.write_metrics_csv(cfg["metrics_out"], metrics)
    if metrics:
        last = metrics[-1]
        print(f"step {last['step']}: critic_loss={last['critic_loss']:.4g} "
              f"eval_score={last['eval_score']:.2f}")
    return 0


_EVAL_DEFAULTS = {"policy": "checkpoint-policy.bin", "env": "reach1d-v0",
                  "episodes": 10, "seed": 0}


def cmd_eval(args) -> int:
    cfg = merge_config(_EVAL_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _EVAL_DEFAULTS))
    try:
        actor = pol.load_policy(cfg["policy"])
    except FileNotFoundError:
        raise UsageError(f"policy checkpoint not found: {cfg['policy']}") from None
    env = envs_data.get_env(cfg["env"])
    result = offline_rl.evaluate(actor, env, cfg["episodes"], RngStream(cfg["seed"]))
    print(f"raw_return={result['raw_return']:.4f} "
          f"normalized_score={result['normalized_score']:.2f}")
    return 0


_GEN_DEFAULTS = {"env": "reach1d-v0", "tier": "expert", "n": 100_000,
                 "seed": 0, "out": ""}


def cmd_gen_data(args) -> int:
    cfg = merge_config(_GEN_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _GEN_DEFAULTS))
    try:
        dataset = envs_data.generate_dataset(cfg["env"], cfg["tier"], cfg["n"],
                                             cfg["seed"])
    except envs_data.EnvError as exc:
        raise UsageError(str(exc)) from None
    out = cfg["out"] or default_dataset_path(
        envs_data.base_env_id(cfg["env"]).split("-")[0], cfg["tier"])
    envs_data.save_dataset(dataset, out)
    print(f"wrote {len(dataset)} transitions to {out}")
    return 0


_BENCH_DEFAULTS = {"k_list": (1, 5, 10, 20), "dims": (17, 256, 256, 256, 1),
                   "batch": 256, "repeats": 31, "seed": 0, "out": "bench.csv"}


def cmd_bench(args) -> int:
    cfg = merge_config(_BENCH_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _BENCH_DEFAULTS))
    k_list = cfg["k_list"] if isinstance(cfg["k_list"], tuple) \
        else _int_list(str(cfg["k_list"]))
    dims = cfg["dims"] if isinstance(cfg["dims"], tuple) \
        else _int_list(str(cfg["dims"]))
    rows = bench.run_bench(k_list, dims, cfg["batch"], cfg["repeats"],
                           cfg["seed"])
    bench.write_bench_csv(cfg["out"], rows)
    for row in rows:
        print(f"K={row['K']}: params x{row['mimo_params_rel_single']:.3f} "
              f"single, time x{row['mimo_time_rel_naive']:.3f} naive")
    return 0


_REGRESS_DEFAULTS = {"seed": 0, "k": 10, "steps": 3000, "batch": 128,
                     "n_train": 2000, "lr": 3e-3, "hidden": (64, 64),
                     "out": "regress.csv"}


def cmd_regress(args) -> int:
    cfg = merge_config(_REGRESS_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _REGRESS_DEFAULTS))
    hidden = cfg["hidden"] if isinstance(cfg["hidden"], tuple) \
        else _int_list(str(cfg["hidden"]))
    rows = regression.run_regression(
        seed=cfg["seed"], k=cfg["k"], hidden=hidden, steps=cfg["steps"],
        batch=cfg["batch"], n_train=cfg["n_train"], lr=cfg["lr"])
    regression.write_regression_csv(cfg["out"], rows)
    print(f"std ratio (OOD / in-dist) = {regression.std_ratio(rows):.2f}")
    return 0


_ABLATE_DEFAULTS = {"env": "reach1d", "tier": "medium_expert", "dataset": "",
                    "steps": 5000, "seed": 0, "k": 10, "beta": None,
                    "batch_size": 256, "hidden": (64, 64), "lr": 3e-4,
                    "gamma": 0.99, "tau": 0.005, "policy_delay": 2,
                    "log_interval": 1000, "eval_interval": 1000,
                    "eval_episodes": 10, "out": "ablate.csv"}


def cmd_ablate(args) -> int:
    cfg = merge_config(_ABLATE_DEFAULTS,
                       load_config_file(args.config) if args.config else {},
                       _flag_dict(args, _ABLATE_DEFAULTS))
    dataset = _load_dataset_for(cfg)
    base = _trainer_config({**cfg, "steps": cfg["steps"]})
    if args.kind == "k_sweep":
        rows = ablation.run_k_sweep(base, dataset)
        ablation.write_rows_csv(cfg["out"], rows, ablation.K_SWEEP_HEADER)
    else:
        rows = ablation.run_components(base, dataset)
        ablation.write_rows_csv(cfg["out"], rows, ablation.COMPONENTS_HEADER)
    for row in rows:
        print(row)
    return 0


def _flag_dict(args, defaults: dict) -> dict:
    return {key: getattr(args, key, None) for key in defaults}


def _add_opts(parser: argparse.ArgumentParser, defaults: dict) -> None:
    for key, val in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(val, bool):
            parser.add_argument(flag, type=lambda s: s.lower() == "true",
                                default=None)
        elif isinstance(val, int):
            parser.add_argument(flag, type=int, default=None)
        elif isinstance(val, float) or val is None:
            parser.add_argument(flag, type=float, default=None)
        elif isinstance(val, tuple):
            parser.add_argument(flag, type=_int_list, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimoq")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in (("train", _TRAIN_DEFAULTS), ("eval", _EVAL_DEFAULTS),
                           ("gen-data", _GEN_DEFAULTS), ("bench", _BENCH_DEFAULTS),
                           ("regress", _REGRESS_DEFAULTS),
                           ("ablate", _ABLATE_DEFAULTS)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        if name == "ablate":
            p.add_argument("kind", choices=("k_sweep", "components"))
        _add_opts(p, defaults)
    return parser


_COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gen-data": cmd_gen_data,
             "bench": cmd_bench, "regress": cmd_regress, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (envs_data.EnvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except offline_rl.DivergenceError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
