"""Command-line entry point: validate models, print plans, run experiments.

Exit codes are a stable contract: 0 success, 1 domain failure (invalid model,
runtime error), 2 input/parse failure (malformed document, bad config, usage).
All randomness flows from the config's master_seed; the only environment
variable honored is EFEPLAN_OUTPUT_DIR, which overrides the output directory.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .harness import ConfigError, derive_rng, load_config, run_experiment, run_trial, write_outputs
from .envs import make_environment
from .model import History, ModelFormatError, load_model
from .planning import policy_posterior

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_PARSE = 2

FLOAT_FMT = "%.12g"


def _parse_index_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(tok) for tok in text.split(","))


def cmd_validate(args) -> int:
    try:
        load_model(args.model)
    except ModelFormatError as exc:
        print(f"parse failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"cannot read model: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DOMAIN
    print("Ok")
    return EXIT_OK


def cmd_plan(args) -> int:
    try:
        model = load_model(args.model)
    except (ModelFormatError, OSError) as exc:
        print(f"parse failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DOMAIN
    try:
        history = History(
            observations=_parse_index_list(args.obs),
            actions=_parse_index_list(args.actions),
        )
        posterior = policy_posterior(model, history, gamma=args.gamma)
    except ValueError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    from .planning import efe_table

    _, rows = efe_table(model, history)
    order = sorted(
        range(len(rows)), key=lambda i: (rows[i].total, posterior.policies[i].actions)
    )
    header = "policy,total,risk,ambiguity,extrinsic,intrinsic,residual,probability"
    print(header)
    for i in order:
        policy = "-".join(str(a) for a in posterior.policies[i].actions)
        cells = ",".join(FLOAT_FMT % v for v in rows[i].as_row())
        prob = FLOAT_FMT % posterior.probs.probs[i]
        print(f"{policy},{cells},{prob}")
    return EXIT_OK


def _resolve_output_dir(args, config) -> str | None:
    if getattr(args, "output_dir", None):
        return args.output_dir
    env_dir = os.environ.get("EFEPLAN_OUTPUT_DIR")
    if env_dir:
        return env_dir
    return config.output_dir


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    output_dir = _resolve_output_dir(args, config)
    if output_dir is None:
        print("no output directory configured", file=sys.stderr)
        return EXIT_PARSE
    try:
        result = run_experiment(config)
        paths = write_outputs(result, output_dir)
    except ValueError as exc:
        print(f"model failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_trace(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    names = [spec.name for spec in config.agents]
    agent_name = args.agent or names[0]
    if agent_name not in names:
        print(f"agent {agent_name!r} not in config (have {names})", file=sys.stderr)
        return EXIT_PARSE
    if not 0 <= args.trial < config.n_trials:
        print(f"trial index {args.trial} out of range", file=sys.stderr)
        return EXIT_PARSE
    agent_index = names.index(agent_name)
    spec = config.agents[agent_index]
    try:
        model, env = make_environment(config.environment, config.env_overrides)
        rng = derive_rng(config.master_seed, agent_index, args.trial)
        record, trace = run_trial(
            model,
            env,
            spec.kind,
            config.gamma,
            spec.selection,
            rng,
            reward_per_obs=(
                np.asarray(config.reward_per_obs, dtype=float)
                if config.reward_per_obs is not None
                else None
            ),
            trial_index=args.trial,
        )
    except (ValueError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    print(f"trial {args.trial} agent {agent_name} context {record.context}")
    print(f"observations {list(record.observations)} actions {list(record.actions)}")
    print(f"score {FLOAT_FMT % record.score}")
    for dt, beliefs in enumerate(trace.held_at):
        label = f"decision_time {dt}" if dt < len(trace.held_at) - 1 else "post-trial"
        print(label)
        for bt in range(len(beliefs)):
            cells = " ".join(FLOAT_FMT % p for p in beliefs[bt].probs)
            print(f"  t={bt}: {cells}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efeplan",
        description="Expected-free-energy planning over discrete generative models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="print the policy table for a model and history")
    p.add_argument("model")
    p.add_argument(
        "--obs",
        default="0",
        help="comma-separated observed indices o_0..o_t (default: the single initial observation 0)",
    )
    p.add_argument(
        "--actions", default="", help="comma-separated executed actions a_1..a_t"
    )
    p.add_argument("--gamma", type=float, default=1.0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run an experiment config and write output files")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("trace", help="replay one trial and print its belief trace")
    p.add_argument("config")
    p.add_argument("trial", type=int)
    p.add_argument("--agent", default=None)
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
