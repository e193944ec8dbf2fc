"""Command line entry point: ``metacurl {run,sweep,oracle,validate-config}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Set ``METACURL_LOG`` (e.g. ``DEBUG``) to change log verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..lea import NumericalError
from .comparators import MODES, oracle_comparators
from .config import LEARNERS, ConfigError, load_config
from .environments import generate_environment
from .runner import _streams, build_objectives, run_experiment, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metacurl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "play one seeded run and write its CSV trace and summary"),
        ("sweep", "run every seed at every configured horizon and fit the regret exponent"),
        ("oracle", "compute the comparator sequences of one seeded environment"),
        ("validate-config", "check a config file and print it normalised"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        if name != "validate-config":
            p.add_argument("--seed", type=int, default=None, help="overrides the first configured seed")
            p.add_argument("--out", type=Path, default=None, help="output directory")
        if name in ("run", "sweep"):
            p.add_argument("--learner", choices=LEARNERS, default=None)
        if name == "run":
            p.add_argument("--tee-csv", action="store_true", help="also print the CSV trace to stdout")
    return parser


def _oracle(config, seed: int, out: Path) -> dict:
    env_rng, adv_rng, _, _ = _streams(seed)
    env = generate_environment(config, env_rng)
    objectives = build_objectives(config, env, adv_rng)
    kernels = env.kernels()
    out.mkdir(parents=True, exist_ok=True)
    report = {"seed": seed, "episodes": config.episodes}
    arrays = {}
    for mode in MODES:
        res = oracle_comparators(kernels, objectives, env.shape, mode)
        report[mode] = {"total_loss": float(res.losses.sum()), "delta_pi_star": res.variation,
                        "max_gap": res.max_gap}
        arrays[mode.replace("-", "_")] = res.policies
    np.savez_compressed(out / f"oracle_T{config.episodes}_seed{seed}.npz", **arrays)
    (out / f"oracle_T{config.episodes}_seed{seed}.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("METACURL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "validate-config":
            sys.stdout.write(config.to_json())
            return EXIT_OK
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            config = replace(config, seeds=[args.seed] + [s for s in config.seeds if s != args.seed])
        out = args.out or Path(config.output)
        if args.command == "run":
            result = run_experiment(config, config.seeds[0], args.learner, out)
            if args.tee_csv:
                sys.stdout.write(result.trace.to_csv())
            else:
                print(json.dumps(result.summary, indent=2, sort_keys=True))
        elif args.command == "sweep":
            print(json.dumps(run_sweep(config, args.learner, out), indent=2, sort_keys=True))
        else:
            print(json.dumps(_oracle(config, config.seeds[0], out), indent=2))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
