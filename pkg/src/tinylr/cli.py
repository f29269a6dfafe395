"""Command-line interface.

Subcommands:
    recipes validate <config>   check well-behavedness of configured recipes
    sweep <config>              train every cell of an experiment config
    preset <name>               run a pinned experiment (see presets module)
    report <store> --kind K     aggregate a sweep store (ranking/regret/bounds)
    bound <config>              usable-eta window for a config

Global flags: --seed overrides the config's master seed, --threads sets the
worker pool size, --out the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .presets import PRESETS, run_preset
from .recipes import validate_well_behaved
from .runner import (
    ExperimentConfig,
    ResultsStore,
    eta_bound_pipeline,
    ranking_report,
    regret_report,
    run_sweep,
    standard_eta,
)


def _load_config(path: str, seed_override: int | None) -> ExperimentConfig:
    with open(path) as fh:
        data = json.load(fh)
    if seed_override is not None:
        data["master_seed"] = seed_override
    return ExperimentConfig.from_dict(data)


def _cmd_recipes_validate(args) -> int:
    config = _load_config(args.config, args.seed)
    val = config.build_val()
    failures = 0
    for recipe in config.build_recipes():
        report = validate_well_behaved(recipe, val, grid_n=args.grid_n)
        status = "ok" if report.passed else "DEGENERATE"
        print(
            f"{recipe.recipe_id}: {status} "
            f"(min density proxy {report.min_density_proxy:.3g}, "
            f"kernel floor proxy {report.lambda0_proxy:.3g}, "
            f"nu bounded {report.nu_bounded}, "
            f"compatibility {report.compatibility})"
        )
        failures += 0 if report.passed else 1
    return 1 if failures else 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config, args.seed)
    out = args.out or os.path.join("out", config.experiment_id)
    store = run_sweep(config, out, threads=args.threads)
    print(f"sweep complete: {len(store.rows)} rows in {store.runs_path}")
    return 0


def _cmd_preset(args) -> int:
    out = args.out or "out"
    summary = run_preset(args.name, out, threads=args.threads)
    print(json.dumps(summary, indent=1, sort_keys=True, default=str))
    return 0


def _cmd_report(args) -> int:
    store = ResultsStore(args.store)
    with open(store.meta_path) as fh:
        config = ExperimentConfig.from_dict(json.load(fh)["config"])
    out = args.out or os.path.join(args.store, "reports")
    if args.kind == "ranking":
        ranking_report(store, config, out)
    elif args.kind == "regret":
        proxy_width = config.widths[0]
        etas = {
            "standard": standard_eta(store, config, proxy_width),
            "tiny": config.eta_grid[0],
        }
        regret_report(store, config, out, proxy_width, etas)
    else:
        payload = eta_bound_pipeline(config, store)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "bound.json"), "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
    print(f"wrote {args.kind} report to {out}")
    return 0


def _cmd_bound(args) -> int:
    config = _load_config(args.config, args.seed)
    out = args.out or os.path.join("out", config.experiment_id)
    store = run_sweep(config, os.path.join(out, "store"), threads=args.threads)
    payload = eta_bound_pipeline(config, store)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bound.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    print(json.dumps(payload, indent=1, sort_keys=True))
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tinylr", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--threads", type=int, default=1, help="worker pool size")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_recipes = sub.add_parser("recipes", help="recipe utilities")
    recipes_sub = p_recipes.add_subparsers(dest="action", required=True)
    p_validate = recipes_sub.add_parser("validate", help="well-behavedness checks")
    p_validate.add_argument("config")
    p_validate.add_argument("--grid-n", type=int, default=64)
    p_validate.set_defaults(func=_cmd_recipes_validate)

    p_sweep = sub.add_parser("sweep", help="train all cells of a config")
    p_sweep.add_argument("config")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_preset = sub.add_parser("preset", help="run a pinned experiment")
    p_preset.add_argument("name", choices=sorted(PRESETS))
    p_preset.set_defaults(func=_cmd_preset)

    p_report = sub.add_parser("report", help="aggregate a sweep store")
    p_report.add_argument("store")
    p_report.add_argument("--kind", choices=("ranking", "regret", "bounds"), required=True)
    p_report.set_defaults(func=_cmd_report)

    p_bound = sub.add_parser("bound", help="usable-eta window for a config")
    p_bound.add_argument("config")
    p_bound.set_defaults(func=_cmd_bound)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
