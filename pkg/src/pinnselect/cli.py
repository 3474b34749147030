"""Command-line entry point: reference, experiment, ablate, select."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import harness
from .reference import BurgersProblem, NU_DEFAULT, save_reference, solve_reference
from .scoring import sample_pool
from .selection import stage_seed


def _cmd_reference(args) -> int:
    sol = solve_reference(BurgersProblem(nu=args.nu, T=args.T), nx=args.nx)
    save_reference(sol, args.out)
    print(f"wrote {args.out} ({len(sol.grid_x)} x {len(sol.grid_t)})")
    return 0


def _load(args) -> harness.ExperimentConfig:
    overrides = {}
    if getattr(args, "method", None):
        overrides["method"] = args.method
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    for item in getattr(args, "set", None) or []:
        key, _, val = item.partition("=")
        overrides[key.strip()] = val
    return harness.load_config(args.config, overrides)


def _cmd_experiment(args) -> int:
    cfg = _load(args)
    res = harness.run_experiment(cfg)
    agg = res.aggregate
    print(f"{cfg.method}: mean rel_l2 = {agg.get('rel_l2')} ({agg['status']}) -> {res.results_path}")
    return 0 if res.seed_results else 1


def _cmd_ablate(args) -> int:
    cfg = _load(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows, path = harness.run_ablation(args.axis, values, cfg)
    for row in rows:
        print(f"{args.axis}={row['value']}: rel_l2 = {row.get('rel_l2')} ({row['status']})")
    print(f"wrote {path}")
    return 0


def _cmd_select(args) -> int:
    cfg = _load(args)
    seed = cfg.seeds[0]
    params, t_warm = harness.warm_start(cfg, seed, harness.boundary_sets(cfg))
    pool = sample_pool(cfg.pipeline.N, cfg.problem.bounds, stage_seed(seed, "pool"))
    sel, timing = harness.select_points(cfg.method, pool, params, cfg, seed)
    Path(args.dump_points).parent.mkdir(parents=True, exist_ok=True)
    sel.to_csv(args.dump_points)
    stages = " ".join(f"{k}={v:.3f}s" for k, v in timing.items())
    print(f"{cfg.method}: {len(sel)} points -> {args.dump_points} (t_warm={t_warm:.2f}s {stages})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinnselect", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reference", help="solve and save the finite-volume reference")
    p.add_argument("--nu", type=float, default=NU_DEFAULT)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--nx", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reference)

    def common(p, with_out=True):
        p.add_argument("--config", default=None, help="flat key = value file")
        p.add_argument("--method", choices=harness.METHODS)
        p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
        if with_out:
            p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("experiment", help="select, train and evaluate one method")
    common(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("ablate", help="sweep one pipeline setting")
    common(p)
    p.add_argument("--axis", required=True, choices=harness.ABLATION_AXES)
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("select", help="run selection only and dump the points")
    common(p, with_out=False)
    p.add_argument("--dump-points", required=True)
    p.set_defaults(func=_cmd_select)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
