"""Command line entry point: ``gtx {simulate,sweep,bounds,verify,oracle}``.

Exit codes: 0 success, 1 a verified bound failed, 2 invalid input, 3 sweep found no qualifying n.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis
from .acquisition import EmptyWindow, RegimeSpec
from .core import Instance
from .experiments import (
    SCHEDULERS,
    SWEEP_COLUMNS,
    THRESHOLD_SEARCH,
    VERIFY_COLUMNS,
    BoundPoint,
    DivisionSearch,
    NotFound,
    TrialConfig,
    default_grid,
    reports_to_csv,
    rows_to_csv,
    run_trials,
    sweep_min_n,
    verify_bounds,
)
from .schedulers import Exhaustive, InstanceTooLarge, RandomRetry, optimal_schedule

log = logging.getLogger("gtx")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NOT_FOUND = 0, 1, 2, 3

BOUND_IDS = (
    "split", "split-exact", "tree-sum", "tree", "cover", "cover-exact",
    "log-regime", "partition", "no-division", "existence",
)
BOUND_COLUMNS = (
    "formula_id", "n", "size", "p", "q", "c", "w", "v", "z",
    "raw_value", "clamped_value", "is_upper_bound",
)


class UsageError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _seed(args, config: dict) -> int:
    """--seed wins, then GTX_SEED, then the config file, then 0."""
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GTX_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"GTX_SEED must be an integer, got {env!r}") from exc
    return int(config.get("seed", config.get("base_seed", 0)))


def _pick(args, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    regime = _pick(args, config, "regime")
    if isinstance(regime, str):
        regime = json.loads(regime)
    policy_name = _pick(args, config, "policy", "random")
    attempts = int(_pick(args, config, "max_attempts", 64))
    policy = Exhaustive() if policy_name == "exhaustive" else RandomRetry(attempts)
    trial_config = TrialConfig(
        n=_pick(args, config, "n"),
        m=_pick(args, config, "m"),
        p=_pick(args, config, "p"),
        regime=RegimeSpec.from_dict(regime) if regime else None,
        trials=int(_pick(args, config, "trials", 1)),
        base_seed=_seed(args, config),
        target=_pick(args, config, "target", "F"),
        scheduler=_pick(args, config, "scheduler", "PadTreeSplit"),
        division_policy=policy,
    )
    reports = run_trials(trial_config, workers=args.workers)
    _emit(reports_to_csv(reports, timing=args.timing), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    n_grid = _pick(args, config, "n_grid")
    if isinstance(n_grid, str):
        n_grid = _ints(n_grid)
    search = DivisionSearch(allow_ties=False) if args.strict else THRESHOLD_SEARCH
    ps = _pick(args, config, "p")
    ms = _pick(args, config, "m")
    ps = ps if isinstance(ps, list) else _floats(str(ps))
    ms = ms if isinstance(ms, list) else _ints(str(ms))
    rows = []
    status = EXIT_OK
    for p in ps:
        for m in ms:
            try:
                res = sweep_min_n(
                    p, m,
                    error_target=float(_pick(args, config, "error_target", 0.01)),
                    trials=int(_pick(args, config, "trials", 1000)),
                    n_grid=n_grid,
                    base_seed=_seed(args, config),
                    search=search,
                )
            except NotFound as exc:
                log.error("%s", exc)
                status = EXIT_NOT_FOUND
                continue
            rows.extend(res.rows())
            log.info("p=%g m=%d min n=%d", p, m, res.min_n)
    _emit(rows_to_csv(rows, SWEEP_COLUMNS), args.out)
    return status


def bound_rows(formulas, ns, sizes, ps, c=None, w=None, v=None, z=1.0) -> list[dict]:
    rows = []
    for f in formulas:
        if f not in BOUND_IDS:
            raise UsageError(f"unknown formula {f!r}; choose from {', '.join(BOUND_IDS)}")
        for n in ns:
            for size in sizes:
                for p in ps:
                    q = 1.0 - p
                    extra = {}
                    if f == "split":
                        b = analysis.p_split_violation(n, size, q)
                    elif f == "split-exact":
                        b = analysis.BoundValue(analysis.p_split_violation_exact(n, size, q), False)
                    elif f == "tree-sum":
                        b = analysis.tree_error_union_bound(n, size, q)
                    elif f == "tree":
                        b = analysis.tree_error_bound(n, size, q)
                    elif f == "cover":
                        b = analysis.BoundValue(analysis.p_not_file_cover(n, size, q)[1], True)
                    elif f == "cover-exact":
                        b = analysis.BoundValue(analysis.p_not_file_cover(n, size, q)[0], False)
                    elif f == "log-regime":
                        if c is None:
                            raise UsageError("log-regime needs --c")
                        b, extra = analysis.log_regime_error_bound(n, c, q), {"c": c}
                    elif f == "partition":
                        if w is None or v is None:
                            raise UsageError("partition needs --w and --v")
                        b = analysis.partition_error_bound(n, size, w, v, q, z)
                        extra = {"w": w, "v": v, "z": z}
                    elif f == "no-division":
                        b = analysis.p_no_valid_division_bound(n, size, p)
                    else:
                        b = analysis.existence_error_bound(n, size, p)
                    rows.append({
                        "formula_id": f, "n": n, "size": size, "p": p, "q": q, **extra,
                        "raw_value": repr(b.value), "clamped_value": repr(b.clamped_value),
                        "is_upper_bound": b.is_upper_bound,
                    })
    return rows


def cmd_bounds(args) -> int:
    rows = bound_rows(
        args.formula.split(","), _ints(args.n), _ints(args.size), _floats(args.p),
        c=args.c, w=args.w, v=args.v, z=args.z,
    )
    _emit(rows_to_csv(rows, BOUND_COLUMNS), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.grid:
        points = [BoundPoint(**pt) for pt in json.loads(Path(args.grid).read_text())]
    else:
        points = default_grid()
    rows = verify_bounds(points, samples=args.samples, base_seed=_seed(args, {}))
    _emit(rows_to_csv(rows, VERIFY_COLUMNS), args.out)
    bad = [r for r in rows if not r["bound_ok"] or r["exact_ok"] is False]
    for r in bad:
        log.error("check failed: %s", {k: r[k] for k in ("formula", "n", "size", "p", "mc", "bound", "exact")})
    return EXIT_FAILED if bad else EXIT_OK


def cmd_oracle(args) -> int:
    inst = Instance.from_json(Path(args.instance).read_text())
    opt, schedule = optimal_schedule(inst, args.max_users, args.max_files)
    text = json.dumps({"optimum": opt, "schedule": [list(p) for p in schedule.pairs()]})
    _emit(text + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtx", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", help="write CSV/JSON here instead of stdout")
        if seed:
            p.add_argument("--seed", type=int, help="base seed (overrides GTX_SEED)")
        return p

    sim = common(sub.add_parser("simulate", help="seeded scheduler trials"))
    sim.add_argument("--config", help="JSON file with any of the flag names as keys")
    sim.add_argument("--n", type=int)
    sim.add_argument("--m", type=int)
    sim.add_argument("--p", type=float)
    sim.add_argument("--regime", help="RegimeSpec as JSON, e.g. '{\"kind\":\"LinearRegime\",...}'")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--scheduler", choices=SCHEDULERS)
    sim.add_argument("--policy", choices=("random", "exhaustive"))
    sim.add_argument("--max-attempts", dest="max_attempts", type=int)
    sim.add_argument("--target", choices=("F", "T"))
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--timing", action="store_true", help="add a wall_time column")
    sim.set_defaults(func=cmd_simulate)

    sw = common(sub.add_parser("sweep", help="minimum n with existence error below target"))
    sw.add_argument("--config")
    sw.add_argument("--p", help="comma separated pickup probabilities")
    sw.add_argument("--m", help="comma separated user counts (powers of two)")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--error-target", dest="error_target", type=float)
    sw.add_argument("--n-grid", dest="n_grid", help="comma separated ascending n values")
    sw.add_argument("--strict", action="store_true", help="count equal-union halves as failed divisions")
    sw.set_defaults(func=cmd_sweep)

    bd = common(sub.add_parser("bounds", help="closed-form values on a parameter grid"), seed=False)
    bd.add_argument("--formula", default="split,tree,cover,no-division,existence", help=f"any of {','.join(BOUND_IDS)}")
    bd.add_argument("--n", required=True)
    bd.add_argument("--size", required=True, help="group size d or user count m")
    bd.add_argument("--p", required=True)
    bd.add_argument("--c", type=float)
    bd.add_argument("--w", type=float)
    bd.add_argument("--v", type=float)
    bd.add_argument("--z", type=float, default=1.0)
    bd.set_defaults(func=cmd_bounds)

    vf = common(sub.add_parser("verify", help="Monte Carlo check of the closed forms"))
    vf.add_argument("--grid", help="JSON list of {formula,n,size,p}; default built-in grid")
    vf.add_argument("--samples", type=int, default=10_000)
    vf.set_defaults(func=cmd_verify)

    orc = common(sub.add_parser("oracle", help="exact optimum for a tiny JSON instance"), seed=False)
    orc.add_argument("instance")
    orc.add_argument("--max-users", dest="max_users", type=int, default=5)
    orc.add_argument("--max-files", dest="max_files", type=int, default=6)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NotFound as exc:
        log.error("%s", exc)
        return EXIT_NOT_FOUND
    except (UsageError, ValueError, TypeError, KeyError, EmptyWindow, InstanceTooLarge, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
