"""``flexverif`` command line.

Exit codes: 0 success, 1 property-level failure, 2 input or parse error,
3 numeric failure (value iteration did not converge).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import casestudy
from .config import ConfigError, dump_config, load_config
from .explorer import PointEvaluationError, StudyConfig, report, run_study, summary
from .lang import ElaborationError, ModelError, load_model
from .lattice import SpecLattice
from .mdp import DeadlockAfterRestriction, validate
from .pctl import NonConvergence, QuerySyntaxError, UnknownLabel, parse_query, solve_until

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _read_model(path: str, fix_deadlocks: bool = False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    return load_model(text, fix_deadlocks=fix_deadlocks)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_validate(args) -> int:
    mdp = _read_model(args.model)
    problems = validate(mdp)
    print(f"{args.model}: {mdp.n_states} states, {mdp.n_choices} choices, {len(mdp.targets)} transitions")
    for v in problems:
        print(f"  {v.kind}: {v.message}")
    if problems:
        print(f"{len(problems)} problem(s)")
        return EXIT_PROPERTY
    print("ok")
    return EXIT_OK


def cmd_check(args) -> int:
    mdp = _read_model(args.model, fix_deadlocks=args.fix_deadlocks)
    phi = parse_query(args.query)
    values = solve_until(mdp, phi, tolerance=args.tolerance, max_iters=args.max_iters)
    if args.all_states:
        for s in range(mdp.n_states):
            print(f"{s}\t{mdp.state_repr(s)}\t{float(values[s])!r}")
    else:
        print(repr(float(values[mdp.initial])))
    return EXIT_OK


def _study(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else casestudy.default_study()
    overrides = {}
    for flag in ("rho", "mode", "tolerance", "start", "workers"):
        val = getattr(args, flag)
        if val is not None:
            overrides[flag] = val
    if args.tnorm is not None:
        from .fuzzy import TNorm

        overrides["tnorm"] = TNorm(args.tnorm)
    if overrides:
        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    return cfg


def cmd_explore(args) -> int:
    cfg = _study(args)
    lattice = cfg.lattice
    records, result = run_study(cfg)
    if records is None and (args.csv or args.dot):
        # the frontier search skips most points; fill in the table for output
        from .explorer import evaluate_all, optimal_specs

        records = evaluate_all(cfg)
        full = optimal_specs(records, cfg.rho)
        if (full.w, full.argmax, full.mu_star) != (result.w, result.argmax, result.mu_star):
            raise CliError("frontier search disagrees with exhaustive evaluation", EXIT_NUMERIC)
    if args.csv:
        _write(args.csv, report(records, result, "csv", lattice))
    if args.dot:
        _write(args.dot, report(records, result, "dot", lattice, annotate=args.annotate))
    print(summary(result, lattice))
    if args.require_nonempty and result.empty:
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_lattice(args) -> int:
    cfg = load_config(args.config) if args.config else casestudy.default_study()
    _write(args.out, SpecLattice(cfg.dimensions).to_dot())
    return EXIT_OK


def cmd_casestudy(args) -> int:
    params = casestudy.HomecareParams()
    changes = {k: getattr(args, k) for k in ("grid_w", "grid_h", "battery_capacity", "max_speed") if getattr(args, k) is not None}
    if changes:
        params = dataclasses.replace(params, **changes)
    try:
        text = casestudy.generate_model(params)
    except casestudy.InvalidParams as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        _write(args.out, text)
    if args.config_out:
        _write(args.config_out, dump_config(casestudy.default_study(params)))
    if not args.out and not args.config_out:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexverif", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse, elaborate and sanity-check a model")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check", help="evaluate an until query")
    p.add_argument("model")
    p.add_argument("--query", required=True)
    p.add_argument("--all-states", action="store_true", help="print the value of every state")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.add_argument("--fix-deadlocks", action="store_true", help="add self-loops to states with no command")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("explore", help="evaluate a specification lattice")
    p.add_argument("--config", help="study TOML file (default: built-in home-care study)")
    p.add_argument("--csv", help="write the per-specification table here")
    p.add_argument("--dot", help="write the annotated Hasse diagram here")
    p.add_argument("--annotate", choices=("p", "mu", "both"), default="p")
    p.add_argument("--rho", type=float)
    p.add_argument("--mode", choices=("exhaustive", "frontier"))
    p.add_argument("--tnorm", choices=("min", "product", "lukasiewicz"))
    p.add_argument("--tolerance", type=float)
    p.add_argument("--start", help="initial | min-label:<name>")
    p.add_argument("--workers", type=int)
    p.add_argument("--require-nonempty", action="store_true", help="exit 1 when no specification reaches rho")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("lattice", help="emit the Hasse diagram skeleton as DOT")
    p.add_argument("--config")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("casestudy", help="home-care robot case study")
    csub = p.add_subparsers(dest="action", required=True)
    e = csub.add_parser("emit", help="write the model and/or the default study config")
    e.add_argument("--out")
    e.add_argument("--config-out")
    e.add_argument("--grid-w", type=int)
    e.add_argument("--grid-h", type=int)
    e.add_argument("--battery-capacity", type=int)
    e.add_argument("--max-speed", type=int)
    e.set_defaults(func=cmd_casestudy)
    return ap


def _code_for(exc: BaseException) -> Optional[int]:
    if isinstance(exc, NonConvergence):
        return EXIT_NUMERIC
    if isinstance(exc, (ModelError, ElaborationError, ConfigError, QuerySyntaxError, UnknownLabel,
                        DeadlockAfterRestriction, ValueError, KeyError)):
        return EXIT_INPUT
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PointEvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _code_for(exc.__cause__) or EXIT_NUMERIC
    except Exception as exc:
        code = _code_for(exc)
        if code is None:
            raise
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
