#!/usr/bin/env python3
"""Explore the home-care robot lattice under every risk/time membership pairing.

Probabilities do not depend on the vague requirements, so the 540 model checks run
once and each pairing only re-scores memberships. Results go to stdout plus one CSV
and one DOT file per (pairing, rho) under --out-dir.
"""
import argparse
import dataclasses
import time
import warnings
from pathlib import Path

from flexverif.casestudy import HomecareParams, default_requirements, default_study, generate_model
from flexverif.explorer import EvalRecord, evaluate_all, frontier_search, optimal_specs, report, summary
from flexverif.fuzzy import NormalizationWarning, TNorm, conjoin, mu_spec
from flexverif.lang import load_model

RISK_SHAPES = ("sigmoid", "linear")
TIME_SHAPES = ("very_fast", "fast", "medium")


def rescore(records, cfg):
    lat = cfg.lattice
    out = []
    for r in records:
        each = tuple(mu_spec(req, r.point, lat) for req in cfg.requirements)
        out.append(EvalRecord(r.point, r.p_upper, r.p_lower, each, conjoin(each, cfg.tnorm), r.p_upper >= cfg.rho))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    ap.add_argument("--rho", type=float, nargs="+", default=[0.9])
    ap.add_argument("--tnorm", default="min", choices=("min", "product", "lukasiewicz"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--frontier", action="store_true", help="also run the frontier search and compare")
    args = ap.parse_args(argv)

    warnings.simplefilter("ignore", NormalizationWarning)
    params = HomecareParams()
    mdp = load_model(generate_model(params))
    print(f"model: {mdp.n_states} states, {mdp.n_choices} choices, {len(mdp.targets)} transitions")

    base = dataclasses.replace(default_study(params), tnorm=TNorm(args.tnorm))
    t0 = time.perf_counter()
    records = evaluate_all(base, mdp, workers=args.workers)
    print(f"evaluated {len(records)} specifications in {time.perf_counter() - t0:.1f}s\n")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for rho in args.rho:
        for risk_shape in RISK_SHAPES:
            for time_shape in TIME_SHAPES:
                cfg = dataclasses.replace(base, rho=rho, requirements=default_requirements(risk_shape, time_shape))
                recs = rescore(records, cfg)
                res = optimal_specs(recs, rho)
                tag = f"{risk_shape}_{time_shape}_rho{rho:g}"
                print(f"== risk={risk_shape} time={time_shape} rho={rho:g}")
                print(summary(res, cfg.lattice))
                if args.frontier:
                    fr = frontier_search(cfg, mdp)
                    same = (fr.w, fr.argmax, fr.mu_star) == (res.w, res.argmax, res.mu_star)
                    print(f"frontier agrees: {same} ({fr.checks} checks)")
                (args.out_dir / f"{tag}.csv").write_text(report(recs, res, "csv", cfg.lattice))
                (args.out_dir / f"{tag}.dot").write_text(report(recs, res, "dot", cfg.lattice, annotate="both"))
                print()


if __name__ == "__main__":
    main()
