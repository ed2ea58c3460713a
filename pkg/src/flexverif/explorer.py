"""Evaluate a lattice of specifications and find the best ones above a probability threshold.

For each specification the model is restricted, the until query is
checked (its step bound taken from the horizon dimension, if any) and the
vague requirements are scored.  ``W`` collects the specifications whose
upper probability reaches ``rho``; the answer is the set of members of
``W`` with the highest conjoined membership.
"""
from __future__ import annotations

import csv
import io
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .fuzzy import TNorm, VagueRequirement, conjoin, mu_spec, require_normalized
from .lattice import DesignDimension, SpecLattice, SpecPoint
from .mdp import Mdp, restrict
from .pctl import DEFAULT_TOLERANCE, Formula, parse_query, solve_until

MODES = ("exhaustive", "frontier")


class PointEvaluationError(RuntimeError):
    """Failure while evaluating one specification; the cause is chained."""

    def __init__(self, point: SpecPoint, name: str, cause: BaseException):
        self.point = point
        super().__init__(f"while evaluating {name}: {type(cause).__name__}: {cause}")


def parse_start(start: str) -> Optional[str]:
    """``None`` for the initial state, else the label whose states are minimised over."""
    s = start.strip()
    if s == "initial":
        return None
    for prefix in ("min-label:", "min_over_label:", "min_label:"):
        if s.startswith(prefix) and len(s) > len(prefix):
            return s[len(prefix):]
    if s.startswith("min_over_label(") and s.endswith(")"):
        return s[len("min_over_label("):-1].strip().strip('"')
    raise ValueError(f"bad start specification {start!r}; use 'initial' or 'min-label:<name>'")


@dataclass
class StudyConfig:
    model: str = "casestudy"
    query: str = 'Pmax=? [ !"service" U "service" ]'
    rho: float = 0.9
    dimensions: Sequence[DesignDimension] = ()
    requirements: Sequence[VagueRequirement] = ()
    tnorm: TNorm = field(default_factory=TNorm)
    mode: str = "exhaustive"
    start: str = "initial"
    compute_lower: bool = False
    deadlock_mode: str = "error"
    tolerance: float = DEFAULT_TOLERANCE
    mu_mode: str = "strict"
    # path steps per unit of the horizon dimension
    horizon_scale: int = 1
    casestudy_params: Optional[object] = None
    workers: int = 1
    base_dir: Optional[Path] = None

    def __post_init__(self):
        self.dimensions = tuple(self.dimensions)
        self.requirements = tuple(self.requirements)
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0,1], got {self.rho}")
        if not self.dimensions:
            raise ValueError("study needs at least one dimension")
        if not self.requirements:
            raise ValueError("study needs at least one vague requirement")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.deadlock_mode not in ("error", "stutter"):
            raise ValueError("deadlock_mode must be 'error' or 'stutter'")
        if self.mu_mode not in ("strict", "reachable"):
            raise ValueError("mu_mode must be 'strict' or 'reachable'")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.horizon_scale < 1:
            raise ValueError("horizon_scale must be at least 1")
        parse_start(self.start)
        parse_query(self.query)
        lattice = self.lattice
        for req in self.requirements:
            dim = lattice.dimensions[lattice.dimension_index(req.dimension)]
            require_normalized(req, dim.features)

    @property
    def lattice(self) -> SpecLattice:
        return SpecLattice(tuple(self.dimensions))

    def load_model(self) -> Mdp:
        from .lang import load_model

        if self.model == "casestudy":
            from .casestudy import HomecareParams, generate_model

            return load_model(generate_model(self.casestudy_params or HomecareParams()))
        path = Path(self.model)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return load_model(path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class EvalRecord:
    point: SpecPoint
    p_upper: float
    p_lower: Optional[float]
    mu_each: tuple[float, ...]
    mu: float
    in_w: bool


@dataclass(frozen=True)
class OptimalResult:
    w: tuple[SpecPoint, ...]
    argmax: tuple[SpecPoint, ...]
    mu_star: Optional[float]  # None when W is empty
    frontier: tuple[SpecPoint, ...] = ()
    checks: Optional[int] = None

    @property
    def empty(self) -> bool:
        return not self.w


class Evaluator:
    """Memoised per-specification evaluation against one elaborated model."""

    def __init__(self, cfg: StudyConfig, mdp: Optional[Mdp] = None):
        self.cfg = cfg
        self.mdp = mdp if mdp is not None else cfg.load_model()
        self.lattice = cfg.lattice
        self.formula = parse_query(cfg.query).with_objective("max")
        self.start_label = parse_start(cfg.start)
        if self.start_label is not None and self.start_label not in self.mdp.labels:
            raise ValueError(f"start label {self.start_label!r} not defined by the model")
        self._memo: dict[SpecPoint, tuple[float, Optional[float], Optional[Mdp]]] = {}
        self._lock = threading.Lock()
        self.checks = 0

    def formula_for(self, f: SpecPoint) -> Formula:
        h = self.lattice.horizon(f)
        if h is None:
            return self.formula
        return self.formula.with_bound(h * self.cfg.horizon_scale)

    def _start_value(self, restricted: Mdp, values: np.ndarray) -> float:
        if self.start_label is None:
            return float(values[restricted.initial])
        mask = restricted.labels[self.start_label]
        if not mask.any():
            raise ValueError(f"no reachable state carries label {self.start_label!r}")
        return float(values[mask].min())

    def probabilities(self, f: SpecPoint) -> tuple[float, Optional[float]]:
        """Upper (and optionally lower) probability of the query under ``f``."""
        with self._lock:
            if f in self._memo:
                hit = self._memo[f]
                return hit[0], hit[1]
        try:
            mask = self.lattice.point_mask(self.mdp, f)
            restricted = restrict(self.mdp, mask, self.cfg.deadlock_mode)
            phi = self.formula_for(f)
            upper = self._start_value(restricted, solve_until(restricted, phi, self.cfg.tolerance))
            lower = None
            if self.cfg.compute_lower:
                lo = solve_until(restricted, phi.with_objective("min"), self.cfg.tolerance)
                lower = self._start_value(restricted, lo)
        except Exception as exc:
            raise PointEvaluationError(f, self.lattice.point_name(f), exc) from exc
        keep = restricted if self.cfg.mu_mode == "reachable" else None
        with self._lock:
            if f not in self._memo:
                self._memo[f] = (upper, lower, keep)
                self.checks += 1
        return upper, lower

    def memberships(self, f: SpecPoint) -> tuple[float, ...]:
        restricted = None
        if self.cfg.mu_mode == "reachable":
            self.probabilities(f)
            restricted = self._memo[f][2]
        return tuple(
            mu_spec(req, f, self.lattice, self.cfg.mu_mode, self.mdp, restricted) for req in self.cfg.requirements
        )

    def record(self, f: SpecPoint) -> EvalRecord:
        upper, lower = self.probabilities(f)
        each = self.memberships(f)
        return EvalRecord(f, upper, lower, each, conjoin(each, self.cfg.tnorm), upper >= self.cfg.rho)


def evaluate_all(cfg: StudyConfig, mdp: Optional[Mdp] = None, workers: Optional[int] = None) -> list[EvalRecord]:
    """One record per specification, in lexicographic index order."""
    ev = Evaluator(cfg, mdp)
    points = ev.lattice.points()
    n = workers if workers is not None else cfg.workers
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            records = list(pool.map(ev.record, points))
    else:
        records = [ev.record(p) for p in points]
    return sorted(records, key=lambda r: r.point)


def optimal_specs(records: Iterable[EvalRecord], rho: float) -> OptimalResult:
    recs = sorted(records, key=lambda r: r.point)
    w = [r for r in recs if r.p_upper >= rho]
    if not w:
        return OptimalResult((), (), None, ())
    best = max(r.mu for r in w)
    points = {r.point for r in w}
    return OptimalResult(
        tuple(r.point for r in w),
        tuple(r.point for r in w if r.mu == best),
        best,
        tuple(p for p in sorted(points) if not _has_stronger(p, points)),
    )


def _has_stronger(p: SpecPoint, points: set) -> bool:
    return any(p[:d] + (p[d] - 1,) + p[d + 1:] in points for d in range(len(p)) if p[d] > 0)


def search_thresholds(shape: Sequence[int], in_w: Callable[[SpecPoint], bool]) -> dict[SpecPoint, int]:
    """For every prefix, the smallest last index whose point lies in ``W`` (``shape[-1]`` if none).

    ``W`` must be closed under weakening, so the threshold of a prefix is at
    most the threshold of each prefix one step stronger in any coordinate;
    that bound caps a binary search over the last coordinate.
    """
    *head, last = shape
    thr: dict[SpecPoint, int] = {}
    for prefix in np.ndindex(*head) if head else [()]:
        prefix = tuple(int(i) for i in prefix)
        hi = last
        for d in range(len(prefix)):
            if prefix[d] > 0:
                hi = min(hi, thr[prefix[:d] + (prefix[d] - 1,) + prefix[d + 1:]])
        lo = 0
        while lo < hi:
            mid = (lo + hi) // 2
            if in_w(prefix + (mid,)):
                hi = mid
            else:
                lo = mid + 1
        thr[prefix] = lo
    return thr


def frontier_optimal(
    shape: Sequence[int],
    prob: Callable[[SpecPoint], float],
    mu: Callable[[SpecPoint], float],
    rho: float,
) -> OptimalResult:
    """Same answer as :func:`optimal_specs` on a monotone table, calling ``prob`` sparingly."""
    calls = {}

    def in_w(p: SpecPoint) -> bool:
        if p not in calls:
            calls[p] = prob(p)
        return calls[p] >= rho

    thr = search_thresholds(shape, in_w)
    w = [p for p in np.ndindex(*shape) if p[-1] >= thr[p[:-1]]]
    w = [tuple(int(i) for i in p) for p in w]
    if not w:
        return OptimalResult((), (), None, (), len(calls))
    mus = {p: mu(p) for p in w}
    best = max(mus.values())
    wset = set(w)
    return OptimalResult(
        tuple(w),
        tuple(p for p in w if mus[p] == best),
        best,
        tuple(p for p in w if not _has_stronger(p, wset)),
        len(calls),
    )


def frontier_search(cfg: StudyConfig, mdp: Optional[Mdp] = None) -> OptimalResult:
    """Locate ``W`` by threshold search instead of checking every specification."""
    ev = Evaluator(cfg, mdp)
    bad = ev.lattice.monotonicity_violations(ev.mdp)
    if bad:
        raise ValueError(f"frontier search needs monotone constraint chains; violated at {bad}")
    res = frontier_optimal(
        ev.lattice.shape,
        lambda p: ev.probabilities(p)[0],
        lambda p: conjoin(ev.memberships(p), cfg.tnorm),
        cfg.rho,
    )
    return OptimalResult(res.w, res.argmax, res.mu_star, res.frontier, ev.checks)


def run_study(cfg: StudyConfig, mdp: Optional[Mdp] = None) -> tuple[list[EvalRecord] | None, OptimalResult]:
    """Run in the configured mode; the frontier mode yields no per-point records."""
    if cfg.mode == "frontier":
        return None, frontier_search(cfg, mdp)
    records = evaluate_all(cfg, mdp)
    res = optimal_specs(records, cfg.rho)
    return records, OptimalResult(res.w, res.argmax, res.mu_star, res.frontier, len(records))


# -- reporting -----------------------------------------------------------


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def report(
    records: Sequence[EvalRecord],
    result: OptimalResult,
    fmt: str,
    lattice: Optional[SpecLattice] = None,
    annotate: str = "p",
) -> str:
    """CSV table or DOT Hasse diagram (``W`` in red, argmax in blue)."""
    recs = sorted(records, key=lambda r: r.point)
    argmax, w = set(result.argmax), set(result.w)
    if fmt == "csv":
        m = len(recs[0].mu_each) if recs else 0
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["point", "p_upper", "p_lower"] + [f"mu_{i + 1}" for i in range(m)] + ["mu", "in_w", "is_argmax"])
        for r in recs:
            name = lattice.point_name(r.point) if lattice is not None else "f_" + "_".join(map(str, r.point))
            writer.writerow(
                [name, _fmt(r.p_upper), _fmt(r.p_lower)]
                + [_fmt(v) for v in r.mu_each]
                + [_fmt(r.mu), str(r.point in w).lower(), str(r.point in argmax).lower()]
            )
        return buf.getvalue()
    if fmt == "dot":
        if lattice is None:
            raise ValueError("DOT output needs the lattice")
        ann = {}
        for r in recs:
            if annotate == "p":
                text = f"{r.p_upper:.4f}"
            elif annotate == "mu":
                text = f"{r.mu:.4f}"
            else:
                text = f"{r.p_upper:.4f} / {r.mu:.4f}"
            color = "blue" if r.point in argmax else ("red" if r.point in w else None)
            ann[r.point] = (text, color)
        return lattice.to_dot(ann)
    raise ValueError(f"unknown report format {fmt!r}")


def summary(result: OptimalResult, lattice: SpecLattice, limit: int = 12) -> str:
    lines = [f"|W| = {len(result.w)}"]
    if result.empty:
        lines.append("W is empty: no specification reaches the threshold")
    else:
        names = [lattice.point_name(p) for p in result.argmax]
        shown = names if len(names) <= limit else names[:limit] + [f"... ({len(names) - limit} more)"]
        lines.append(f"argmax ({len(names)}) = {{" + ", ".join(shown) + "}")
        lines.append(f"mu* = {result.mu_star:.6g}")
        lines.append("frontier = {" + ", ".join(lattice.point_name(p) for p in result.frontier) + "}")
    if result.checks is not None:
        lines.append(f"model checks = {result.checks}")
    return "\n".join(lines)
