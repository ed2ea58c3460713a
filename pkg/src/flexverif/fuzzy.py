"""Membership functions, t-norms and specification-level satisfaction of vague requirements."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import TYPE_CHECKING, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

if TYPE_CHECKING:
    from .lattice import SpecLattice, SpecPoint
    from .mdp import Mdp

NORMALIZED_TOL = 1e-9
NORMALIZED_WARN = 0.99


class MissingMdp(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class NormalizationError(ValueError):
    pass


class NormalizationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sigmoid:
    """Decreasing logistic curve ``1 / (1 + exp(slope * (x - center)))``."""

    center: float
    slope: float

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("sigmoid slope must be positive")

    def __call__(self, x):
        return expit(-self.slope * (np.asarray(x, dtype=float) - self.center))


@dataclass(frozen=True)
class LinearRamp:
    """1 at ``full``, 0 at ``zero``, linear in between and clamped outside.

    ``full < zero`` gives a decreasing ramp, ``full > zero`` an increasing one.
    """

    full: float
    zero: float

    def __post_init__(self):
        if self.full == self.zero:
            raise ValueError("ramp end points must differ")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((self.zero - x) / (self.zero - self.full), 0.0, 1.0)


@dataclass(frozen=True)
class PiecewiseLinear:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise ValueError("piecewise membership needs at least one point")
        xs = [x for x, _ in pts]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("piecewise points must be sorted by x")
        if any(not 0.0 <= y <= 1.0 for _, y in pts):
            raise ValueError("piecewise membership values must lie in [0,1]")
        object.__setattr__(self, "points", pts)

    def __call__(self, x):
        xs, ys = zip(*self.points)
        return np.interp(np.asarray(x, dtype=float), xs, ys)


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("constant membership must lie in [0,1]")

    def __call__(self, x):
        return np.full(np.shape(x), self.value, dtype=float)


MembershipFn = Union[Sigmoid, LinearRamp, PiecewiseLinear, Constant]


def eval_fn(fn: MembershipFn, x):
    """Membership degree of ``x`` (scalar in, float out; arrays broadcast)."""
    out = np.clip(fn(x), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


# membership shapes used in the home-care study; all can be overridden in a study config
PRESETS: dict[str, MembershipFn] = {
    "sigmoid": Sigmoid(center=7.5, slope=1.0),
    "linear": LinearRamp(full=5, zero=15),
    "very_fast": LinearRamp(full=1, zero=7),
    "fast": LinearRamp(full=3, zero=9),
    "medium": LinearRamp(full=6, zero=10),
    "energy": LinearRamp(full=3, zero=8),
}


@dataclass(frozen=True)
class VagueRequirement:
    """A fuzzy requirement fed by the feature values of one design dimension."""

    name: str
    fn: MembershipFn
    dimension: str


def check_normalized(req: VagueRequirement, domain: Iterable[float]) -> bool:
    vals = np.asarray(list(domain), dtype=float)
    if not len(vals):
        raise EmptyInput("normalisation domain is empty")
    return bool(np.max(eval_fn(req.fn, vals)) >= 1.0 - NORMALIZED_TOL)


def require_normalized(req: VagueRequirement, domain: Iterable[float]) -> float:
    """Supremum of the membership over ``domain``; warns below 1, raises below 0.99."""
    vals = np.asarray(list(domain), dtype=float)
    if not len(vals):
        raise EmptyInput("normalisation domain is empty")
    sup = float(np.max(eval_fn(req.fn, vals)))
    if sup < NORMALIZED_WARN:
        raise NormalizationError(f"requirement {req.name!r} peaks at {sup:.6g} < {NORMALIZED_WARN} on its domain")
    if sup < 1.0 - NORMALIZED_TOL:
        warnings.warn(
            f"requirement {req.name!r} is not normalised (supremum {sup:.6g}); treated as approximately normal",
            NormalizationWarning,
            stacklevel=2,
        )
    return sup


@dataclass(frozen=True)
class TNorm:
    kind: str = "min"

    def __post_init__(self):
        if self.kind not in ("min", "product", "lukasiewicz"):
            raise ValueError(f"unknown t-norm {self.kind!r}")

    def __call__(self, a: float, b: float) -> float:
        if self.kind == "min":
            return min(a, b)
        if self.kind == "product":
            return a * b
        return max(0.0, a + b - 1.0)


def conjoin(values: Sequence[float], t: TNorm = TNorm()) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise EmptyInput("t-norm of an empty list")
    return float(reduce(t, vals))


def mu_spec(
    req: VagueRequirement,
    f: "SpecPoint",
    lattice: "SpecLattice",
    mode: str = "strict",
    mdp: Optional["Mdp"] = None,
    restricted: Optional["Mdp"] = None,
) -> float:
    """Degree to which the specification ``f`` satisfies ``req`` (infimum over permitted pairs).

    ``strict`` takes the infimum over every pair the specification permits.
    Feature values grow along a chain while constraints admit supersets, so
    that infimum is the membership of the feature at ``f``'s own chain index.

    ``reachable`` only looks at the state-action pairs that are reachable in
    ``restrict(mdp, f)``; each pair is scored by the strongest chain value
    that admits it.  A horizon dimension constrains no pair, so it is always
    scored as in strict mode.
    """
    d = lattice.dimension_index(req.dimension)
    dim = lattice.dimensions[d]
    if mode == "strict" or dim.kind == "horizon":
        return eval_fn(req.fn, dim.feature_at(f[d]))
    if mode != "reachable":
        raise ValueError(f"unknown membership mode {mode!r}")
    if mdp is None:
        raise MissingMdp("reachable-mode membership needs the model")
    from .mdp import restrict

    if restricted is None:
        pred, _ = lattice.materialize(f)
        restricted = restrict(mdp, pred, "stutter")
    levels = lattice.choice_levels(mdp, d)
    orig = restricted.origin_choice
    used = levels[orig[orig >= 0]]
    if not len(used):
        # only added stutter loops remain; they are admitted by every chain value
        return eval_fn(req.fn, dim.feature_at(0))
    feats = np.asarray(dim.features, dtype=float)[used]
    return float(np.min(eval_fn(req.fn, feats)))
