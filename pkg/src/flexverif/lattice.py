"""Families of specifications as products of ordered constraint chains.

Each design dimension is a chain of constraint values ordered from the
strongest (index 0) to the weakest.  A specification is one index per
dimension; ``f`` is a weakening of ``g`` when every index of ``f`` is at
least the matching index of ``g``.
"""
from __future__ import annotations

import itertools
import weakref
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .lang.evaluate import EvaluationError, evaluate
from .lang.parser import free_names, parse_expression
from .mdp import Mdp, SpecPredicate, conj

SpecPoint = tuple[int, ...]
KINDS = ("action_guard", "state_guard", "horizon")


class DimensionMismatch(ValueError):
    pass


class ConstraintTemplate:
    """Expression over a choice's source state with ``$v`` standing for the chain value.

    ``next(e)`` evaluates ``e`` in a successor state; a choice is allowed
    when the expression holds for all of its successors.  Model constants
    are in scope.
    """

    def __init__(self, text: str):
        self.text = text
        self.expr = parse_expression(text, allow_placeholders=True, allow_next=True)
        extra = {n for n in free_names(self.expr) if n.startswith("$")} - {"$v"}
        if extra:
            raise ValueError(f"unknown placeholder(s) {sorted(extra)} in constraint {text!r}")

    def mask(self, mdp: Mdp, value) -> np.ndarray:
        if mdp.n_choices == 0:
            return np.zeros(0, dtype=bool)
        env = dict(mdp.constants)
        env.update(mdp.variable_columns(mdp.trans_source))
        env["$v"] = value
        succ = dict(mdp.constants)
        succ.update(mdp.variable_columns(mdp.targets))
        try:
            ok = evaluate(self.expr, env, succ)
        except EvaluationError as exc:
            raise ValueError(f"constraint {self.text!r}: {exc}") from None
        ok = np.broadcast_to(np.asarray(ok), mdp.targets.shape)
        if ok.dtype != np.bool_:
            raise ValueError(f"constraint {self.text!r} is not boolean")
        return np.logical_and.reduceat(ok, mdp.choice_ptr[:-1])

    def __repr__(self) -> str:
        return f"ConstraintTemplate({self.text!r})"


Constraint = Union[str, ConstraintTemplate, Callable[[object], SpecPredicate], None]


@dataclass(frozen=True)
class DesignDimension:
    name: str
    kind: str
    values: tuple
    constraint: Constraint = None
    feature: Optional[tuple[float, ...]] = None
    _template: Optional[ConstraintTemplate] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.kind not in KINDS:
            raise ValueError(f"dimension {self.name}: unknown kind {self.kind!r}")
        if not self.values:
            raise ValueError(f"dimension {self.name}: empty chain")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"dimension {self.name}: repeated chain values")
        if all(isinstance(v, (int, float)) for v in self.values):
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise ValueError(f"dimension {self.name}: numeric values must increase towards the weakest")
        if self.feature is not None:
            object.__setattr__(self, "feature", tuple(float(x) for x in self.feature))
            if len(self.feature) != len(self.values):
                raise ValueError(f"dimension {self.name}: feature list must parallel the values")
        if self.kind == "horizon":
            if self.constraint is not None:
                raise ValueError(f"dimension {self.name}: horizon dimensions take no constraint")
            if not all(isinstance(v, int) and v >= 0 for v in self.values):
                raise ValueError(f"dimension {self.name}: horizons must be nonnegative integers")
        elif self.constraint is None:
            raise ValueError(f"dimension {self.name}: guard dimensions need a constraint")
        if isinstance(self.constraint, str):
            object.__setattr__(self, "_template", ConstraintTemplate(self.constraint))
        elif isinstance(self.constraint, ConstraintTemplate):
            object.__setattr__(self, "_template", self.constraint)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def features(self) -> tuple[float, ...]:
        if self.feature is not None:
            return self.feature
        return tuple(float(v) for v in self.values)

    def feature_at(self, i: int) -> float:
        return self.features[i]

    def fragment(self, i: int) -> SpecPredicate:
        value = self.values[i]
        if self.kind == "horizon":
            return SpecPredicate.everything()
        if self._template is not None:
            tmpl = self._template
            return SpecPredicate(lambda mdp: tmpl.mask(mdp, value), f"{self.name}<={value}")
        return self.constraint(value)


# per-model cache of fragment masks, keyed by (dimension, index)
_MASKS: "weakref.WeakKeyDictionary[Mdp, dict]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class SpecLattice:
    dimensions: tuple[DesignDimension, ...]

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        if not self.dimensions:
            raise ValueError("a lattice needs at least one dimension")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        if sum(d.kind == "horizon" for d in self.dimensions) > 1:
            raise ValueError("at most one horizon dimension")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.dimensions)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> list[SpecPoint]:
        """All specifications in lexicographic index order."""
        return list(itertools.product(*(range(n) for n in self.shape)))

    def dimension_index(self, name: str) -> int:
        for i, d in enumerate(self.dimensions):
            if d.name == name:
                return i
        raise KeyError(f"no dimension named {name!r}")

    def check_point(self, f: SpecPoint) -> None:
        if len(f) != len(self.dimensions):
            raise DimensionMismatch(f"point {f} has {len(f)} coordinates, lattice has {len(self.dimensions)}")
        for i, n in zip(f, self.shape):
            if not 0 <= i < n:
                raise DimensionMismatch(f"point {f} outside lattice shape {self.shape}")

    def point_name(self, f: SpecPoint) -> str:
        """Display name using chain values, e.g. ``f_{6,3,5}``."""
        vals = [str(d.values[i]) for d, i in zip(self.dimensions, f)]
        return "f_{" + ",".join(vals) + "}"

    @staticmethod
    def node_id(f: SpecPoint) -> str:
        return "f_" + "_".join(map(str, f))

    def horizon(self, f: SpecPoint) -> Optional[int]:
        for d, i in zip(self.dimensions, f):
            if d.kind == "horizon":
                return int(d.values[i])
        return None

    def materialize(self, f: SpecPoint) -> tuple[SpecPredicate, Optional[int]]:
        self.check_point(f)
        frags = [d.fragment(i) for d, i in zip(self.dimensions, f) if d.kind != "horizon"]
        return conj(frags), self.horizon(f)

    # -- cached masks over a concrete model ------------------------------

    def fragment_mask(self, mdp: Mdp, d: int, i: int) -> np.ndarray:
        cache = _MASKS.setdefault(mdp, {})
        key = (self.dimensions[d], i)
        if key not in cache:
            m = self.dimensions[d].fragment(i).mask(mdp)
            m.setflags(write=False)
            cache[key] = m
        return cache[key]

    def point_mask(self, mdp: Mdp, f: SpecPoint) -> np.ndarray:
        self.check_point(f)
        out = np.ones(mdp.n_choices, dtype=bool)
        for d, (dim, i) in enumerate(zip(self.dimensions, f)):
            if dim.kind != "horizon":
                out &= self.fragment_mask(mdp, d, i)
        return out

    def choice_levels(self, mdp: Mdp, d: int) -> np.ndarray:
        """Per choice, the strongest chain index of dimension ``d`` that admits it (len if none)."""
        dim = self.dimensions[d]
        if dim.kind == "horizon":
            return np.zeros(mdp.n_choices, dtype=np.int64)
        stack = np.vstack([self.fragment_mask(mdp, d, i) for i in range(len(dim))])
        level = np.argmax(stack, axis=0)
        level[~stack.any(axis=0)] = len(dim)
        return level

    def monotonicity_violations(self, mdp: Mdp) -> list[tuple[str, int]]:
        """(dimension, index) pairs whose fragment is not contained in the next, weaker one."""
        bad = []
        for d, dim in enumerate(self.dimensions):
            if dim.kind == "horizon":
                continue
            for i in range(len(dim) - 1):
                if np.any(self.fragment_mask(mdp, d, i) & ~self.fragment_mask(mdp, d, i + 1)):
                    bad.append((dim.name, i))
        return bad

    def hasse_edges(self) -> list[tuple[SpecPoint, SpecPoint]]:
        return hasse_edges(self)

    def to_dot(self, annotations: Optional[Mapping[SpecPoint, tuple[str, Optional[str]]]] = None) -> str:
        return to_dot(self, annotations)


def weaker_eq(f: SpecPoint, g: SpecPoint) -> bool:
    """True when ``f`` is a weakening of ``g`` (``f`` allows every pair ``g`` allows)."""
    if len(f) != len(g):
        raise DimensionMismatch(f"points {f} and {g} have different dimension")
    return all(a >= b for a, b in zip(f, g))


def weaker_eq_pointwise(lattice: SpecLattice, mdp: Mdp, f: SpecPoint, g: SpecPoint) -> bool:
    """Weakening checked on permitted pairs of ``mdp`` rather than on indices (horizons compared directly)."""
    hf, hg = lattice.horizon(f), lattice.horizon(g)
    if hf is not None and hf < hg:
        return False
    mf, mg = lattice.point_mask(mdp, f), lattice.point_mask(mdp, g)
    return bool(np.all(mf | ~mg))


def materialize(f: SpecPoint, lattice: SpecLattice) -> tuple[SpecPredicate, Optional[int]]:
    return lattice.materialize(f)


def hasse_edges(lattice: SpecLattice) -> list[tuple[SpecPoint, SpecPoint]]:
    """Covering pairs ``(stronger, weaker)``: points one step apart in one coordinate."""
    shape = lattice.shape
    edges = []
    for p in lattice.points():
        for d, n in enumerate(shape):
            if p[d] + 1 < n:
                edges.append((p, p[:d] + (p[d] + 1,) + p[d + 1:]))
    return edges


def cover_count(shape: Sequence[int]) -> int:
    total = 0
    for i, n in enumerate(shape):
        total += (n - 1) * int(np.prod([m for j, m in enumerate(shape) if j != i]))
    return total


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(
    lattice: SpecLattice,
    annotations: Optional[Mapping[SpecPoint, tuple[str, Optional[str]]]] = None,
    name: str = "F",
) -> str:
    """Hasse diagram as a DOT digraph with the strongest specification on top.

    Edges run weaker -> stronger; ``rankdir=BT`` puts edge heads above tails.
    """
    annotations = annotations or {}
    lines = [f"digraph {name} {{", "  rankdir=BT;", "  node [shape=plaintext];"]
    for p in lattice.points():
        text, color = annotations.get(p, ("", None))
        label = lattice.point_name(p) + (f": {text}" if text else "")
        attrs = [f"label={_dot_quote(label)}"]
        if color:
            attrs += [f"color={color}", f"fontcolor={color}"]
        lines.append(f"  {lattice.node_id(p)} [{', '.join(attrs)}];")
    for strong, weak in hasse_edges(lattice):
        lines.append(f"  {lattice.node_id(weak)} -> {lattice.node_id(strong)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
