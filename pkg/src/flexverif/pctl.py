"""Extremal probabilities of (bounded) until formulas over MDPs.

Unbounded queries run the graph-based qualitative precomputation first
(exact 0 and exact 1 states for either objective) and value iteration on
the remaining states.  The stopping rule bounds the change between sweeps,
not the distance to the true value.  Bounded queries are exactly ``bound``
steps of backward dynamic programming.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .mdp import Mdp

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERS = 1_000_000


class UnknownLabel(KeyError):
    def __str__(self) -> str:
        return f"unknown label {self.args[0]!r}"


class QuerySyntaxError(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"value iteration did not converge in {iterations} iterations (residual {residual:.3g})")


# -- state sets ----------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    label: str


@dataclass(frozen=True)
class TrueSet:
    pass


@dataclass(frozen=True)
class Not:
    arg: "StateSet"


@dataclass(frozen=True)
class And:
    left: "StateSet"
    right: "StateSet"


@dataclass(frozen=True)
class Or:
    left: "StateSet"
    right: "StateSet"


StateSet = Union[Atom, TrueSet, Not, And, Or]


def states_of(s: StateSet, mdp: Mdp) -> np.ndarray:
    if isinstance(s, TrueSet):
        return np.ones(mdp.n_states, dtype=bool)
    if isinstance(s, Atom):
        if s.label not in mdp.labels:
            raise UnknownLabel(s.label)
        return np.asarray(mdp.labels[s.label], dtype=bool)
    if isinstance(s, Not):
        return ~states_of(s.arg, mdp)
    if isinstance(s, And):
        return states_of(s.left, mdp) & states_of(s.right, mdp)
    if isinstance(s, Or):
        return states_of(s.left, mdp) | states_of(s.right, mdp)
    raise TypeError(f"not a state set: {s!r}")


def _print_set(s: StateSet) -> str:
    if isinstance(s, TrueSet):
        return "true"
    if isinstance(s, Atom):
        return f'"{s.label}"'
    if isinstance(s, Not):
        return "!" + _print_set(s.arg)
    op = "&" if isinstance(s, And) else "|"
    return f"({_print_set(s.left)} {op} {_print_set(s.right)})"


@dataclass(frozen=True)
class Formula:
    """``P{max,min}=? [ left U<=bound right ]``; ``bound=None`` is unbounded."""

    left: StateSet
    right: StateSet
    bound: Optional[int] = None
    objective: str = "max"

    def __post_init__(self):
        if self.objective not in ("max", "min"):
            raise ValueError(f"objective must be 'max' or 'min', not {self.objective!r}")
        if self.bound is not None and self.bound < 0:
            raise ValueError("bound must be nonnegative")

    def with_bound(self, bound: Optional[int]) -> "Formula":
        return Formula(self.left, self.right, bound, self.objective)

    def with_objective(self, objective: str) -> "Formula":
        return Formula(self.left, self.right, self.bound, objective)

    def __str__(self) -> str:
        b = "" if self.bound is None else f"<={self.bound}"
        return f"P{self.objective}=? [ {_print_set(self.left)} U{b} {_print_set(self.right)} ]"


_ATOM = r'(?:true|!\s*"[A-Za-z_]\w*"|"[A-Za-z_]\w*")'
_QUERY_RE = re.compile(
    rf"""^\s*P(?P<obj>max|min)\s*=\s*\?\s*\[\s*
         (?P<left>{_ATOM})\s*U\s*(?:<=\s*(?P<bound>\d+)\s*)?
         (?P<right>{_ATOM})\s*\]\s*$""",
    re.VERBOSE,
)


def _atom(text: str) -> StateSet:
    text = text.strip()
    if text == "true":
        return TrueSet()
    if text.startswith("!"):
        return Not(Atom(text[1:].strip().strip('"')))
    return Atom(text.strip('"'))


def parse_query(text: str) -> Formula:
    m = _QUERY_RE.match(text)
    if m is None:
        raise QuerySyntaxError(f"cannot parse query {text!r}; expected e.g. Pmax=? [ !\"a\" U<=5 \"a\" ]")
    bound = int(m["bound"]) if m["bound"] is not None else None
    return Formula(_atom(m["left"]), _atom(m["right"]), bound, m["obj"])


# -- numerics ------------------------------------------------------------


class _Ops:
    """Segment reductions over the choice layout of one model."""

    def __init__(self, mdp: Mdp):
        self.mdp = mdp
        self.counts = np.diff(mdp.state_ptr)
        self.has = self.counts > 0
        self.state_starts = mdp.state_ptr[:-1][self.has]
        self.choice_starts = mdp.choice_ptr[:-1]
        self.nonempty_choices = bool(mdp.n_choices) and bool(np.all(np.diff(mdp.choice_ptr) > 0))
        if mdp.n_choices and not self.nonempty_choices:
            raise ValueError("model has an empty distribution; run validate()")

    def choice_values(self, x: np.ndarray) -> np.ndarray:
        if not self.mdp.n_choices:
            return np.zeros(0)
        return np.add.reduceat(x[self.mdp.targets] * self.mdp.probs, self.choice_starts)

    def choice_any(self, mask: np.ndarray) -> np.ndarray:
        if not self.mdp.n_choices:
            return np.zeros(0, dtype=bool)
        return np.logical_or.reduceat(mask[self.mdp.targets], self.choice_starts)

    def choice_all(self, mask: np.ndarray) -> np.ndarray:
        if not self.mdp.n_choices:
            return np.zeros(0, dtype=bool)
        return np.logical_and.reduceat(mask[self.mdp.targets], self.choice_starts)

    def state_any(self, choice_mask: np.ndarray) -> np.ndarray:
        out = np.zeros(self.mdp.n_states, dtype=bool)
        if self.mdp.n_choices:
            out[self.has] = np.logical_or.reduceat(choice_mask, self.state_starts)
        return out

    def state_opt(self, cv: np.ndarray, objective: str, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.mdp.n_states, fill)
        if self.mdp.n_choices:
            red = np.maximum if objective == "max" else np.minimum
            out[self.has] = red.reduceat(cv, self.state_starts)
        return out


def _fix(step, start: np.ndarray) -> np.ndarray:
    cur = start
    while True:
        nxt = step(cur)
        if np.array_equal(nxt, cur):
            return cur
        cur = nxt


def prob0_max(ops: _Ops, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """States where every policy has probability 0 (complement of backward reachability)."""
    can = _fix(lambda r: r | (left & ops.state_any(ops.choice_any(r))), right.copy())
    return ~can


def prob1_max(ops: _Ops, left: np.ndarray, right: np.ndarray, no: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """States where some policy reaches ``right`` almost surely.

    Returns the set and, per state, the attractor layer in which it was
    added (0 for ``right``, -1 outside), which :func:`extract_policy` uses.
    """
    u = ~no
    while True:
        stay = ops.choice_all(u)
        r = right.copy()
        layer = np.where(right, 0, -1)
        k = 0
        while True:
            k += 1
            good = stay & ops.choice_any(r)
            add = left & u & ~r & ops.state_any(good)
            if not add.any():
                break
            r |= add
            layer[add] = k
        if np.array_equal(r, u):
            return u, layer
        u = r


def prob0_min(ops: _Ops, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """States where some policy avoids ``right`` surely."""
    dead = ~ops.has

    def step(z):
        return ~right & (~left | dead | ops.state_any(ops.choice_all(z)))

    return _fix(step, ~right)


def prob1_min(ops: _Ops, left: np.ndarray, right: np.ndarray, zero: np.ndarray) -> np.ndarray:
    """States where every policy reaches ``right`` almost surely."""
    bad = _fix(lambda v: v | (left & ~right & ops.state_any(ops.choice_any(v))), zero.copy())
    return ~bad


def _qualitative(ops: _Ops, phi: Formula, left: np.ndarray, right: np.ndarray):
    if phi.objective == "max":
        no = prob0_max(ops, left, right)
        yes, _ = prob1_max(ops, left, right, no)
    else:
        no = prob0_min(ops, left, right)
        yes = prob1_min(ops, left, right, no)
    return yes, no


def solve_until(
    mdp: Mdp,
    phi: Formula,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Optimal probability of ``phi`` from every state, as an array over states."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    left = states_of(phi.left, mdp)
    right = states_of(phi.right, mdp)
    ops = _Ops(mdp)
    if phi.bound is not None:
        return _bounded(ops, phi, left, right)
    yes, no = _qualitative(ops, phi, left, right)
    return _iterate(ops, phi.objective, yes, no, tolerance, max_iters)


def _bounded(ops: _Ops, phi: Formula, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    x = right.astype(float)
    active = left & ~right & ops.has
    for _ in range(phi.bound):
        sv = ops.state_opt(ops.choice_values(x), phi.objective)
        x = np.where(right, 1.0, np.where(active, sv, 0.0))
    return np.clip(x, 0.0, 1.0)


def _iterate(ops: _Ops, objective: str, yes, no, tolerance: float, max_iters: int) -> np.ndarray:
    x = yes.astype(float)
    maybe = ~yes & ~no
    if not maybe.any():
        return x
    residual = np.inf
    for _ in range(max_iters):
        sv = ops.state_opt(ops.choice_values(x), objective)
        new = np.where(maybe, sv, x)
        residual = float(np.max(np.abs(new - x)))
        x = new
        if residual < tolerance:
            return np.clip(x, 0.0, 1.0)
    raise NonConvergence(max_iters, residual)


def check_query(mdp: Mdp, query_text: str, tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    return solve_until(mdp, parse_query(query_text), tolerance=tolerance)


# -- policies ------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Memoryless policy: per state the chosen choice id and its action index (-1 if none)."""

    choices: np.ndarray
    actions: np.ndarray

    def action_names(self, mdp: Mdp) -> list[Optional[str]]:
        return [mdp.actions[a] if a >= 0 else None for a in self.actions]


def extract_policy(
    mdp: Mdp,
    phi: Formula,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> Policy:
    """An optimal memoryless policy for an unbounded until formula.

    Among actions attaining the Bellman optimum the lowest action index wins,
    except that for the max objective an action must also make progress
    towards the target; otherwise a value-preserving loop could be chosen.
    """
    if phi.bound is not None:
        raise ValueError("policy extraction is only defined for unbounded formulas")
    left = states_of(phi.left, mdp)
    right = states_of(phi.right, mdp)
    ops = _Ops(mdp)
    n = mdp.n_states
    cs = mdp.choice_state
    choice = np.full(n, -1, dtype=np.int64)
    slack = max(10 * tolerance, 1e-12)

    def first(cmask: np.ndarray, states: np.ndarray) -> None:
        """Give each state in ``states`` without a choice yet its first allowed choice."""
        idx = np.flatnonzero(cmask & states[cs] & (choice[cs] < 0))
        s, pos = np.unique(cs[idx], return_index=True)
        choice[s] = idx[pos]

    if phi.objective == "max":
        no = prob0_max(ops, left, right)
        yes, _ = prob1_max(ops, left, right, no)
        x = _iterate(ops, "max", yes, no, tolerance, max_iters)
        stay_yes = ops.choice_all(yes)
        # attractor to the target inside `yes`, then progress along optimal actions
        done = right.copy()
        optimal = ops.choice_values(x) >= x[cs] - slack
        for region, allowed in ((yes, stay_yes), (~yes & ~no, optimal)):
            pending = region & ~right
            while pending.any():
                good = allowed & ops.choice_any(done)
                before = choice.copy()
                first(good, pending)
                added = (choice >= 0) & (before < 0)
                if not added.any():
                    break
                done |= added
                pending &= ~added
            first(allowed, pending)
            done |= region
    else:
        no = prob0_min(ops, left, right)
        yes = prob1_min(ops, left, right, no)
        x = _iterate(ops, "min", yes, no, tolerance, max_iters)
        first(ops.choice_all(no), no & left & ~right)
        optimal = ops.choice_values(x) <= x[cs] + slack
        first(optimal, ~no & ~right)
    first(np.ones(mdp.n_choices, dtype=bool), np.ones(n, dtype=bool))
    actions = np.where(choice >= 0, mdp.choice_action[np.maximum(choice, 0)] if mdp.n_choices else -1, -1)
    return Policy(choice, actions)


def policy_values(mdp: Mdp, policy: Policy, phi: Formula) -> np.ndarray:
    """Exact probability of an unbounded until under a fixed memoryless policy (sparse solve)."""
    left = states_of(phi.left, mdp)
    right = states_of(phi.right, mdp)
    n = mdp.n_states
    rows, cols, vals = [], [], []
    for s in range(n):
        c = policy.choices[s]
        if c < 0:
            continue
        lo, hi = mdp.choice_ptr[c], mdp.choice_ptr[c + 1]
        rows.extend([s] * (hi - lo))
        cols.extend(mdp.targets[lo:hi].tolist())
        vals.extend(mdp.probs[lo:hi].tolist())
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # states that can reach `right` through `left` in the induced chain
    can = right.copy()
    while True:
        nxt = can | (left & ((P @ can.astype(float)) > 0))
        if np.array_equal(nxt, can):
            break
        can = nxt
    unknown = np.flatnonzero(can & ~right)
    x = right.astype(float)
    if len(unknown):
        A = sp.identity(len(unknown), format="csr") - P[unknown][:, unknown]
        b = np.asarray(P[unknown][:, np.flatnonzero(right)].sum(axis=1)).ravel()
        x[unknown] = np.atleast_1d(spsolve(A.tocsc(), b))
    return x
