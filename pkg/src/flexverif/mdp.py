"""Finite MDPs with labelled states, validation and specification restriction.

Transitions are stored in a flat, CSR-like layout so that restriction and
model checking can work on whole models with numpy:

* a *choice* is one enabled (state, action) pair; choices are sorted by
  state and then by action index,
* ``choice_ptr[c]:choice_ptr[c + 1]`` slices ``targets``/``probs`` to give the
  distribution of choice ``c``,
* ``state_ptr[s]:state_ptr[s + 1]`` slices the choices of state ``s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

PROB_TOL = 1e-9
STUTTER = "stutter"


class DeadlockAfterRestriction(Exception):
    def __init__(self, states: Sequence[int]):
        self.states = sorted(int(s) for s in states)
        shown = ", ".join(map(str, self.states[:10]))
        more = "" if len(self.states) <= 10 else f" (+{len(self.states) - 10} more)"
        super().__init__(f"restriction leaves reachable states without actions: {shown}{more}")


@dataclass(frozen=True)
class Distribution:
    """A finite distribution over state indices; zero entries are dropped."""

    entries: tuple[tuple[int, float], ...]

    @classmethod
    def of(cls, mapping: Mapping[int, float] | Iterable[tuple[int, float]]) -> "Distribution":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        merged: dict[int, float] = {}
        for t, p in items:
            merged[int(t)] = merged.get(int(t), 0.0) + float(p)
        return cls(tuple(sorted((t, p) for t, p in merged.items() if p != 0.0)))

    @property
    def total(self) -> float:
        return float(sum(p for _, p in self.entries))

    def as_dict(self) -> dict[int, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class Violation:
    kind: str  # "distribution-sum" | "probability-range" | "bad-target" | "deadlock" | "initial" | "label"
    message: str
    state: int | None = None
    action: str | None = None

    def __str__(self) -> str:
        where = []
        if self.state is not None:
            where.append(f"state {self.state}")
        if self.action is not None:
            where.append(f"action {self.action!r}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.kind}: {self.message}{loc}"


@dataclass(frozen=True, eq=False)
class Mdp:
    n_states: int
    initial: int
    actions: tuple[str, ...]
    state_ptr: np.ndarray
    choice_action: np.ndarray
    choice_ptr: np.ndarray
    targets: np.ndarray
    probs: np.ndarray
    props: tuple[str, ...] = ()
    labels: Mapping[str, np.ndarray] = field(default_factory=dict)
    restricted: bool = False
    var_names: tuple[str, ...] = ()
    valuations: np.ndarray | None = None
    bool_vars: frozenset = frozenset()
    constants: Mapping[str, float] = field(default_factory=dict)
    # indices into the parent model, set by restrict(); -1 marks an added stutter loop
    origin_state: np.ndarray | None = None
    origin_choice: np.ndarray | None = None

    @classmethod
    def from_transitions(
        cls,
        n_states: int,
        transitions: Mapping[tuple[int, str], Mapping[int, float] | Distribution],
        labels: Mapping[str, Iterable[int]] | None = None,
        initial: int = 0,
        props: Iterable[str] | None = None,
        actions: Sequence[str] | None = None,
    ) -> "Mdp":
        """Build a model from ``{(state, action_name): {target: prob}}``.

        Nothing is checked here beyond shape; use :func:`validate`.
        """
        names = list(actions) if actions is not None else []
        for _, a in transitions:
            if a not in names:
                names.append(a)
        index = {a: i for i, a in enumerate(names)}
        rows = []
        for (s, a), dist in transitions.items():
            d = dist if isinstance(dist, Distribution) else Distribution.of(dist)
            rows.append((int(s), index[a], d))
        rows.sort(key=lambda r: (r[0], r[1]))
        counts = np.zeros(n_states, dtype=np.int64)
        choice_action, choice_ptr, targets, probs = [], [0], [], []
        for s, a, d in rows:
            if 0 <= s < n_states:
                counts[s] += 1
            choice_action.append(a)
            for t, p in d.entries:
                targets.append(t)
                probs.append(p)
            choice_ptr.append(len(targets))
        label_masks = {}
        for name, members in (labels or {}).items():
            mask = np.zeros(n_states, dtype=bool)
            mask[list(members)] = True
            label_masks[name] = mask
        return cls(
            n_states=n_states,
            initial=initial,
            actions=tuple(names),
            state_ptr=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
            choice_action=np.asarray(choice_action, dtype=np.int64),
            choice_ptr=np.asarray(choice_ptr, dtype=np.int64),
            targets=np.asarray(targets, dtype=np.int64),
            probs=np.asarray(probs, dtype=float),
            props=tuple(props) if props is not None else tuple(label_masks),
            labels=label_masks,
        )

    # -- derived views -------------------------------------------------

    @property
    def n_choices(self) -> int:
        return len(self.choice_action)

    @cached_property
    def choice_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states), np.diff(self.state_ptr))

    @cached_property
    def trans_choice(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_choices), np.diff(self.choice_ptr))

    @cached_property
    def trans_source(self) -> np.ndarray:
        return self.choice_state[self.trans_choice]

    def choices_of(self, state: int) -> range:
        return range(int(self.state_ptr[state]), int(self.state_ptr[state + 1]))

    def enabled(self, state: int) -> list[str]:
        return [self.actions[self.choice_action[c]] for c in self.choices_of(state)]

    def distribution(self, state: int, action: str) -> Distribution | None:
        for c in self.choices_of(state):
            if self.actions[self.choice_action[c]] == action:
                lo, hi = self.choice_ptr[c], self.choice_ptr[c + 1]
                return Distribution(tuple(zip(self.targets[lo:hi].tolist(), self.probs[lo:hi].tolist())))
        return None

    def label_mask(self, name: str) -> np.ndarray:
        if name not in self.labels:
            raise KeyError(name)
        return self.labels[name]

    def variable_columns(self, rows: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Variable name -> value array (over ``rows`` or all states); bools as bool arrays."""
        if self.valuations is None:
            raise ValueError("model carries no variable valuations")
        vals = self.valuations if rows is None else self.valuations[rows]
        return {
            n: (vals[:, j].astype(bool) if n in self.bool_vars else vals[:, j])
            for j, n in enumerate(self.var_names)
        }

    def state_repr(self, state: int) -> str:
        if self.valuations is None or not self.var_names:
            return str(state)
        vals = self.valuations[state]
        return "(" + ",".join(f"{n}={int(v)}" for n, v in zip(self.var_names, vals)) + ")"

    def dump(self) -> str:
        """Canonical text dump of states, labels and transitions (for golden tests)."""
        out = [f"states {self.n_states} initial {self.initial}"]
        if self.var_names:
            out.append("vars " + " ".join(self.var_names))
            for s in range(self.n_states):
                out.append(f"s {s} " + " ".join(str(int(v)) for v in self.valuations[s]))
        for name in sorted(self.labels):
            members = np.flatnonzero(self.labels[name])
            out.append(f'label "{name}" ' + " ".join(map(str, members.tolist())))
        for c in range(self.n_choices):
            lo, hi = self.choice_ptr[c], self.choice_ptr[c + 1]
            dist = " ".join(f"{t}:{p!r}" for t, p in zip(self.targets[lo:hi].tolist(), self.probs[lo:hi].tolist()))
            out.append(f"{self.choice_state[c]} {self.actions[self.choice_action[c]]} {dist}")
        return "\n".join(out) + "\n"


class SpecPredicate:
    """A two-valued specification over (state, action) pairs.

    Predicates are evaluated lazily against a concrete model and yield a
    boolean mask over its choices; conjunction is pointwise ``and``.
    """

    def __init__(self, fn: Callable[[Mdp], np.ndarray], description: str = ""):
        self._fn = fn
        self.description = description

    def mask(self, mdp: Mdp) -> np.ndarray:
        m = np.asarray(self._fn(mdp), dtype=bool)
        if m.shape != (mdp.n_choices,):
            raise ValueError(f"predicate mask has shape {m.shape}, model has {mdp.n_choices} choices")
        return m

    @classmethod
    def everything(cls) -> "SpecPredicate":
        return cls(lambda mdp: np.ones(mdp.n_choices, dtype=bool), "true")

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SpecPredicate":
        mask = np.asarray(mask, dtype=bool).copy()
        return cls(lambda mdp: mask, "mask")

    @classmethod
    def from_function(cls, allow: Callable[[int, str], bool]) -> "SpecPredicate":
        def fn(mdp: Mdp) -> np.ndarray:
            return np.fromiter(
                (bool(allow(int(s), mdp.actions[a])) for s, a in zip(mdp.choice_state, mdp.choice_action)),
                dtype=bool,
                count=mdp.n_choices,
            )

        return cls(fn, "function")

    @classmethod
    def forbid(cls, pairs: Iterable[tuple[int, str]]) -> "SpecPredicate":
        banned = set(pairs)
        return cls.from_function(lambda s, a: (s, a) not in banned)

    def __and__(self, other: "SpecPredicate") -> "SpecPredicate":
        return conj([self, other])

    def __repr__(self) -> str:
        return f"SpecPredicate({self.description})"


def conj(preds: Sequence[SpecPredicate]) -> SpecPredicate:
    if not preds:
        return SpecPredicate.everything()
    if len(preds) == 1:
        return preds[0]

    def fn(mdp: Mdp) -> np.ndarray:
        out = preds[0].mask(mdp).copy()
        for p in preds[1:]:
            out &= p.mask(mdp)
        return out

    return SpecPredicate(fn, " & ".join(p.description or "?" for p in preds))


def validate(mdp: Mdp) -> list[Violation]:
    report: list[Violation] = []
    n = mdp.n_states
    if not 0 <= mdp.initial < n:
        report.append(Violation("initial", f"initial state {mdp.initial} outside 0..{n - 1}"))
    for name in mdp.labels:
        if name not in mdp.props:
            report.append(Violation("label", f"label {name!r} not among atomic propositions"))
        elif len(mdp.labels[name]) != n:
            report.append(Violation("label", f"label {name!r} has {len(mdp.labels[name])} entries, expected {n}"))

    for c in range(mdp.n_choices):
        lo, hi = mdp.choice_ptr[c], mdp.choice_ptr[c + 1]
        s = int(mdp.choice_state[c])
        a = mdp.actions[mdp.choice_action[c]]
        p = mdp.probs[lo:hi]
        t = mdp.targets[lo:hi]
        if hi == lo:
            report.append(Violation("distribution-sum", "empty distribution", s, a))
            continue
        if np.any((p < 0) | (p > 1)):
            report.append(Violation("probability-range", f"probabilities {p.tolist()} outside [0,1]", s, a))
        total = float(p.sum())
        if abs(total - 1.0) > PROB_TOL:
            report.append(Violation("distribution-sum", f"distribution sums to {total:.12g}", s, a))
        if np.any((t < 0) | (t >= n)):
            report.append(Violation("bad-target", f"targets {t.tolist()} outside 0..{n - 1}", s, a))
        if len(np.unique(t)) != len(t):
            report.append(Violation("bad-target", "duplicate target states", s, a))

    counts = np.diff(mdp.state_ptr)
    if mdp.restricted and 0 <= mdp.initial < n:
        candidates = reachable(mdp)
    else:
        candidates = range(n)
    for s in candidates:
        if counts[s] == 0:
            report.append(Violation("deadlock", "no enabled action", int(s)))
    return report


def _reach(mdp: Mdp, choice_mask: np.ndarray | None = None) -> np.ndarray:
    if mdp.n_states == 0:
        return np.zeros(0, dtype=bool)
    keep = np.ones(mdp.n_choices, dtype=bool) if choice_mask is None else choice_mask
    tmask = keep[mdp.trans_choice] & (mdp.probs > 0)
    graph = csr_matrix(
        (np.ones(int(tmask.sum())), (mdp.trans_source[tmask], mdp.targets[tmask])),
        shape=(mdp.n_states, mdp.n_states),
    )
    order = breadth_first_order(graph, mdp.initial, directed=True, return_predecessors=False)
    seen = np.zeros(mdp.n_states, dtype=bool)
    seen[order] = True
    return seen


def reachable(mdp: Mdp) -> set[int]:
    """States reachable from the initial state through positive-probability transitions."""
    return set(np.flatnonzero(_reach(mdp)).tolist())


def restrict(mdp: Mdp, f: SpecPredicate | np.ndarray, deadlock_mode: str = "error") -> Mdp:
    """Drop every choice that ``f`` forbids and trim to the reachable part.

    States of the result are the reachable ones, renumbered in increasing
    order of their original index; ``origin_state``/``origin_choice`` map
    back into ``mdp``.  A reachable state left without actions raises
    :class:`DeadlockAfterRestriction` (``deadlock_mode="error"``) or gets a
    probability-one self loop labelled ``stutter`` (``"stutter"``).
    """
    if deadlock_mode not in ("error", "stutter"):
        raise ValueError(f"unknown deadlock mode {deadlock_mode!r}")
    keep = f.mask(mdp) if isinstance(f, SpecPredicate) else np.asarray(f, dtype=bool)
    seen = _reach(mdp, keep)
    states = np.flatnonzero(seen)
    new_index = np.full(mdp.n_states, -1, dtype=np.int64)
    new_index[states] = np.arange(len(states))

    kept = keep & seen[mdp.choice_state]
    counts = np.bincount(mdp.choice_state[kept], minlength=mdp.n_states)[states]
    dead = states[counts == 0]
    actions = mdp.actions
    if len(dead):
        if deadlock_mode == "error":
            raise DeadlockAfterRestriction(dead.tolist())
        if STUTTER not in actions:
            actions = actions + (STUTTER,)
    stutter_idx = actions.index(STUTTER) if len(dead) else -1

    old_choices = np.flatnonzero(kept)
    sizes = np.diff(mdp.choice_ptr)[old_choices]
    # rebuild per choice, then splice stutter loops in state order
    c_state = new_index[mdp.choice_state[old_choices]]
    c_action = mdp.choice_action[old_choices]
    c_origin = old_choices
    if len(dead):
        d_new = new_index[dead]
        c_state = np.concatenate([c_state, d_new])
        c_action = np.concatenate([c_action, np.full(len(dead), stutter_idx)])
        c_origin = np.concatenate([c_origin, np.full(len(dead), -1)])
        sizes = np.concatenate([sizes, np.ones(len(dead), dtype=np.int64)])
    order = np.lexsort((c_action, c_state))
    c_state, c_action, c_origin, sizes = c_state[order], c_action[order], c_origin[order], sizes[order]

    choice_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n_trans = int(choice_ptr[-1])
    targets = np.empty(n_trans, dtype=np.int64)
    probs = np.empty(n_trans, dtype=float)
    real = c_origin >= 0
    if real.any():
        src_lo = mdp.choice_ptr[c_origin[real]]
        src_len = sizes[real]
        dst_lo = choice_ptr[:-1][real]
        offs = np.arange(int(src_len.sum())) - np.repeat(np.cumsum(src_len) - src_len, src_len)
        src_pos = np.repeat(src_lo, src_len) + offs
        dst_pos = np.repeat(dst_lo, src_len) + offs
        targets[dst_pos] = new_index[mdp.targets[src_pos]]
        probs[dst_pos] = mdp.probs[src_pos]
    if (~real).any():
        pos = choice_ptr[:-1][~real]
        targets[pos] = c_state[~real]
        probs[pos] = 1.0

    state_counts = np.bincount(c_state, minlength=len(states))
    parent_origin = mdp.origin_state[states] if mdp.origin_state is not None else states
    return Mdp(
        n_states=len(states),
        initial=int(new_index[mdp.initial]),
        actions=actions,
        state_ptr=np.concatenate([[0], np.cumsum(state_counts)]).astype(np.int64),
        choice_action=c_action.astype(np.int64),
        choice_ptr=choice_ptr,
        targets=targets,
        probs=probs,
        props=mdp.props,
        labels={k: v[states] for k, v in mdp.labels.items()},
        restricted=True,
        var_names=mdp.var_names,
        valuations=None if mdp.valuations is None else mdp.valuations[states],
        bool_vars=mdp.bool_vars,
        constants=mdp.constants,
        origin_state=parent_origin,
        origin_choice=c_origin,
    )


def transition_set(mdp: Mdp, original_ids: bool = True) -> set[tuple[int, str, tuple]]:
    """Set of (state, action, distribution) triples, keyed by original state ids."""
    ids = mdp.origin_state if (original_ids and mdp.origin_state is not None) else np.arange(mdp.n_states)
    out = set()
    for c in range(mdp.n_choices):
        lo, hi = mdp.choice_ptr[c], mdp.choice_ptr[c + 1]
        dist = tuple(sorted((int(ids[t]), float(p)) for t, p in zip(mdp.targets[lo:hi], mdp.probs[lo:hi])))
        out.add((int(ids[mdp.choice_state[c]]), mdp.actions[mdp.choice_action[c]], dist))
    return out
