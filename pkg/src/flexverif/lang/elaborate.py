"""Build an explicit :class:`~flexverif.mdp.Mdp` from a parsed model.

Semantics follow the usual PRISM conventions: an unlabelled command is an
action of its own module; commands sharing an action label synchronise
across every module whose alphabet contains the label, multiplying branch
probabilities and merging assignments.  Exploration is breadth-first from
the initial valuation, batched per level with numpy.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..mdp import PROB_TOL, STUTTER, Mdp
from .ast import CommandAst, ModelAst, print_command
from .evaluate import EvaluationError, as_scalar, evaluate
from .parser import ModelError, parse


class ElaborationError(ModelError):
    pass


class UpdateOutOfRange(ElaborationError):
    pass


class ProbabilitySumError(ElaborationError):
    pass


class ConflictingAssignment(ElaborationError):
    pass


class DeadlockError(ElaborationError):
    pass


@dataclass(frozen=True)
class _Var:
    name: str
    module: str
    low: int
    high: int
    init: int
    is_bool: bool


@dataclass(frozen=True)
class _Part:
    module: str
    index: int
    command: CommandAst


@dataclass(frozen=True)
class _Slot:
    name: str
    parts: tuple[_Part, ...]


def _eval_constants(ast: ModelAst) -> dict:
    env: dict = {}
    for c in ast.constants:
        try:
            v = as_scalar(evaluate(c.expr, env))
        except EvaluationError as exc:
            raise ElaborationError(f"constant {c.name}: {exc}") from None
        if c.type == "bool":
            if not isinstance(v, bool):
                raise ElaborationError(f"constant {c.name} declared bool but is {v!r}")
            env[c.name] = np.bool_(v)
        elif isinstance(v, bool):
            raise ElaborationError(f"constant {c.name} declared {c.type} but is boolean")
        elif c.type == "int":
            if float(v) != int(v):
                raise ElaborationError(f"constant {c.name} declared int but is {v!r}")
            env[c.name] = int(v)
        else:
            env[c.name] = float(v)
    return env


def _variables(ast: ModelAst, consts: dict) -> list[_Var]:
    out = []
    for m in ast.modules:
        for v in m.variables:
            try:
                init = as_scalar(evaluate(v.init, consts))
                if v.is_bool:
                    lo, hi = 0, 1
                    if not isinstance(init, bool):
                        raise ElaborationError(f"bool variable {v.name} initialised with {init!r}")
                else:
                    lo = as_scalar(evaluate(v.low, consts))
                    hi = as_scalar(evaluate(v.high, consts))
                    if isinstance(init, bool) or float(init) != int(init):
                        raise ElaborationError(f"variable {v.name} initialised with {init!r}")
            except EvaluationError as exc:
                raise ElaborationError(f"declaration of {v.name}: {exc}") from None
            lo, hi, init = int(lo), int(hi), int(init)
            if lo > hi:
                raise ElaborationError(f"variable {v.name} has empty range [{lo}..{hi}]")
            if not lo <= init <= hi:
                raise UpdateOutOfRange(f"initial value {init} of {v.name} outside [{lo}..{hi}]")
            out.append(_Var(v.name, m.name, lo, hi, init, v.is_bool))
    return out


def action_slots(ast: ModelAst) -> list[_Slot]:
    """Global action list in order of first appearance.

    An unlabelled command is named ``module:i``; a label is its own name
    when exactly one cross-module command combination exists, otherwise
    ``label[i,j,...]`` lists the participating command indices.
    """
    slots: list[_Slot] = []
    seen: set[str] = set()
    for m in ast.modules:
        for i, c in enumerate(m.commands):
            if c.action is None:
                slots.append(_Slot(f"{m.name}:{i}", (_Part(m.name, i, c),)))
                continue
            if c.action in seen:
                continue
            seen.add(c.action)
            per_module = []
            for mm in ast.modules:
                cmds = [_Part(mm.name, j, cc) for j, cc in enumerate(mm.commands) if cc.action == c.action]
                if cmds:
                    per_module.append(cmds)
            combos = list(itertools.product(*per_module))
            for combo in combos:
                name = c.action if len(combos) == 1 else f"{c.action}[{','.join(str(p.index) for p in combo)}]"
                slots.append(_Slot(name, tuple(combo)))
    return slots


def _context(vars_: list[_Var], vals: np.ndarray, part: _Part) -> str:
    state = ",".join(f"{v.name}={int(x)}" for v, x in zip(vars_, vals))
    return f"in state ({state}), module {part.module} command {part.index}: {print_command(part.command)}"


def elaborate(ast: ModelAst, fix_deadlocks: bool = False) -> Mdp:
    """Explore the reachable state space and return the explicit model.

    State 0 is the initial valuation; further states are numbered in
    breadth-first order of discovery (source state, then action, then branch).
    """
    consts = _eval_constants(ast)
    vars_ = _variables(ast, consts)
    k = len(vars_)
    var_index = {v.name: j for j, v in enumerate(vars_)}
    lows = np.array([v.low for v in vars_], dtype=np.int64)
    highs = np.array([v.high for v in vars_], dtype=np.int64)
    sizes = highs - lows + 1
    if float(np.prod(sizes.astype(float))) >= 2.0**62:
        raise ElaborationError("variable ranges too large to index")
    strides = np.concatenate([[1], np.cumprod(sizes[:-1])]).astype(np.int64) if k else np.zeros(0, np.int64)
    slots = action_slots(ast)

    def keys_of(vals: np.ndarray) -> np.ndarray:
        return ((vals - lows) * strides).sum(axis=1)

    init = np.array([[v.init for v in vars_]], dtype=np.int64).reshape(1, k)
    index: dict[int, int] = {int(keys_of(init)[0]): 0}
    chunks = [init]
    frontier, frontier_ids = init, np.array([0])
    t_src, t_slot, t_prob, t_key = [], [], [], []

    while len(frontier):
        m = len(frontier)
        env = dict(consts)
        env.update({v.name: frontier[:, j] if not v.is_bool else frontier[:, j].astype(bool) for j, v in enumerate(vars_)})
        lv_src, lv_slot, lv_seq, lv_prob, lv_vals = [], [], [], [], []
        for si, slot in enumerate(slots):
            mask = np.ones(m, dtype=bool)
            for part in slot.parts:
                try:
                    g = evaluate(part.command.guard, env)
                except EvaluationError as exc:
                    raise ElaborationError(f"guard of {print_command(part.command)}: {exc}") from None
                if np.asarray(g).dtype != np.bool_:
                    raise ElaborationError(f"guard is not boolean: {print_command(part.command)}")
                mask &= np.broadcast_to(g, (m,))
            rows = np.flatnonzero(mask)
            if not len(rows):
                continue
            n = len(rows)
            sub = {name: (val[rows] if isinstance(val, np.ndarray) and val.shape == (m,) else val) for name, val in env.items()}
            per_part = []
            for part in slot.parts:
                per_part.append(_branches(part, sub, n, vars_, var_index, frontier[rows]))
            seq = 0
            for combo in itertools.product(*per_part):
                p = np.ones(n)
                new = frontier[rows].copy()
                written: dict[int, _Part] = {}
                for part, (bp, assigns) in zip(slot.parts, combo):
                    p = p * bp
                    for j, val in assigns:
                        if j in written:
                            raise ConflictingAssignment(
                                f"variable {vars_[j].name} written by both module {written[j].module} "
                                f"and module {part.module} on action {slot.name}; "
                                + _context(vars_, frontier[rows[0]], part)
                            )
                        written[j] = part
                        new[:, j] = val
                bad = np.flatnonzero(((new < lows) | (new > highs)).any(axis=1))
                if len(bad):
                    r = bad[0]
                    j = int(np.flatnonzero((new[r] < lows) | (new[r] > highs))[0])
                    raise UpdateOutOfRange(
                        f"{vars_[j].name}={int(new[r, j])} outside [{vars_[j].low}..{vars_[j].high}] "
                        + _context(vars_, frontier[rows[r]], written.get(j, slot.parts[0]))
                    )
                lv_src.append(frontier_ids[rows])
                lv_slot.append(np.full(n, si))
                lv_seq.append(np.full(n, seq))
                lv_prob.append(p)
                lv_vals.append(new)
                seq += 1
        if not lv_src:
            break
        src = np.concatenate(lv_src)
        slot_arr = np.concatenate(lv_slot)
        seq_arr = np.concatenate(lv_seq)
        prob = np.concatenate(lv_prob)
        vals = np.concatenate(lv_vals)
        order = np.lexsort((seq_arr, slot_arr, src))
        src, slot_arr, prob, vals = src[order], slot_arr[order], prob[order], vals[order]
        keys = keys_of(vals)
        keep = prob > 0
        new_rows = []
        for r, key in enumerate(keys.tolist()):
            if keep[r] and key not in index:
                index[key] = len(index)
                new_rows.append(r)
        t_src.append(src[keep])
        t_slot.append(slot_arr[keep])
        t_prob.append(prob[keep])
        t_key.append(keys[keep])
        frontier = vals[new_rows]
        frontier_ids = np.arange(len(index) - len(new_rows), len(index))
        chunks.append(frontier)

    valuations = np.concatenate(chunks)
    n_states = len(valuations)
    if t_src:
        src = np.concatenate(t_src)
        slot_arr = np.concatenate(t_slot)
        prob = np.concatenate(t_prob)
        tgt = np.fromiter((index[key] for key in np.concatenate(t_key).tolist()), dtype=np.int64)
    else:
        src = slot_arr = tgt = np.zeros(0, dtype=np.int64)
        prob = np.zeros(0)

    # merge branches that land on the same state
    order = np.lexsort((tgt, slot_arr, src))
    src, slot_arr, tgt, prob = src[order], slot_arr[order], tgt[order], prob[order]
    if len(src):
        new_entry = np.concatenate([[True], (np.diff(src) != 0) | (np.diff(slot_arr) != 0) | (np.diff(tgt) != 0)])
        starts = np.flatnonzero(new_entry)
        prob = np.add.reduceat(prob, starts)
        src, slot_arr, tgt = src[starts], slot_arr[starts], tgt[starts]
        new_choice = np.concatenate([[True], (np.diff(src) != 0) | (np.diff(slot_arr) != 0)])
    else:
        new_choice = np.zeros(0, dtype=bool)
    c_starts = np.flatnonzero(new_choice)
    c_state = src[c_starts]
    c_action = slot_arr[c_starts]
    choice_ptr = np.concatenate([c_starts, [len(src)]]).astype(np.int64)
    counts = np.bincount(c_state, minlength=n_states)
    actions = tuple(s.name for s in slots)

    dead = np.flatnonzero(counts == 0)
    if len(dead):
        if not fix_deadlocks:
            shown = ", ".join(
                "(" + ",".join(f"{v.name}={int(x)}" for v, x in zip(vars_, valuations[s])) + ")" for s in dead[:5]
            )
            raise DeadlockError(f"{len(dead)} reachable state(s) without enabled commands, e.g. {shown}")
        if STUTTER not in actions:
            actions = actions + (STUTTER,)
        stutter = actions.index(STUTTER)
        c_state = np.concatenate([c_state, dead])
        c_action = np.concatenate([c_action, np.full(len(dead), stutter)])
        sizes_c = np.concatenate([np.diff(choice_ptr), np.ones(len(dead), dtype=np.int64)])
        tgt_parts = [tgt[choice_ptr[c]:choice_ptr[c + 1]] for c in range(len(c_starts))] + [[d] for d in dead]
        prob_parts = [prob[choice_ptr[c]:choice_ptr[c + 1]] for c in range(len(c_starts))] + [[1.0]] * len(dead)
        order = np.lexsort((c_action, c_state))
        c_state, c_action, sizes_c = c_state[order], c_action[order], sizes_c[order]
        tgt = np.concatenate([np.asarray(tgt_parts[i], dtype=np.int64) for i in order])
        prob = np.concatenate([np.asarray(prob_parts[i], dtype=float) for i in order])
        choice_ptr = np.concatenate([[0], np.cumsum(sizes_c)]).astype(np.int64)
        counts = np.bincount(c_state, minlength=n_states)

    env = dict(consts)
    env.update({v.name: valuations[:, j] if not v.is_bool else valuations[:, j].astype(bool) for j, v in enumerate(vars_)})
    labels: dict[str, np.ndarray] = {}
    for lab in ast.labels:
        try:
            val = evaluate(lab.expr, env)
        except EvaluationError as exc:
            raise ElaborationError(f"label {lab.name}: {exc}") from None
        if np.asarray(val).dtype != np.bool_:
            raise ElaborationError(f"label {lab.name} is not boolean")
        labels[lab.name] = np.broadcast_to(val, (n_states,)).copy()

    return Mdp(
        n_states=n_states,
        initial=0,
        actions=actions,
        state_ptr=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        choice_action=c_action.astype(np.int64),
        choice_ptr=choice_ptr,
        targets=tgt.astype(np.int64),
        probs=prob.astype(float),
        props=tuple(lab.name for lab in ast.labels),
        labels=labels,
        var_names=tuple(v.name for v in vars_),
        valuations=valuations,
        bool_vars=frozenset(v.name for v in vars_ if v.is_bool),
        constants={k: (v.item() if isinstance(v, np.generic) else v) for k, v in consts.items()},
    )


def _branches(part: _Part, sub: dict, n: int, vars_: list[_Var], var_index: dict, pre: np.ndarray):
    """Evaluate probabilities and assignment values of one command on ``n`` states."""
    out = []
    total = np.zeros(n)
    for b in part.command.branches:
        try:
            p = 1.0 if b.prob is None else evaluate(b.prob, sub)
        except EvaluationError as exc:
            raise ElaborationError(f"probability in {print_command(part.command)}: {exc}") from None
        if np.asarray(p).dtype == np.bool_:
            raise ProbabilitySumError(f"boolean probability in {print_command(part.command)}")
        p = np.broadcast_to(np.asarray(p, dtype=float), (n,))
        bad = np.flatnonzero((p < -PROB_TOL) | (p > 1 + PROB_TOL))
        if len(bad):
            raise ProbabilitySumError(f"probability {p[bad[0]]!r} outside [0,1] " + _context(vars_, pre[bad[0]], part))
        total = total + p
        assigns = []
        seen: set[int] = set()
        for a in b.assignments:
            j = var_index[a.var]
            if j in seen:
                raise ConflictingAssignment(f"variable {a.var} assigned twice in {print_command(part.command)}")
            seen.add(j)
            try:
                val = evaluate(a.expr, sub)
            except EvaluationError as exc:
                raise ElaborationError(f"update of {a.var} in {print_command(part.command)}: {exc}") from None
            val = np.broadcast_to(val, (n,))
            if vars_[j].is_bool:
                if val.dtype != np.bool_:
                    raise ElaborationError(f"non-boolean value assigned to bool {a.var}")
                val = val.astype(np.int64)
            else:
                if val.dtype == np.bool_:
                    raise ElaborationError(f"boolean value assigned to int {a.var}")
                if not np.all(val == np.floor(val)):
                    raise ElaborationError(f"non-integer value assigned to {a.var}")
                val = val.astype(np.int64)
            assigns.append((j, val))
        out.append((p, assigns))
    bad = np.flatnonzero(np.abs(total - 1.0) > PROB_TOL)
    if len(bad):
        raise ProbabilitySumError(
            f"branch probabilities sum to {total[bad[0]]:.12g} " + _context(vars_, pre[bad[0]], part)
        )
    return out


def load_model(text: str, fix_deadlocks: bool = False) -> Mdp:
    return elaborate(parse(text), fix_deadlocks=fix_deadlocks)
