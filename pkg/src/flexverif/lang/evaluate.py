"""Vectorised evaluation of expressions over arrays of valuations."""
from __future__ import annotations

from typing import Mapping, Union

import numpy as np

from .ast import Binary, Bool, Call, Expr, Name, Num, Unary

Value = Union[np.ndarray, int, float, bool, np.generic]


class EvaluationError(Exception):
    pass


def _is_bool(v: Value) -> bool:
    return np.asarray(v).dtype == np.bool_


def _num(v: Value, op: str) -> Value:
    if _is_bool(v):
        raise EvaluationError(f"operator {op!r} applied to a boolean")
    return v


def _boolean(v: Value, op: str) -> Value:
    if not _is_bool(v):
        raise EvaluationError(f"operator {op!r} applied to a number")
    return v


def evaluate(e: Expr, env: Mapping[str, Value], successor: Mapping[str, Value] | None = None) -> Value:
    """Evaluate ``e`` with names bound by ``env``.

    Array-valued bindings broadcast, so one call evaluates an expression for
    a whole batch of states.  ``successor`` binds names inside ``next(...)``.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Bool):
        return np.bool_(e.value)
    if isinstance(e, Name):
        try:
            return env[e.name]
        except KeyError:
            raise EvaluationError(f"unbound identifier {e.name!r}") from None
    if isinstance(e, Unary):
        v = evaluate(e.operand, env, successor)
        if e.op == "!":
            return np.logical_not(_boolean(v, "!"))
        return np.negative(_num(v, "-"))
    if isinstance(e, Binary):
        a = evaluate(e.left, env, successor)
        b = evaluate(e.right, env, successor)
        op = e.op
        if op == "&":
            return np.logical_and(_boolean(a, op), _boolean(b, op))
        if op == "|":
            return np.logical_or(_boolean(a, op), _boolean(b, op))
        if op in ("=", "!="):
            if _is_bool(a) != _is_bool(b):
                raise EvaluationError(f"comparison {op!r} between boolean and number")
            return np.equal(a, b) if op == "=" else np.not_equal(a, b)
        a, b = _num(a, op), _num(b, op)
        if op == "+":
            return np.add(a, b)
        if op == "-":
            return np.subtract(a, b)
        if op == "*":
            return np.multiply(a, b)
        if op == "/":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.true_divide(a, b)
            if not np.all(np.isfinite(out)):
                raise EvaluationError("division by zero")
            return out
        if op == "<":
            return np.less(a, b)
        if op == "<=":
            return np.less_equal(a, b)
        if op == ">":
            return np.greater(a, b)
        if op == ">=":
            return np.greater_equal(a, b)
        raise EvaluationError(f"unknown operator {op!r}")
    if isinstance(e, Call):
        if e.fn == "next":
            if successor is None:
                raise EvaluationError("next(...) is only available in transition constraints")
            return evaluate(e.args[0], successor, None)
        args = [_num(evaluate(a, env, successor), e.fn) for a in e.args]
        if e.fn == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if e.fn == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        if e.fn == "mod":
            if np.any(np.asarray(args[1]) == 0):
                raise EvaluationError("mod by zero")
            return np.mod(args[0], args[1])
        raise EvaluationError(f"unknown function {e.fn!r}")
    raise EvaluationError(f"not an expression: {e!r}")


def as_scalar(v: Value) -> Union[int, float, bool]:
    a = np.asarray(v)
    if a.ndim:
        raise EvaluationError("expected a constant expression")
    return a.item()
