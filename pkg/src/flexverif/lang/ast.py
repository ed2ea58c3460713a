"""Syntax tree for the guarded-command modelling language, plus a printer.

Source positions are carried on nodes but excluded from equality, so
``parse(print_model(ast)) == ast`` compares structure only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

Pos = tuple[int, int]


@dataclass(frozen=True)
class Num:
    value: Union[int, float]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Bool:
    value: bool
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    name: str
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    fn: str  # min | max | mod | next (next only in constraint templates)
    args: tuple["Expr", ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


Expr = Union[Num, Bool, Name, Unary, Binary, Call]


@dataclass(frozen=True)
class ConstDecl:
    name: str
    type: str  # int | double | bool
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class VarDecl:
    name: str
    low: Optional[Expr]  # None for bool
    high: Optional[Expr]
    init: Expr
    pos: Pos = field(default=(0, 0), compare=False, repr=False)

    @property
    def is_bool(self) -> bool:
        return self.low is None


@dataclass(frozen=True)
class Assignment:
    var: str
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Branch:
    prob: Optional[Expr]  # None: the single-update form, probability one
    assignments: tuple[Assignment, ...]


@dataclass(frozen=True)
class CommandAst:
    action: Optional[str]
    guard: Expr
    branches: tuple[Branch, ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class ModuleAst:
    name: str
    variables: tuple[VarDecl, ...]
    commands: tuple[CommandAst, ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class LabelDecl:
    name: str
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class ModelAst:
    constants: tuple[ConstDecl, ...]
    modules: tuple[ModuleAst, ...]
    labels: tuple[LabelDecl, ...]


# -- printing ----------------------------------------------------------------

_BINARY_PREC = {
    "|": 1,
    "&": 2,
    "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}
_NOT_PREC = 3
_NEG_PREC = 7
_ATOM_PREC = 8


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _BINARY_PREC[e.op]
    if isinstance(e, Unary):
        return _NOT_PREC if e.op == "!" else _NEG_PREC
    return _ATOM_PREC


def _wrap(e: Expr, need: int) -> str:
    s = print_expr(e)
    return f"({s})" if _prec(e) < need else s


def print_expr(e: Expr) -> str:
    if isinstance(e, Num):
        s = repr(e.value) if isinstance(e.value, float) else str(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Bool):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Unary):
        return e.op + _wrap(e.operand, _prec(e))
    if isinstance(e, Binary):
        p = _BINARY_PREC[e.op]
        if p == 4:
            return f"{_wrap(e.left, p + 1)}{e.op}{_wrap(e.right, p + 1)}"
        sep = " " if p <= 2 else ""
        return f"{_wrap(e.left, p)}{sep}{e.op}{sep}{_wrap(e.right, p + 1)}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(print_expr(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def _print_update(b: Branch) -> str:
    if not b.assignments:
        return "true"
    return " & ".join(f"({a.var}'={print_expr(a.expr)})" for a in b.assignments)


def print_command(c: CommandAst) -> str:
    if len(c.branches) == 1 and c.branches[0].prob is None:
        rhs = _print_update(c.branches[0])
    else:
        rhs = " + ".join(f"{print_expr(b.prob)}:{_print_update(b)}" for b in c.branches)
    return f"[{c.action or ''}] {print_expr(c.guard)} -> {rhs};"


def print_model(ast: ModelAst) -> str:
    lines = ["mdp", ""]
    for c in ast.constants:
        lines.append(f"const {c.type} {c.name} = {print_expr(c.expr)};")
    if ast.constants:
        lines.append("")
    for m in ast.modules:
        lines.append(f"module {m.name}")
        for v in m.variables:
            rng = "bool" if v.is_bool else f"[{print_expr(v.low)}..{print_expr(v.high)}]"
            lines.append(f"  {v.name} : {rng} init {print_expr(v.init)};")
        for c in m.commands:
            lines.append("  " + print_command(c))
        lines.append("endmodule")
        lines.append("")
    for lab in ast.labels:
        lines.append(f'label "{lab.name}" = {print_expr(lab.expr)};')
    return "\n".join(lines).rstrip() + "\n"
