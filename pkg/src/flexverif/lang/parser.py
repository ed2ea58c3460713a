"""Tokenizer and recursive-descent parser for ``.mdp`` model files.

Grammar (whitespace-insensitive, ``//`` line comments)::

    model    := "mdp" item*
    item     := const | module | label
    const    := "const" ("int"|"double"|"bool") NAME "=" expr ";"
    module   := "module" NAME vardecl* command* "endmodule"
    vardecl  := NAME ":" ("[" expr ".." expr "]" | "bool") "init" expr ";"
    command  := "[" NAME? "]" expr "->" branches ";"
    branches := update | (expr ":" update) ("+" expr ":" update)*
    update   := "true" | "(" NAME "'" "=" expr ")" ("&" "(" NAME "'" "=" expr ")")*
    label    := "label" "\"" NAME "\"" "=" expr ";"

Expressions use C-like precedence: ``|`` < ``&`` < ``!`` < comparisons
< ``+ -`` < ``* /`` < unary minus, with ``min``/``max``/``mod`` calls.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .ast import (
    Assignment,
    Binary,
    Bool,
    Branch,
    Call,
    CommandAst,
    ConstDecl,
    Expr,
    LabelDecl,
    ModelAst,
    ModuleAst,
    Name,
    Num,
    Unary,
    VarDecl,
)


class ModelError(Exception):
    """Base class for problems found in model text."""


class ModelSyntaxError(ModelError, SyntaxError):
    def __init__(self, message: str, line: int, col: int, expected: Iterable[str] = ()):
        self.line = line
        self.col = col
        self.expected = frozenset(expected)
        exp = ""
        if self.expected:
            exp = " (expected " + ", ".join(sorted(self.expected)) + ")"
        self.msg = message
        self.lineno, self.offset = line, col
        Exception.__init__(self, f"{line}:{col}: {message}{exp}")

    def __str__(self) -> str:
        return self.args[0]


class DuplicateNameError(ModelError):
    pass


class UndeclaredIdentifierError(ModelError):
    pass


KEYWORDS = {
    "mdp", "const", "int", "double", "bool", "module", "endmodule",
    "init", "label", "true", "false",
}
FUNCTIONS = {"min", "max", "mod"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)
  | (?P<placeholder>\$[A-Za-z_]\w*)
  | (?P<name>[A-Za-z_]\w*)
  | (?P<string>"[^"\n]*")
  | (?P<op>->|\.\.|<=|>=|!=|[=<>+\-*/&|!()\[\]:;,'])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | name | placeholder | string | op | kw | eof
    text: str
    line: int
    col: int
    end_line: int
    end_col: int

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


def tokenize(text: str, allow_placeholders: bool = False) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None or (m.lastgroup == "placeholder" and not allow_placeholders):
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "ws":
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = pos + chunk.rfind("\n") + 1
            pos = m.end()
            continue
        if kind == "name" and chunk in KEYWORDS:
            kind = "kw"
        end = m.end()
        tokens.append(Token(kind, chunk, line, col, line, end - line_start + 1))
        pos = end
    col = pos - line_start + 1
    tokens.append(Token("eof", "", line, col, line, col))
    return tokens


class _Parser:
    def __init__(self, text: str, allow_placeholders: bool = False, allow_next: bool = False):
        self.toks = tokenize(text, allow_placeholders)
        self.i = 0
        self.allow_next = allow_next
        self.expected: set[str] = set()

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, text: str, offset: int = 0) -> bool:
        t = self.toks[min(self.i + offset, len(self.toks) - 1)]
        return t.kind in ("op", "kw") and t.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.peek(text):
            return self.advance()
        self.expected.add(repr(text))
        return None

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        self.expected = set()
        return t

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.fail()
        return t

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind == kind:
            return self.advance()
        self.expected.add(what)
        self.fail()

    def fail(self):
        t = self.tok
        line, col = t.line, t.col
        # a missing terminator is reported where it should have been
        if "';'" in self.expected and self.i > 0:
            prev = self.toks[self.i - 1]
            line, col = prev.end_line, prev.end_col
        raise ModelSyntaxError(f"unexpected {t.describe()}", line, col, self.expected)

    # -- model -------------------------------------------------------------

    def model(self) -> ModelAst:
        self.expect("mdp")
        consts, modules, labels = [], [], []
        while True:
            if self.peek("const"):
                consts.append(self.const())
            elif self.peek("module"):
                modules.append(self.module())
            elif self.peek("label"):
                labels.append(self.label())
            elif self.tok.kind == "eof":
                break
            else:
                self.expected |= {"'const'", "'module'", "'label'", "end of input"}
                self.fail()
        return ModelAst(tuple(consts), tuple(modules), tuple(labels))

    def const(self) -> ConstDecl:
        start = self.expect("const")
        for ty in ("int", "double", "bool"):
            if self.accept(ty):
                break
        else:
            self.fail()
        name = self.expect_kind("name", "identifier")
        self.expect("=")
        e = self.expr()
        self.expect(";")
        return ConstDecl(name.text, ty, e, (start.line, start.col))

    def module(self) -> ModuleAst:
        start = self.expect("module")
        name = self.expect_kind("name", "identifier")
        variables, commands = [], []
        while self.tok.kind == "name":
            variables.append(self.vardecl())
        while not self.accept("endmodule"):
            if self.peek("["):
                commands.append(self.command())
            else:
                self.expected.add("'['")
                self.fail()
        return ModuleAst(name.text, tuple(variables), tuple(commands), (start.line, start.col))

    def vardecl(self) -> VarDecl:
        name = self.advance()
        self.expect(":")
        if self.accept("bool"):
            lo = hi = None
        else:
            self.expected.add("'bool'")
            self.expect("[")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            self.expect("]")
        self.expect("init")
        init = self.expr()
        self.expect(";")
        return VarDecl(name.text, lo, hi, init, (name.line, name.col))

    def command(self) -> CommandAst:
        start = self.expect("[")
        action = None
        if self.tok.kind == "name":
            action = self.advance().text
        else:
            self.expected.add("identifier")
        self.expect("]")
        guard = self.expr()
        self.expect("->")
        branches = [self.branch()]
        while self.accept("+"):
            if branches[0].prob is None:
                self.fail()
            branches.append(self.branch(require_prob=True))
        self.expect(";")
        return CommandAst(action, guard, tuple(branches), (start.line, start.col))

    def branch(self, require_prob: bool = False) -> Branch:
        # "true" and "(x'=..)" open a bare update; otherwise a probability comes first
        if not require_prob and (self.peek("true") or self._looks_like_assignment()):
            upd = self.update()
            if not self.peek(":"):
                return Branch(None, upd)
            # "true : ..." is not meaningful, but "(expr) : update" can start like this
            raise ModelSyntaxError("update cannot be used as a probability", self.tok.line, self.tok.col)
        prob = self.expr()
        self.expect(":")
        return Branch(prob, self.update())

    def _looks_like_assignment(self) -> bool:
        return self.peek("(") and self.toks[self.i + 1].kind == "name" and self.peek("'", 2)

    def update(self) -> tuple[Assignment, ...]:
        if self.accept("true"):
            return ()
        out = [self.assignment()]
        while self.accept("&"):
            out.append(self.assignment())
        return tuple(out)

    def assignment(self) -> Assignment:
        self.expect("(")
        name = self.expect_kind("name", "identifier")
        self.expect("'")
        self.expect("=")
        e = self.expr()
        self.expect(")")
        return Assignment(name.text, e, (name.line, name.col))

    def label(self) -> LabelDecl:
        start = self.expect("label")
        s = self.expect_kind("string", "quoted label name")
        name = s.text[1:-1]
        if not re.fullmatch(r"[A-Za-z_]\w*", name):
            raise ModelSyntaxError(f"bad label name {name!r}", s.line, s.col)
        self.expect("=")
        e = self.expr()
        self.expect(";")
        return LabelDecl(name, e, (start.line, start.col))

    # -- expressions -------------------------------------------------------

    def expr(self) -> Expr:
        return self.or_expr()

    def _binary_chain(self, ops: tuple[str, ...], sub) -> Expr:
        left = sub()
        while True:
            for op in ops:
                t = self.accept(op)
                if t:
                    left = Binary(op, left, sub(), (t.line, t.col))
                    break
            else:
                return left

    def or_expr(self) -> Expr:
        return self._binary_chain(("|",), self.and_expr)

    def and_expr(self) -> Expr:
        return self._binary_chain(("&",), self.not_expr)

    def not_expr(self) -> Expr:
        t = self.accept("!")
        if t:
            return Unary("!", self.not_expr(), (t.line, t.col))
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        for op in ("<=", ">=", "!=", "=", "<", ">"):
            t = self.accept(op)
            if t:
                return Binary(op, left, self.add_expr(), (t.line, t.col))
        return left

    def add_expr(self) -> Expr:
        return self._binary_chain(("+", "-"), self.mul_expr)

    def mul_expr(self) -> Expr:
        return self._binary_chain(("*", "/"), self.unary_expr)

    def unary_expr(self) -> Expr:
        t = self.accept("-")
        if t:
            return Unary("-", self.unary_expr(), (t.line, t.col))
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            v = float(t.text) if any(ch in t.text for ch in ".eE") else int(t.text)
            return Num(v, (t.line, t.col))
        if self.peek("true") or self.peek("false"):
            self.advance()
            return Bool(t.text == "true", (t.line, t.col))
        if t.kind == "placeholder":
            self.advance()
            return Name(t.text, (t.line, t.col))
        if t.kind == "name":
            self.advance()
            if self.peek("("):
                fns = FUNCTIONS | ({"next"} if self.allow_next else set())
                if t.text not in fns:
                    raise ModelSyntaxError(f"unknown function {t.text!r}", t.line, t.col, fns)
                self.advance()
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                arity = {"mod": 2, "next": 1}.get(t.text)
                if arity is not None and len(args) != arity:
                    raise ModelSyntaxError(f"{t.text} takes {arity} argument(s)", t.line, t.col)
                return Call(t.text, tuple(args), (t.line, t.col))
            return Name(t.text, (t.line, t.col))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.expected |= {"number", "identifier", "'('", "'-'", "'!'", "'true'", "'false'"}
        self.fail()


def parse(text: str) -> ModelAst:
    p = _Parser(text)
    ast = p.model()
    check_names(ast)
    return ast


def parse_expression(text: str, allow_placeholders: bool = False, allow_next: bool = False) -> Expr:
    p = _Parser(text, allow_placeholders, allow_next)
    e = p.expr()
    if p.tok.kind != "eof":
        p.expected.add("end of input")
        p.fail()
    return e


def free_names(e: Expr) -> set[str]:
    if isinstance(e, Name):
        return {e.name}
    if isinstance(e, Unary):
        return free_names(e.operand)
    if isinstance(e, Binary):
        return free_names(e.left) | free_names(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= free_names(a)
        return out
    return set()


def _check_refs(e: Expr, known: set[str], where: str) -> None:
    missing = sorted(free_names(e) - known)
    if missing:
        raise UndeclaredIdentifierError(f"undeclared identifier {missing[0]!r} in {where}")


def check_names(ast: ModelAst) -> None:
    """Namespace checks: unique names, and expressions only use declared names."""
    consts: set[str] = set()
    for c in ast.constants:
        if c.name in consts:
            raise DuplicateNameError(f"constant {c.name!r} declared twice (line {c.pos[0]})")
        _check_refs(c.expr, consts, f"constant {c.name}")
        consts.add(c.name)

    variables: set[str] = set()
    modules: set[str] = set()
    for m in ast.modules:
        if m.name in modules:
            raise DuplicateNameError(f"module {m.name!r} declared twice")
        modules.add(m.name)
        for v in m.variables:
            if v.name in variables or v.name in consts:
                raise DuplicateNameError(f"variable {v.name!r} declared twice (line {v.pos[0]})")
            variables.add(v.name)
            for e in (v.low, v.high, v.init):
                if e is not None:
                    _check_refs(e, consts, f"declaration of {v.name}")

    known = consts | variables
    for m in ast.modules:
        for c in m.commands:
            where = f"command at line {c.pos[0]}"
            _check_refs(c.guard, known, where)
            for b in c.branches:
                if b.prob is not None:
                    _check_refs(b.prob, known, where)
                for a in b.assignments:
                    if a.var not in variables:
                        raise UndeclaredIdentifierError(f"assignment to undeclared variable {a.var!r} in {where}")
                    _check_refs(a.expr, known, where)

    labels: set[str] = set()
    for lab in ast.labels:
        if lab.name in labels:
            raise DuplicateNameError(f"label {lab.name!r} declared twice")
        labels.add(lab.name)
        _check_refs(lab.expr, known, f"label {lab.name}")
