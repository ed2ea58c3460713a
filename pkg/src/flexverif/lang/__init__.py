"""Guarded-command modelling language: parse, print, elaborate."""
from .ast import ModelAst, ModuleAst, CommandAst, print_model, print_expr
from .elaborate import (
    ConflictingAssignment,
    DeadlockError,
    ElaborationError,
    ProbabilitySumError,
    UpdateOutOfRange,
    elaborate,
    load_model,
)
from .evaluate import EvaluationError, evaluate
from .parser import (
    DuplicateNameError,
    ModelError,
    ModelSyntaxError,
    UndeclaredIdentifierError,
    parse,
    parse_expression,
)

__all__ = [
    "ModelAst", "ModuleAst", "CommandAst", "print_model", "print_expr",
    "ConflictingAssignment", "DeadlockError", "ElaborationError", "ProbabilitySumError",
    "UpdateOutOfRange", "elaborate", "load_model", "EvaluationError", "evaluate",
    "DuplicateNameError", "ModelError", "ModelSyntaxError", "UndeclaredIdentifierError",
    "parse", "parse_expression",
]
