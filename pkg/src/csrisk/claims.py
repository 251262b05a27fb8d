"""Terminal claims from configuration: arithmetic expressions over B_T, or value tables.

Expressions are parsed with :mod:`ast` and evaluated by a small whitelist, so
only numbers, the terminal Brownian value ``B_T``, the horizon ``T``, names of
claims defined earlier, + - * / ** and the functions min, max, exp, abs are
accepted.  Anything else is a configuration error.  Because the only random
symbol is B_T (or an earlier claim), every expression is F_T-measurable.
"""

import ast
import operator

import numpy as np

from .errors import ConfigurationError

MAX_TABLE_STEPS = 12

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _fold(fn):
    def call(*args):
        if len(args) < 2:
            raise ConfigurationError(f"{fn.__name__} needs at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    return call


_FUNCTIONS = {
    "min": _fold(np.minimum),
    "max": _fold(np.maximum),
    "exp": np.exp,
    "abs": np.abs,
}


def _evaluate(node, names):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigurationError(f"unknown symbol {node.id!r} in claim expression")
        return names[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        return _BINARY[type(node.op)](_evaluate(node.left, names), _evaluate(node.right, names))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_evaluate(node.operand, names))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fn = _FUNCTIONS.get(node.func.id)
        if fn is None:
            raise ConfigurationError(f"function {node.func.id!r} is not allowed in claim expressions")
        if node.func.id in ("exp", "abs") and len(node.args) != 1:
            raise ConfigurationError(f"{node.func.id} takes one argument")
        return fn(*[_evaluate(a, names) for a in node.args])
    raise ConfigurationError(f"unsupported syntax in claim expression: {ast.dump(node)[:60]}")


def evaluate_expression(text, model, names=None):
    """Evaluate an expression on the terminal states of ``model``."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigurationError("claim expression must be a non-empty string")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse claim expression {text!r}: {exc.msg}") from None
    scope = {"B_T": model.terminal_brownian(), "T": model.grid.horizon}
    scope.update(names or {})
    with np.errstate(all="ignore"):
        value = _evaluate(tree, scope)
    value = np.broadcast_to(np.asarray(value, dtype=float), (model.n_states(model.N),)).copy()
    if not np.all(np.isfinite(value)):
        raise ConfigurationError(f"claim expression {text!r} is not finite on every terminal state")
    return value


def claim_from_table(values, model):
    values = np.asarray(values, dtype=float)
    n = model.n_states(model.N)
    if model.is_path and model.N > MAX_TABLE_STEPS:
        raise ConfigurationError(f"per-path tables are accepted for at most {MAX_TABLE_STEPS} steps")
    if values.shape != (n,):
        raise ConfigurationError(f"claim table needs {n} terminal values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("claim table must be finite")
    return values


def parse_claim(spec, model, names=None):
    """A number, an expression string, {"expr": ...} or {"table": [...]}."""
    if isinstance(spec, bool):
        raise ConfigurationError("claim must be a number, an expression or a table")
    if isinstance(spec, (int, float)):
        return np.full(model.n_states(model.N), float(spec))
    if isinstance(spec, str):
        return evaluate_expression(spec, model, names)
    if isinstance(spec, dict) and len(spec) == 1:
        if "expr" in spec:
            return evaluate_expression(spec["expr"], model, names)
        if "table" in spec:
            return claim_from_table(spec["table"], model)
    raise ConfigurationError(f"cannot read claim {spec!r}; use a number, an expression, "
                             f"{{'expr': ...}} or {{'table': [...]}}")
