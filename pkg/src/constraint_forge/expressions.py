"""Field expression parsing and evaluation.

Config files describe scalar fields as arithmetic expressions over the
coordinate symbols x, y, z with the functions sin, cos, exp, sqrt, tanh,
abs, min, max (standard operator precedence, ** for powers). Expressions are
parsed with the stdlib ast module and evaluated against numpy coordinate
arrays; no general code execution is possible.

The same strings can be lifted to sympy expressions for the manufactured
solution machinery, which needs exact symbolic derivatives.
"""

import ast
import operator

import numpy as np
import sympy as sp

from .errors import ExpressionError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.Mod: operator.mod,
}

_UNARYOPS = {
    ast.UAdd: operator.pos,
    ast.USub: operator.neg,
}

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}

_SYMPY_FUNCS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "sqrt": sp.sqrt,
    "tanh": sp.tanh,
    "abs": sp.Abs,
    "min": sp.Min,
    "max": sp.Max,
}

_CONSTANTS = {"pi": np.pi}

COORD_NAMES = ("x", "y", "z")


def _parse(text):
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from exc
    return tree.body


class _Evaluator(ast.NodeVisitor):
    def __init__(self, names, funcs, constants):
        self.names = names
        self.funcs = funcs
        self.constants = constants

    def visit_Expression(self, node):
        return self.visit(node.body)

    def visit_BinOp(self, node):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        return op(self.visit(node.left), self.visit(node.right))

    def visit_UnaryOp(self, node):
        op = _UNARYOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        return op(self.visit(node.operand))

    def visit_Constant(self, node):
        if isinstance(node.value, (int, float)):
            return node.value
        raise ExpressionError(f"literal {node.value!r} not allowed")

    def visit_Name(self, node):
        if node.id in self.names:
            return self.names[node.id]
        if node.id in self.constants:
            return self.constants[node.id]
        raise ExpressionError(f"unknown symbol {node.id!r}")

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name):
            raise ExpressionError("only plain function calls allowed")
        fname = node.func.id
        if fname not in self.funcs:
            raise ExpressionError(f"unknown function {fname!r}")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        args = [self.visit(a) for a in node.args]
        if fname in ("min", "max") and len(args) != 2:
            raise ExpressionError(f"{fname} takes exactly 2 arguments")
        if fname not in ("min", "max") and len(args) != 1:
            raise ExpressionError(f"{fname} takes exactly 1 argument")
        return self.funcs[fname](*args)

    def generic_visit(self, node):
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def evaluate(text, coords):
    """Evaluate a field expression on coordinate arrays.

    Parameters
    ----------
    text : str
        Expression over x, y, z (as many as the chart dimension).
    coords : sequence of ndarray
        Meshgrid coordinate arrays, one per axis, identical shapes.

    Returns
    -------
    ndarray
        Node values, broadcast to the grid shape.
    """
    names = {COORD_NAMES[i]: c for i, c in enumerate(coords)}
    node = _parse(str(text))
    try:
        val = _Evaluator(names, _FUNCS, _CONSTANTS).visit(node)
    except ExpressionError:
        raise
    except Exception as exc:  # arithmetic failures surface as config errors
        raise ExpressionError(f"evaluation of {text!r} failed: {exc}") from exc
    out = np.asarray(val, dtype=float)
    shape = coords[0].shape
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    if not np.all(np.isfinite(out)):
        raise ExpressionError(f"expression {text!r} produced non-finite values")
    return out


def to_sympy(text, dim):
    """Lift a field expression to a sympy expression in x, y, z symbols."""
    syms = sp.symbols(COORD_NAMES[:dim])
    names = {COORD_NAMES[i]: syms[i] for i in range(dim)}
    node = _parse(str(text))
    consts = {"pi": sp.pi}
    try:
        expr = _Evaluator(names, _SYMPY_FUNCS, consts).visit(node)
    except ExpressionError:
        raise
    except Exception as exc:
        raise ExpressionError(f"symbolic lift of {text!r} failed: {exc}") from exc
    return sp.sympify(expr), syms
