"""A small arithmetic expression language for potentials in scenario files.

Grammar: numbers, names, ``+ - * / ^`` (``^`` is power), parentheses and
the functions ``sin cos exp sqrt tanh``. Names are coordinates, ``t``,
``pi``, or parameters supplied at evaluation time. Evaluation is
vectorized over numpy arrays.
"""

import ast
import operator

import numpy as np

from .errors import ConfigError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "tanh": np.tanh}
CONSTANTS = {"pi": np.pi}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class Expression:
    """Parsed expression; call with keyword arrays to evaluate."""

    def __init__(self, text):
        self.text = str(text).strip()
        if not self.text:
            raise ConfigError("empty expression")
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        self._tree = tree.body
        self.variables = frozenset(self._check(self._tree))

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return set()
        if isinstance(node, ast.Name):
            return set() if node.id in CONSTANTS else {node.id}
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return self._check(node.left) | self._check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return self._check(node.operand)
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            return self._check(node.args[0])
        raise ConfigError(f"unsupported construct in expression {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    @property
    def is_constant(self):
        return not self.variables

    @property
    def is_zero(self):
        return self.is_constant and float(self._eval(self._tree, {})) == 0.0

    def check_names(self, allowed):
        unknown = self.variables - set(allowed)
        if unknown:
            raise ConfigError(f"unknown names {sorted(unknown)} in expression {self.text!r}")

    def __call__(self, **env):
        missing = self.variables - env.keys()
        if missing:
            raise ConfigError(f"expression {self.text!r} needs values for {sorted(missing)}")
        return self._eval(self._tree, env)

    def __repr__(self):
        return f"Expression({self.text!r})"
