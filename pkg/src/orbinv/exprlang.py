"""A small expression language for user-defined families and force fields.

Grammar (precedence climbing; ``^`` binds tighter than unary minus)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

``x``, ``y`` and ``b`` are variables; any other bare name is a constant bound
at evaluation time. Exponents must evaluate to integers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import jets
from .jets import Jet

FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "sqrt": 1,
    "atan": 1,
    "exp": 1,
    "log": 1,
    "atan2": 2,
    "pow": 2,
}
VARIABLE_NAMES = ("x", "y", "b")


class ParseError(ValueError):
    """Malformed expression text.

    ``offset`` is the 1-based character column where parsing stopped.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.reason = message


class UnboundConstant(KeyError):
    def __str__(self):
        return f"unbound constant {self.args[0]!r}"


# AST -------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


# tokenizer -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = len(text) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad + 1)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind != "op":
            got = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, got {got}", pos + 1)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ParseError(f"trailing input {text!r}", pos + 1)
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok[0] == "op" and self.tok[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            # right associative; allows x^-2
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.tok[0] == "op" and self.tok[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos + 1)
                self.advance()
                args = [self.expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos + 1)
                return Call(text, tuple(args))
            if text in FUNCTIONS:
                raise ParseError(f"expected '(' after function {text!r}", pos + len(text) + 1)
            return Var(text) if text in VARIABLE_NAMES else Const(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, name or '(', got {got}", pos + 1)


def parse(text: str):
    return _Parser(text).parse()


# printing ----------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_text(node) -> str:
    """Fully parenthesized-where-needed text that re-parses to the same tree."""
    return _show(node, 0)


def _show(node, ctx):
    if isinstance(node, Num):
        text = repr(node.value)
        return f"({text})" if node.value < 0 else text
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        s = "-" + _show(node.operand, 3)
        return f"({s})" if ctx > 3 else s
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_show(a, 0) for a in node.args)})"
    p = _PREC[node.op]
    if node.op == "^":
        s = f"{_show(node.left, p + 1)}^{_show(node.right, 3)}"
    else:
        s = f"{_show(node.left, p)} {node.op} {_show(node.right, p + 1)}"
    return f"({s})" if ctx > p else s


def names(node) -> set:
    """Constant names referenced by the tree."""
    if isinstance(node, Const):
        return {node.name}
    if isinstance(node, Neg):
        return names(node.operand)
    if isinstance(node, BinOp):
        return names(node.left) | names(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= names(a)
        return out
    return set()


# evaluation -----------------------------------------------------------------------


def _integer_exponent(node, env, float_env):
    n = eval_float(node, float_env) if float_env is not None else _eval(node, env).value
    if not float(n).is_integer():
        raise jets.DomainError("pow", n)
    return int(n)


def _lookup(name, env):
    try:
        return env[name]
    except KeyError:
        raise UnboundConstant(name) from None


def _eval(node, env):
    if isinstance(node, Num):
        return Jet.constant(node.value, env["__order__"])
    if isinstance(node, (Var, Const)):
        v = _lookup(node.name, env)
        return v if isinstance(v, Jet) else Jet.constant(float(v), env["__order__"])
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        left = _eval(node.left, env)
        if node.op == "^":
            return jets.pow_int(left, _integer_exponent(node.right, env, env.get("__floats__")))
        right = _eval(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        return left / right
    if node.name == "pow":
        return jets.pow_int(_eval(node.args[0], env), _integer_exponent(node.args[1], env, env.get("__floats__")))
    if node.name == "atan2":
        return jets.atan2(_eval(node.args[0], env), _eval(node.args[1], env))
    return jets.ELEMENTARY[node.name](_eval(node.args[0], env))


def eval_env(ast, env, order: int) -> Jet:
    """Evaluate with every name bound in ``env`` (numbers or jets)."""
    full = dict(env)
    full["__order__"] = order
    full["__floats__"] = {k: (v.value if isinstance(v, Jet) else float(v)) for k, v in env.items()}
    return _eval(ast, full)


def eval_jet(ast, x: float, y: float, b: float, order: int = jets.DEFAULT_ORDER,
             constants=None, param: str = "b") -> Jet:
    """Evaluate ``ast`` in jet arithmetic seeded at ``(x, y, b)``.

    ``param`` names the symbol that occupies the third jet slot; with the
    default it is the variable ``b``. When ``param`` is some other name, ``b``
    is looked up among the constants like any other symbol.
    """
    constants = dict(constants or {})
    env = {k: float(v) for k, v in constants.items()}
    if param != "b":
        env.pop(param, None)
    env["x"] = Jet.variable(0, x, order)
    env["y"] = Jet.variable(1, y, order)
    env[param] = Jet.variable(2, b, order)
    floats = {k: float(v) for k, v in constants.items()}
    floats.update(x=x, y=y)
    floats[param] = b
    env["__order__"] = order
    env["__floats__"] = floats
    return _eval(ast, env)


def eval_float(ast, env) -> float:
    """Plain floating-point evaluation; ``env`` maps every name to a number."""
    if isinstance(ast, Num):
        return ast.value
    if isinstance(ast, (Var, Const)):
        return float(_lookup(ast.name, env))
    if isinstance(ast, Neg):
        return -eval_float(ast.operand, env)
    if isinstance(ast, BinOp):
        left = eval_float(ast.left, env)
        right = eval_float(ast.right, env)
        if ast.op == "+":
            return left + right
        if ast.op == "-":
            return left - right
        if ast.op == "*":
            return left * right
        if ast.op == "/":
            return left / right
        if not float(right).is_integer():
            raise jets.DomainError("pow", right)
        return left ** int(right)
    args = [eval_float(a, env) for a in ast.args]
    if ast.name == "atan2":
        return math.atan2(args[0], args[1])
    if ast.name == "pow":
        if not float(args[1]).is_integer():
            raise jets.DomainError("pow", args[1])
        return args[0] ** int(args[1])
    return getattr(math, ast.name)(args[0])
