"""Small expression language over (x1, x2, x3, t) with exact symbolic derivatives.

Expressions are immutable trees (shared subtrees make them DAGs in practice).
They are parsed from text, evaluated with numpy (scalars or arrays), and
differentiated by rewriting, so manufactured fields have machine-precision
derivatives of any order.
"""
from __future__ import annotations

import math
import re
import sys

import numpy as np

# Derivative rewriting and compilation recurse over the tree; manufactured
# stress divergences can nest a few hundred levels deep.
sys.setrecursionlimit(max(sys.getrecursionlimit(), 50_000))

VAR_NAMES = ("x1", "x2", "x3", "t")
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    """Syntax or vocabulary error, with the byte offset of the offending token."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalDomainError(ExprError):
    """Evaluation hit a domain violation; names the offending subexpression."""

    def __init__(self, message, node):
        super().__init__(f"{message} in '{to_source(node)}'")
        self.node = node


# ---------------------------------------------------------------------------
# nodes

class Expr:
    __slots__ = ("_dcache", "_plan")

    def __init__(self):
        self._dcache = None
        self._plan = None

    # arithmetic composition; operands may be Expr or numbers
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, p):
        return powc(self, p)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Expr({to_source(self)!r})"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = float(value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index):
        super().__init__()
        self.index = index


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        super().__init__()
        self.arg = arg


class Call(Expr):
    __slots__ = ("func", "arg")

    def __init__(self, func, arg):
        super().__init__()
        self.func = func
        self.arg = arg


class Bin(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        super().__init__()
        self.op = op
        self.left = left
        self.right = right


class Pow(Expr):
    __slots__ = ("base", "exponent")

    # exponent is a plain float: keeps differentiation closed-form
    def __init__(self, base, exponent):
        super().__init__()
        self.base = base
        self.exponent = float(exponent)


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot treat {type(x).__name__} as an expression")


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


# smart constructors fold constants; anything beyond that is left alone
def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Bin("+", a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Bin("*", a, b)


def div(a, b):
    if _is_const(b, 0.0):
        raise EvalDomainError("division by constant zero", b)
    if _is_const(a) and _is_const(b):
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    return Bin("/", a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


_MATH_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
}


def call(func, a):
    if func not in FUNCTIONS:
        raise ExprError(f"unknown function '{func}'")
    if _is_const(a):
        try:
            v = _MATH_FUNCS[func](a.value)
        except (ValueError, OverflowError):
            return Call(func, a)  # leave it; evaluation will report the domain error
        return Const(v)
    return Call(func, a)


def powc(base, p):
    p = float(p)
    if p == 1.0:
        return base
    if p == 0.0:
        return ONE
    if _is_const(base):
        try:
            v = base.value ** p
        except (ValueError, OverflowError, ZeroDivisionError):
            return Pow(base, p)
        if isinstance(v, complex):
            return Pow(base, p)
        return Const(v)
    return Pow(base, p)


def variable(name):
    return Var(VAR_NAMES.index(name))


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}",
                             len(src) - len(stripped))
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    """Recursive descent over: ^ > unary minus > * / > + -, all left-associative."""

    def __init__(self, src, var_names):
        if not src.isascii():
            bad = next(i for i, c in enumerate(src) if not c.isascii())
            raise ParseError("non-ASCII input", bad)
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0
        self.var_names = var_names

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, symbol):
        kind, value, offset = self.peek()
        if kind != "op" or value != symbol:
            raise ParseError(f"expected '{symbol}'", offset)
        self.advance()

    def parse(self):
        e = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {value!r}", offset)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                e = add(e, rhs) if value == "+" else sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                e = mul(e, rhs) if value == "*" else div(e, rhs)
            else:
                return e

    def factor(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return neg(self.factor())
        base = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return powc(base, self.exponent())
        return base

    def exponent(self):
        # the exponent must be a numeric literal (optionally signed)
        sign = 1.0
        kind, value, offset = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            sign = -1.0
            kind, value, offset = self.peek()
        if kind != "num":
            raise ParseError("exponent must be a numeric constant", offset)
        self.advance()
        return sign * float(value)

    def base(self):
        kind, value, offset = self.advance()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            if value in FUNCTIONS:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return call(value, inner)
            if value == "pi":
                return Const(math.pi)
            if value in self.var_names:
                return Var(self.var_names.index(value))
            raise ParseError(f"unknown identifier '{value}'", offset)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ParseError(f"unexpected token {value!r}" if value else "unexpected end of input",
                         offset)


def parse(src):
    """Parse an expression in the variables x1, x2, x3, t (plus the constant pi)."""
    return _Parser(src, VAR_NAMES).parse()


def parse_in_vars(src, var_names):
    """Parse with a custom variable vocabulary, e.g. ('rho',) for pressure laws.

    The i-th name in `var_names` is bound to variable slot i.
    """
    return _Parser(src, tuple(var_names)).parse()


# ---------------------------------------------------------------------------
# printing (minimal parentheses; parse(to_source(e)) rebuilds e)

_PREC_SUM, _PREC_TERM, _PREC_FACTOR, _PREC_ATOM = 0, 1, 2, 3


def _fmt_number(v):
    if v == math.floor(v) and abs(v) < 1e16:
        return repr(v)
    return repr(v)


def _source(e, ctx):
    if isinstance(e, Const):
        s = _fmt_number(e.value)
        needs = ctx >= _PREC_ATOM and e.value < 0
        return f"({s})" if needs else s
    if isinstance(e, Var):
        return VAR_NAMES[e.index]
    if isinstance(e, Call):
        return f"{e.func}({_source(e.arg, _PREC_SUM)})"
    if isinstance(e, Neg):
        s = "-" + _source(e.arg, _PREC_FACTOR)
        return f"({s})" if ctx >= _PREC_ATOM else s
    if isinstance(e, Pow):
        base = _source(e.base, _PREC_ATOM)
        s = f"{base}^{_fmt_number(e.exponent)}"
        # a factor holds at most one exponent, so nested powers need parentheses
        return f"({s})" if ctx >= _PREC_ATOM else s
    if isinstance(e, Bin):
        if e.op in "+-":
            # left-associative grammar: the right operand of + or - is a term
            mine = _PREC_SUM
            left = _source(e.left, _PREC_SUM)
            right = _source(e.right, _PREC_TERM)
            s = f"{left}{e.op}{right}"
        else:
            mine = _PREC_TERM
            left = _source(e.left, _PREC_TERM)
            right = _source(e.right, _PREC_FACTOR)
            s = f"{left}{e.op}{right}"
        return f"({s})" if ctx > mine else s
    raise TypeError(f"not an expression node: {e!r}")


def to_source(e):
    """Render the tree as parseable text."""
    return _source(e, _PREC_SUM)


# ---------------------------------------------------------------------------
# differentiation

def derivative(e, var):
    """Exact partial derivative with respect to x1, x2, x3 or t (name or index)."""
    vi = VAR_NAMES.index(var) if isinstance(var, str) else int(var)
    return _derivative(e, vi)


def _derivative(e, vi):
    cache = e._dcache
    if cache is None:
        cache = e._dcache = {}
    hit = cache.get(vi)
    if hit is not None:
        return hit
    d = _derive(e, vi)
    cache[vi] = d
    return d


def _derive(e, vi):
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == vi else ZERO
    if isinstance(e, Neg):
        return neg(_derivative(e.arg, vi))
    if isinstance(e, Bin):
        da = _derivative(e.left, vi)
        db = _derivative(e.right, vi)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        # quotient rule
        return div(sub(mul(da, e.right), mul(e.left, db)), mul(e.right, e.right))
    if isinstance(e, Pow):
        da = _derivative(e.base, vi)
        return mul(mul(Const(e.exponent), powc(e.base, e.exponent - 1.0)), da)
    if isinstance(e, Call):
        da = _derivative(e.arg, vi)
        a = e.arg
        if e.func == "sin":
            return mul(call("cos", a), da)
        if e.func == "cos":
            return neg(mul(call("sin", a), da))
        if e.func == "exp":
            return mul(e, da)
        if e.func == "log":
            return div(da, a)
        if e.func == "sqrt":
            return div(da, mul(Const(2.0), e))
        if e.func == "tanh":
            return mul(sub(ONE, mul(e, e)), da)
    raise TypeError(f"not an expression node: {e!r}")


def variables_used(e):
    """Set of variable indices appearing in the tree."""
    seen = set()
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, (Neg, Call)):
            stack.append(node.arg)
        elif isinstance(node, Bin):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
    return out


def substitute(e, mapping):
    """Replace variables by expressions; mapping is {index-or-name: Expr}."""
    repl = {}
    for key, val in mapping.items():
        vi = VAR_NAMES.index(key) if isinstance(key, str) else int(key)
        repl[vi] = as_expr(val)
    memo = {}

    def walk(node):
        out = memo.get(id(node))
        if out is not None:
            return out
        if isinstance(node, Const):
            out = node
        elif isinstance(node, Var):
            out = repl.get(node.index, node)
        elif isinstance(node, Neg):
            out = neg(walk(node.arg))
        elif isinstance(node, Call):
            out = call(node.func, walk(node.arg))
        elif isinstance(node, Bin):
            left, right = walk(node.left), walk(node.right)
            out = {"+": add, "-": sub, "*": mul, "/": div}[node.op](left, right)
        elif isinstance(node, Pow):
            out = powc(walk(node.base), node.exponent)
        else:
            raise TypeError(f"not an expression node: {node!r}")
        memo[id(node)] = out
        return out

    return walk(e)


# ---------------------------------------------------------------------------
# evaluation: trees compile once into a flat postorder program

_OP_CONST, _OP_VAR, _OP_NEG, _OP_ADD, _OP_SUB, _OP_MUL, _OP_DIV, _OP_POW = range(8)
_OP_SIN, _OP_COS, _OP_EXP, _OP_LOG, _OP_SQRT, _OP_TANH = range(8, 14)
_CALL_OPS = {"sin": _OP_SIN, "cos": _OP_COS, "exp": _OP_EXP,
             "log": _OP_LOG, "sqrt": _OP_SQRT, "tanh": _OP_TANH}


def _compile(root):
    """Flatten the DAG into (opcode, a, b, payload, node) tuples in eval order."""
    program = []
    slot_of = {}
    stack = [(root, False)]
    while stack:
        node, ready = stack.pop()
        if id(node) in slot_of:
            continue
        if not ready:
            stack.append((node, True))
            if isinstance(node, (Neg, Call)):
                stack.append((node.arg, False))
            elif isinstance(node, Bin):
                stack.append((node.right, False))
                stack.append((node.left, False))
            elif isinstance(node, Pow):
                stack.append((node.base, False))
            continue
        if isinstance(node, Const):
            instr = (_OP_CONST, -1, -1, node.value, node)
        elif isinstance(node, Var):
            instr = (_OP_VAR, -1, -1, node.index, node)
        elif isinstance(node, Neg):
            instr = (_OP_NEG, slot_of[id(node.arg)], -1, None, node)
        elif isinstance(node, Call):
            instr = (_CALL_OPS[node.func], slot_of[id(node.arg)], -1, None, node)
        elif isinstance(node, Bin):
            code = {"+": _OP_ADD, "-": _OP_SUB, "*": _OP_MUL, "/": _OP_DIV}[node.op]
            instr = (code, slot_of[id(node.left)], slot_of[id(node.right)], None, node)
        elif isinstance(node, Pow):
            instr = (_OP_POW, slot_of[id(node.base)], -1, node.exponent, node)
        else:
            raise TypeError(f"not an expression node: {node!r}")
        slot_of[id(node)] = len(program)
        program.append(instr)
    # keep the tree alive so ids stay valid for the cached program
    return program, root


def evaluate(e, x1, x2, x3, t):
    """Evaluate at a point or at arrays of points (numpy broadcasting applies)."""
    if e._plan is None:
        e._plan = _compile(e)
    program, _root = e._plan
    scalar = not any(isinstance(a, np.ndarray) and a.ndim > 0 for a in (x1, x2, x3, t))
    env = (x1, x2, x3, t)
    slots = [None] * len(program)
    for i, (op, a, b, payload, node) in enumerate(program):
        if op == _OP_CONST:
            slots[i] = payload
        elif op == _OP_VAR:
            slots[i] = env[payload]
        elif op == _OP_NEG:
            slots[i] = np.negative(slots[a])
        elif op == _OP_ADD:
            slots[i] = np.add(slots[a], slots[b])
        elif op == _OP_SUB:
            slots[i] = np.subtract(slots[a], slots[b])
        elif op == _OP_MUL:
            slots[i] = np.multiply(slots[a], slots[b])
        elif op == _OP_DIV:
            denom = slots[b]
            if np.any(denom == 0.0):
                raise EvalDomainError("division by zero", node)
            slots[i] = np.divide(slots[a], denom)
        elif op == _OP_POW:
            base = slots[a]
            p = payload
            if p != round(p):
                if p > 0.0:
                    if np.any(np.asarray(base) < 0.0):
                        raise EvalDomainError("negative base of non-integer power", node)
                elif np.any(np.asarray(base) <= 0.0):
                    raise EvalDomainError("non-positive base of negative non-integer power",
                                          node)
            elif p < 0 and np.any(np.asarray(base) == 0.0):
                raise EvalDomainError("zero base of negative power", node)
            slots[i] = np.power(base, p)
        elif op == _OP_SIN:
            slots[i] = np.sin(slots[a])
        elif op == _OP_COS:
            slots[i] = np.cos(slots[a])
        elif op == _OP_EXP:
            slots[i] = np.exp(slots[a])
        elif op == _OP_LOG:
            arg = slots[a]
            if np.any(np.asarray(arg) <= 0.0):
                raise EvalDomainError("log of non-positive value", node)
            slots[i] = np.log(arg)
        elif op == _OP_SQRT:
            arg = slots[a]
            if np.any(np.asarray(arg) < 0.0):
                raise EvalDomainError("sqrt of negative value", node)
            slots[i] = np.sqrt(arg)
        elif op == _OP_TANH:
            slots[i] = np.tanh(slots[a])
    out = slots[-1]
    if scalar:
        return float(out)
    return np.asarray(out, dtype=float) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# fields

class ScalarField:
    """An expression interpreted as a function of (x1, x2, x3, t)."""

    __slots__ = ("expr",)

    def __init__(self, source):
        if isinstance(source, ScalarField):
            self.expr = source.expr
        elif isinstance(source, str):
            self.expr = parse(source)
        else:
            self.expr = as_expr(source)

    def __call__(self, x1, x2, x3, t):
        return evaluate(self.expr, x1, x2, x3, t)

    def at_points(self, x, t):
        """Evaluate at an array of points x with shape (3, K)."""
        out = self(x[0], x[1], x[2], t)
        if np.ndim(out) == 0:
            return np.full(np.shape(x[1]), float(out))
        return out

    def diff(self, var):
        return ScalarField(derivative(self.expr, var))

    def dt(self):
        return self.diff("t")

    def dx(self, i):
        return self.diff(i)

    def grad(self):
        return VectorField(self.diff(0), self.diff(1), self.diff(2))

    def freeze_time(self, t0):
        return ScalarField(substitute(self.expr, {"t": Const(float(t0))}))

    def compose(self, mapping):
        """Substitute variables by fields: mapping {name-or-index: ScalarField|Expr|number}."""
        subs = {k: (v.expr if isinstance(v, ScalarField) else as_expr(v))
                for k, v in mapping.items()}
        return ScalarField(substitute(self.expr, subs))

    def __add__(self, other):
        return ScalarField(self.expr + _expr_of(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.expr - _expr_of(other))

    def __rsub__(self, other):
        return ScalarField(_expr_of(other) - self.expr)

    def __mul__(self, other):
        return ScalarField(self.expr * _expr_of(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.expr / _expr_of(other))

    def __rtruediv__(self, other):
        return ScalarField(_expr_of(other) / self.expr)

    def __pow__(self, p):
        return ScalarField(self.expr ** p)

    def __neg__(self):
        return ScalarField(-self.expr)

    def __repr__(self):
        return f"ScalarField({to_source(self.expr)!r})"


def _expr_of(x):
    return x.expr if isinstance(x, ScalarField) else as_expr(x)


class VectorField:
    """Three scalar fields acting as an ambient vector field."""

    __slots__ = ("components",)

    def __init__(self, c1, c2, c3):
        self.components = (ScalarField(c1), ScalarField(c2), ScalarField(c3))

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __call__(self, x1, x2, x3, t):
        return np.array([c(x1, x2, x3, t) for c in self.components])

    def at_points(self, x, t):
        return np.stack([c.at_points(x, t) for c in self.components])

    def dot(self, other):
        if isinstance(other, VectorField):
            return sum((a * b for a, b in zip(self, other)), start=ScalarField(0.0))
        raise TypeError("dot expects a VectorField")

    def norm_sq(self):
        return self.dot(self)

    def freeze_time(self, t0):
        return VectorField(*(c.freeze_time(t0) for c in self.components))

    def __add__(self, other):
        return VectorField(*(a + b for a, b in zip(self, other)))

    def __sub__(self, other):
        return VectorField(*(a - b for a, b in zip(self, other)))

    def __mul__(self, s):
        return VectorField(*(c * s for c in self.components))

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(*(-c for c in self.components))

    def __repr__(self):
        return "VectorField(%s)" % ", ".join(to_source(c.expr) for c in self.components)


def field(source):
    """Shorthand: build a ScalarField from text, a number, or an Expr."""
    return ScalarField(source)


def vector(c1, c2, c3):
    return VectorField(c1, c2, c3)


X1 = ScalarField(Var(0))
X2 = ScalarField(Var(1))
X3 = ScalarField(Var(2))
T = ScalarField(Var(3))


def sqrt_f(f):
    return ScalarField(call("sqrt", _expr_of(f)))


def log_f(f):
    return ScalarField(call("log", _expr_of(f)))


def tanh_f(f):
    return ScalarField(call("tanh", _expr_of(f)))


def sin_f(f):
    return ScalarField(call("sin", _expr_of(f)))


def cos_f(f):
    return ScalarField(call("cos", _expr_of(f)))


def exp_f(f):
    return ScalarField(call("exp", _expr_of(f)))
