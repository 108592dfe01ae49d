"""Nonlinear real-arithmetic expressions, atomic constraints and CNF formulas.

Expressions are immutable trees (DAGs when subterms are shared) built from
``Var``, ``Const``, ``Add``, ``Mul``, ``Neg``, ``Abs``, ``Max``, ``Exp``,
``Sigmoid`` and ``Tanh``.  Python operators build trees::

    >>> x = Var("x")
    >>> e = Sigmoid(2 * x + 1)
    >>> round(e.eval({"x": 0.0}), 6)
    0.731059
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .interval import Box, Interval

RELATIONS = ("<=", "<", ">=", ">", "=")


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Add(self, Neg(as_expr(other)))

    def __rsub__(self, other):
        return Add(as_expr(other), Neg(self))

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __abs__(self):
        return Abs(self)

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    def eval(self, point) -> float:
        return evaluate(self, point)

    def variables(self) -> set[str]:
        return {n.name for n in postorder([self]) if isinstance(n, Var)}

    # relational helpers build atoms; == stays identity so nodes stay hashable
    def le(self, other) -> "Atom":
        return Atom(self, "<=", as_expr(other))

    def lt(self, other) -> "Atom":
        return Atom(self, "<", as_expr(other))

    def ge(self, other) -> "Atom":
        return Atom(self, ">=", as_expr(other))

    def gt(self, other) -> "Atom":
        return Atom(self, ">", as_expr(other))

    def eq(self, other) -> "Atom":
        return Atom(self, "=", as_expr(other))


@dataclass(frozen=True, eq=False, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, eq=False, repr=False)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError("constants must be finite")

    def __repr__(self):
        return repr(self.value)


@dataclass(frozen=True, eq=False, repr=False)
class _Unary(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"{type(self).__name__.lower()}({self.arg!r})"


@dataclass(frozen=True, eq=False, repr=False)
class _Binary(Expr):
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)


class Add(_Binary):
    def __repr__(self):
        return f"({self.left!r} + {self.right!r})"


class Mul(_Binary):
    def __repr__(self):
        return f"({self.left!r} * {self.right!r})"


class Max(_Binary):
    def __repr__(self):
        return f"max({self.left!r}, {self.right!r})"


class Neg(_Unary):
    def __repr__(self):
        return f"-{self.arg!r}"


class Abs(_Unary):
    pass


class Exp(_Unary):
    pass


class Sigmoid(_Unary):
    pass


class Tanh(_Unary):
    pass


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct nodes reachable from ``roots``, children before parents."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for child in reversed(node.children):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _exp(z: float) -> float:
    try:
        return math.exp(z)
    except OverflowError:
        return math.inf


def evaluate(e: Expr, point) -> float:
    """Floating-point value of ``e`` at ``point`` (a name -> value mapping)."""
    if not isinstance(point, Mapping):
        raise TypeError("point must map variable names to values")
    vals: dict[int, float] = {}
    for node in postorder([e]):
        if isinstance(node, Var):
            try:
                v = float(point[node.name])
            except KeyError:
                raise KeyError(f"variable {node.name!r} is not assigned") from None
        elif isinstance(node, Const):
            v = node.value
        elif isinstance(node, Add):
            v = vals[id(node.left)] + vals[id(node.right)]
        elif isinstance(node, Mul):
            v = vals[id(node.left)] * vals[id(node.right)]
        elif isinstance(node, Max):
            v = max(vals[id(node.left)], vals[id(node.right)])
        elif isinstance(node, Neg):
            v = -vals[id(node.arg)]
        elif isinstance(node, Abs):
            v = abs(vals[id(node.arg)])
        elif isinstance(node, Exp):
            v = _exp(vals[id(node.arg)])
        elif isinstance(node, Sigmoid):
            v = _sigmoid(vals[id(node.arg)])
        elif isinstance(node, Tanh):
            v = math.tanh(vals[id(node.arg)])
        else:  # pragma: no cover
            raise TypeError(f"unknown node {type(node).__name__}")
        vals[id(node)] = v
    return vals[id(e)]


def eval_interval(e: Expr, box: Box, names: Sequence[str] | None = None) -> Interval:
    """Outward-rounded natural interval extension of ``e`` over ``box``."""
    from ._tape import Tape

    names = list(names if names is not None else (box.names or ()))
    missing = e.variables() - set(names)
    if missing:
        raise KeyError(f"box does not cover variables {sorted(missing)}")
    tape = Tape([e], names)
    lo, hi = tape.root_enclosure(box.lo[None, :], box.hi[None, :])
    return Interval(float(lo[0]), float(hi[0]))


# -- constraints -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atom:
    lhs: Expr
    rel: str
    rhs: Expr

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(f"unknown relation {self.rel!r}")
        object.__setattr__(self, "lhs", as_expr(self.lhs))
        object.__setattr__(self, "rhs", as_expr(self.rhs))

    def __repr__(self):
        return f"{self.lhs!r} {self.rel} {self.rhs!r}"

    def variables(self) -> set[str]:
        return self.lhs.variables() | self.rhs.variables()

    def holds(self, point: Mapping[str, float], slack: float = 0.0) -> bool:
        """Truth at ``point`` with every relation relaxed by ``slack``."""
        d = evaluate(self.lhs, point) - evaluate(self.rhs, point)
        return relation_holds(self.rel, d, slack)


def relation_holds(rel: str, d, slack: float = 0.0):
    """Vectorised truth of ``d rel 0`` relaxed by ``slack``."""
    if rel == "<=":
        return d <= slack
    if rel == "<":
        return d < slack
    if rel == ">=":
        return d >= -slack
    if rel == ">":
        return d > -slack
    return np.abs(d) <= slack


class Formula:
    """Conjunction of clauses; each clause is a disjunction of atoms.

    Every variable carries a finite domain interval; the domains are part of
    the formula (an implicit conjunction of bound constraints).
    """

    def __init__(self, clauses: Iterable[Iterable[Atom] | Atom], variables: Sequence[tuple[str, Interval | tuple]]):
        cl = []
        for c in clauses:
            c = (c,) if isinstance(c, Atom) else tuple(c)
            if not c:
                raise ValueError("empty clause")
            cl.append(c)
        self.clauses: tuple[tuple[Atom, ...], ...] = tuple(cl)
        vars_ = []
        for name, dom in variables:
            lo, hi = (dom.lo, dom.hi) if isinstance(dom, Interval) else dom
            dom = Interval(float(lo), float(hi))
            if not (math.isfinite(dom.lo) and math.isfinite(dom.hi)):
                raise ValueError(f"variable {name!r} needs a finite domain")
            vars_.append((name, dom))
        self.variables: tuple[tuple[str, Interval], ...] = tuple(vars_)
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        used = set().union(*(a.variables() for c in self.clauses for a in c)) if self.clauses else set()
        undeclared = used - set(names)
        if undeclared:
            raise ValueError(f"undeclared variables {sorted(undeclared)}")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.variables]

    @property
    def domain(self) -> Box:
        return Box([d.lo for _, d in self.variables], [d.hi for _, d in self.variables], self.names)

    @property
    def atoms(self) -> list[Atom]:
        return [a for c in self.clauses for a in c]

    def __repr__(self):
        body = " and ".join("(" + " or ".join(map(repr, c)) + ")" for c in self.clauses)
        return f"Formula({body or 'true'})"

    def assignment(self, point) -> dict[str, float]:
        if isinstance(point, Mapping):
            return dict(point)
        point = np.asarray(point, dtype=float)
        if point.shape != (len(self.variables),):
            raise ValueError(f"point has shape {point.shape}, formula has {len(self.variables)} variables")
        return dict(zip(self.names, point.tolist()))

    def holds(self, point, slack: float = 0.0) -> bool:
        env = self.assignment(point)
        return all(any(a.holds(env, slack) for a in clause) for clause in self.clauses)

    def with_clauses(self, extra) -> "Formula":
        return Formula(self.clauses + tuple(extra), self.variables)

    def to_smtlib(self) -> str:
        return to_smtlib(self)


# -- network bridge --------------------------------------------------------


def network_to_expr(net, inputs: Sequence, params: Sequence) -> Expr:
    """Expression for the network's confidence with substituted leaves.

    ``inputs`` and ``params`` hold one entry per input / flat parameter; each
    is an ``Expr`` (usually ``Var``) or a number folded to ``Const``.
    """
    if len(inputs) != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {len(inputs)}")
    if len(params) != net.n_params:
        raise ValueError(f"expected {net.n_params} parameters, got {len(params)}")
    acts = [as_expr(v) for v in inputs]
    params = [as_expr(v) for v in params]
    pos = 0
    for layer in net.layers:
        rows, cols = layer.weights.shape
        w = params[pos:pos + rows * cols]
        b = params[pos + rows * cols:pos + rows * cols + rows]
        pos += rows * cols + rows
        out = []
        for r in range(rows):
            z = None
            for c in range(cols):
                term = _mul(w[r * cols + c], acts[c])
                z = term if z is None else _add(z, term)
            z = _add(z, b[r])
            out.append(_activate(layer.activation.value, z))
        acts = out
    return acts[0]


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _activate(kind: str, z: Expr) -> Expr:
    if kind == "linear":
        return z
    if kind == "relu":
        return Max(Const(0.0), z)
    if isinstance(z, Const):
        return Const(_sigmoid(z.value) if kind == "sigmoid" else math.tanh(z.value))
    return Sigmoid(z) if kind == "sigmoid" else Tanh(z)


# -- SMT-LIB dump ----------------------------------------------------------


def _smt_num(v: float) -> str:
    s = repr(float(v))
    if "e" in s or "E" in s:
        s = format(float(v), ".17f").rstrip("0")
        s = s + "0" if s.endswith(".") else s
    if s.startswith("-"):
        return f"(- {s[1:]})"
    return s


def _smt_expr(e: Expr, names: dict[str, str]) -> str:
    memo: dict[int, str] = {}
    for node in postorder([e]):
        if isinstance(node, Var):
            s = names[node.name]
        elif isinstance(node, Const):
            s = _smt_num(node.value)
        elif isinstance(node, Add):
            s = f"(+ {memo[id(node.left)]} {memo[id(node.right)]})"
        elif isinstance(node, Mul):
            s = f"(* {memo[id(node.left)]} {memo[id(node.right)]})"
        elif isinstance(node, Max):
            s = f"(max {memo[id(node.left)]} {memo[id(node.right)]})"
        elif isinstance(node, Neg):
            s = f"(- {memo[id(node.arg)]})"
        elif isinstance(node, Abs):
            s = f"(abs {memo[id(node.arg)]})"
        elif isinstance(node, Exp):
            s = f"(exp {memo[id(node.arg)]})"
        elif isinstance(node, Sigmoid):
            s = f"(/ 1 (+ 1 (exp (- {memo[id(node.arg)]}))))"
        else:
            s = f"(tanh {memo[id(node.arg)]})"
        memo[id(node)] = s
    return memo[id(e)]


def to_smtlib(f: Formula) -> str:
    """SMT-LIB 2 text for ``f`` (QF_NRA with exp/tanh/abs/max, as dReal reads it)."""
    names = {n: "|" + n + "|" if not n.isidentifier() else n for n in f.names}
    lines = ["(set-logic QF_NRA)"]
    for n, _ in f.variables:
        lines.append(f"(declare-fun {names[n]} () Real)")
    for n, dom in f.variables:
        lines.append(f"(assert (<= {_smt_num(dom.lo)} {names[n]}))")
        lines.append(f"(assert (<= {names[n]} {_smt_num(dom.hi)}))")
    for clause in f.clauses:
        parts = [f"({a.rel} {_smt_expr(a.lhs, names)} {_smt_expr(a.rhs, names)})" for a in clause]
        body = parts[0] if len(parts) == 1 else "(or " + " ".join(parts) + ")"
        lines.append(f"(assert {body})")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"
