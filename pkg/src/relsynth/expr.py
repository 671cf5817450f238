"""Relational algebra, terms and transition formulas.

All nodes are frozen dataclasses, so structural equality and hashing come for
free. Column indices are 1-based throughout, as in ``sel[2=#u](M)``.

Session variables and relations carry a ``primed`` flag marking next-state
occurrences; parameters are rigid and never primed.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Optional, Sequence, Union

from .relmodel import NULL, IntVal, Schema, SchemaError, State, Value, row_key, value_key


class EvalError(Exception):
    """A formula could not be evaluated (unbound parameter, missing state, ...)."""


class FormulaError(Exception):
    """A formula or transducer violates the assignment discipline."""


class Node:
    """Base class of every AST node."""

    __slots__ = ()


# --- terms ------------------------------------------------------------------


@dataclass(frozen=True)
class Lit(Node):
    value: Value


@dataclass(frozen=True)
class Var(Node):
    name: str
    primed: bool = False


@dataclass(frozen=True)
class Param(Node):
    name: str


@dataclass(frozen=True)
class App(Node):
    fn: str
    args: tuple


@dataclass(frozen=True)
class Card(Node):
    """``|expr| + offset``."""

    expr: "RelExpr"
    offset: int = 0

    def __post_init__(self) -> None:
        if self.offset < 0:
            raise FormulaError("cardinality offset must be non-negative")


Term = Union[Lit, Var, Param, App, Card]


# --- relational algebra -----------------------------------------------------


@dataclass(frozen=True)
class Rel(Node):
    name: str
    primed: bool = False


@dataclass(frozen=True)
class Tuples(Node):
    """A literal relation ``{(t1, t2), ...}``; ``arity`` matters for ``{}``."""

    rows: tuple
    arity: int

    def __post_init__(self) -> None:
        for r in self.rows:
            if len(r) != self.arity:
                raise FormulaError(f"literal row of length {len(r)} in relation of arity {self.arity}")


@dataclass(frozen=True)
class SelectEq(Node):
    child: "RelExpr"
    col: int
    term: Term


@dataclass(frozen=True)
class SelectCols(Node):
    child: "RelExpr"
    left: int
    right: int


@dataclass(frozen=True)
class Project(Node):
    child: "RelExpr"
    cols: tuple


@dataclass(frozen=True)
class Product(Node):
    left: "RelExpr"
    right: "RelExpr"


@dataclass(frozen=True)
class Union_(Node):
    left: "RelExpr"
    right: "RelExpr"


@dataclass(frozen=True)
class Diff(Node):
    left: "RelExpr"
    right: "RelExpr"


RelExpr = Union[Rel, Tuples, SelectEq, SelectCols, Project, Product, Union_, Diff]


# --- formulas ---------------------------------------------------------------


@dataclass(frozen=True)
class Bool(Node):
    value: bool


@dataclass(frozen=True)
class Eq(Node):
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class RelEq(Node):
    lhs: RelExpr
    rhs: RelExpr


@dataclass(frozen=True)
class Sat(Node):
    expr: RelExpr


@dataclass(frozen=True)
class Member(Node):
    """``(t1, ..., tn) in E``; sugar for nested selections under ``sat``."""

    terms: tuple
    expr: RelExpr


@dataclass(frozen=True)
class Pred(Node):
    name: str
    args: tuple


@dataclass(frozen=True)
class Not(Node):
    child: "Formula"


@dataclass(frozen=True)
class And(Node):
    children: tuple


@dataclass(frozen=True)
class Or(Node):
    children: tuple


Formula = Union[Bool, Eq, RelEq, Sat, Member, Pred, Not, And, Or]

TRUE = Bool(True)
FALSE = Bool(False)

TERMS = (Lit, Var, Param, App, Card)
RELS = (Rel, Tuples, SelectEq, SelectCols, Project, Product, Union_, Diff)
FORMULAS = (Bool, Eq, RelEq, Sat, Member, Pred, Not, And, Or)


def ne(a: Term, b: Term) -> Not:
    return Not(Eq(a, b))


def conj(*parts: Formula) -> Formula:
    """Flattened conjunction: drops ``true``, collapses on ``false``, removes repeats."""
    out: list = []
    for p in parts:
        for c in conjuncts(p):
            if c == TRUE or c in out:
                continue
            if c == FALSE:
                return FALSE
            out.append(c)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def conjuncts(f: Formula) -> list:
    if isinstance(f, And):
        out = []
        for c in f.children:
            out.extend(conjuncts(c))
        return out
    return [f]


# --- generic traversal ------------------------------------------------------


def _map_value(v, fn):
    if isinstance(v, Node):
        return map_node(v, fn)
    if isinstance(v, tuple):
        return tuple(_map_value(x, fn) for x in v)
    return v


def map_node(node: Node, fn: Callable[[Node], Optional[Node]]) -> Node:
    """Rebuild ``node`` bottom-up, replacing any subtree for which ``fn`` returns a node."""
    r = fn(node)
    if r is not None:
        return r
    if isinstance(node, Lit):
        return node
    changes = {}
    for f in dataclasses.fields(node):
        old = getattr(node, f.name)
        new = _map_value(old, fn)
        if new is not old and new != old:
            changes[f.name] = new
    return dataclasses.replace(node, **changes) if changes else node


def walk(node) -> Iterator[Node]:
    if isinstance(node, tuple):
        for x in node:
            yield from walk(x)
        return
    if not isinstance(node, Node):
        return
    yield node
    if isinstance(node, Lit):
        return
    for f in dataclasses.fields(node):
        yield from walk(getattr(node, f.name))


def size(node) -> int:
    return sum(1 for _ in walk(node))


@dataclass
class Symbols:
    vars: set
    rels: set
    primed_vars: set
    primed_rels: set
    params: set
    funcs: set
    preds: set
    consts: set


def symbols(node) -> Symbols:
    from .relmodel import Const

    s = Symbols(set(), set(), set(), set(), set(), set(), set(), set())
    for n in walk(node):
        if isinstance(n, Var):
            (s.primed_vars if n.primed else s.vars).add(n.name)
        elif isinstance(n, Rel):
            (s.primed_rels if n.primed else s.rels).add(n.name)
        elif isinstance(n, Param):
            s.params.add(n.name)
        elif isinstance(n, App):
            s.funcs.add(n.fn)
        elif isinstance(n, Pred):
            s.preds.add(n.name)
        elif isinstance(n, Lit) and isinstance(n.value, Const):
            s.consts.add(n.value.label)
    return s


def has_primes(node) -> bool:
    return any(isinstance(n, (Var, Rel)) and n.primed for n in walk(node))


def var_symbol(name: str) -> str:
    return "#" + name


# --- static arity -----------------------------------------------------------


def arity(e: RelExpr, schema: Schema) -> int:
    if isinstance(e, Rel):
        return schema.relation(e.name).arity
    if isinstance(e, Tuples):
        return e.arity
    if isinstance(e, SelectEq):
        a = arity(e.child, schema)
        if not 1 <= e.col <= a:
            raise FormulaError(f"selection column {e.col} out of range for arity {a}")
        return a
    if isinstance(e, SelectCols):
        a = arity(e.child, schema)
        if not (1 <= e.left <= a and 1 <= e.right <= a):
            raise FormulaError(f"selection columns {e.left},{e.right} out of range for arity {a}")
        return a
    if isinstance(e, Project):
        a = arity(e.child, schema)
        for c in e.cols:
            if not 1 <= c <= a:
                raise FormulaError(f"projection column {c} out of range for arity {a}")
        return len(e.cols)
    if isinstance(e, Product):
        return arity(e.left, schema) + arity(e.right, schema)
    if isinstance(e, (Union_, Diff)):
        a, b = arity(e.left, schema), arity(e.right, schema)
        if a != b:
            raise FormulaError(f"set operation on arities {a} and {b}")
        return a
    raise TypeError(f"not a relational expression: {e!r}")


def check_formula(f, schema: Schema) -> None:
    """Raise on arity mismatches and undeclared symbols anywhere in ``f``."""
    for n in walk(f):
        if isinstance(n, RELS):
            arity(n, schema)
        if isinstance(n, RelEq) and arity(n.lhs, schema) != arity(n.rhs, schema):
            raise FormulaError("relation equality between different arities")
        if isinstance(n, Member) and len(n.terms) != arity(n.expr, schema):
            raise FormulaError("membership tuple length does not match relation arity")
        if isinstance(n, Var):
            schema.var_sort(n.name)
        if isinstance(n, Param):
            schema.param_sort(n.name)
        if isinstance(n, App):
            sig = schema.function(n.fn)
            if len(sig.args) != len(n.args):
                raise FormulaError(f"function {n.fn} expects {len(sig.args)} arguments")
        if isinstance(n, Pred):
            sig = schema.predicate(n.name)
            if len(sig.args) != len(n.args):
                raise FormulaError(f"predicate {n.name} expects {len(sig.args)} arguments")


# --- evaluation -------------------------------------------------------------


@dataclass
class Environment:
    """Interpretation of uninterpreted functions and predicates as finite tables."""

    funcs: dict = dataclasses.field(default_factory=dict)
    preds: dict = dataclasses.field(default_factory=dict)

    def apply(self, fn: str, args: tuple) -> Value:
        try:
            return self.funcs[fn][args]
        except KeyError:
            raise EvalError(f"no value for {fn}{tuple(str(a) for a in args)}") from None

    def holds(self, pred: str, args: tuple) -> bool:
        try:
            return self.preds[pred][args]
        except KeyError:
            raise EvalError(f"no value for {pred}{tuple(str(a) for a in args)}") from None

    def canonical(self) -> tuple:
        """A hashable, order-independent rendering of the tables."""
        return (
            tuple((f, tuple(sorted(t.items(), key=lambda kv: row_key(kv[0])))) for f, t in sorted(self.funcs.items())),
            tuple((p, tuple(sorted(t.items(), key=lambda kv: row_key(kv[0])))) for p, t in sorted(self.preds.items())),
        )


class _Ctx:
    __slots__ = ("cur", "nxt", "env", "bindings")

    def __init__(self, pair, env, bindings):
        if isinstance(pair, State):
            pair = (pair, None)
        self.cur, self.nxt = pair
        self.env = env if env is not None else Environment()
        self.bindings = bindings or {}

    def state(self, primed: bool) -> State:
        if not primed:
            return self.cur
        if self.nxt is None:
            raise EvalError("primed symbol evaluated without a next state")
        return self.nxt


def _term(t: Term, c: _Ctx) -> Value:
    if isinstance(t, Lit):
        return t.value
    if isinstance(t, Var):
        return c.state(t.primed).var(t.name)
    if isinstance(t, Param):
        try:
            return c.bindings[t.name]
        except KeyError:
            raise EvalError(f"unbound parameter ${t.name}") from None
    if isinstance(t, App):
        args = tuple(_term(a, c) for a in t.args)
        if any(a is NULL for a in args):
            return NULL
        return c.env.apply(t.fn, args)
    if isinstance(t, Card):
        return IntVal(len(_rel(t.expr, c)) + t.offset)
    raise TypeError(f"not a term: {t!r}")


def _rel(e: RelExpr, c: _Ctx) -> frozenset:
    if isinstance(e, Rel):
        return c.state(e.primed).table(e.name)
    if isinstance(e, Tuples):
        return frozenset(tuple(_term(x, c) for x in row) for row in e.rows)
    if isinstance(e, SelectEq):
        x = _term(e.term, c)
        return frozenset(r for r in _rel(e.child, c) if r[e.col - 1] == x)
    if isinstance(e, SelectCols):
        return frozenset(r for r in _rel(e.child, c) if r[e.left - 1] == r[e.right - 1])
    if isinstance(e, Project):
        return frozenset(tuple(r[i - 1] for i in e.cols) for r in _rel(e.child, c))
    if isinstance(e, Product):
        right = _rel(e.right, c)
        return frozenset(a + b for a in _rel(e.left, c) for b in right)
    if isinstance(e, Union_):
        return _rel(e.left, c) | _rel(e.right, c)
    if isinstance(e, Diff):
        return _rel(e.left, c) - _rel(e.right, c)
    raise TypeError(f"not a relational expression: {e!r}")


def _formula(f: Formula, c: _Ctx) -> bool:
    if isinstance(f, Bool):
        return f.value
    if isinstance(f, Eq):
        return _term(f.lhs, c) == _term(f.rhs, c)
    if isinstance(f, RelEq):
        return _rel(f.lhs, c) == _rel(f.rhs, c)
    if isinstance(f, Sat):
        return bool(_rel(f.expr, c))
    if isinstance(f, Member):
        return _formula(desugar_member(f), c)
    if isinstance(f, Pred):
        args = tuple(_term(a, c) for a in f.args)
        if any(a is NULL for a in args):
            return False
        return c.env.holds(f.name, args)
    if isinstance(f, Not):
        return not _formula(f.child, c)
    if isinstance(f, And):
        return all(_formula(x, c) for x in f.children)
    if isinstance(f, Or):
        return any(_formula(x, c) for x in f.children)
    raise TypeError(f"not a formula: {f!r}")


def eval_term(t: Term, pair, env: Optional[Environment] = None, bindings: Optional[Mapping] = None) -> Value:
    return _term(t, _Ctx(pair, env, bindings))


def eval_relalg(e: RelExpr, pair, env: Optional[Environment] = None, bindings: Optional[Mapping] = None) -> frozenset:
    """Set-semantics evaluation of ``e``; ``pair`` is a state or ``(state, next_state)``."""
    return _rel(e, _Ctx(pair, env, bindings))


def eval_formula(f: Formula, pair, env: Optional[Environment] = None, bindings: Optional[Mapping] = None) -> bool:
    return _formula(f, _Ctx(pair, env, bindings))


def desugar_member(m: Member) -> Sat:
    """``(t1, ..., tn) in E`` becomes ``sat(sel[1=t1](... sel[n=tn](E)))``."""
    e = m.expr
    for i in range(len(m.terms), 0, -1):
        e = SelectEq(e, i, m.terms[i - 1])
    return Sat(e)


# --- priming and substitution -----------------------------------------------


def prime(f: Formula) -> Formula:
    """Move every state symbol of a current-state formula to the next state."""
    if has_primes(f):
        raise FormulaError("formula already contains primed symbols")

    def fn(n):
        if isinstance(n, (Var, Rel)):
            return dataclasses.replace(n, primed=True)
        return None

    return map_node(f, fn)


def unprime_identity(f: Formula) -> dict:
    """The substitution ``x' -> x`` for every primed symbol of ``f``."""
    out = {}
    for n in walk(f):
        if isinstance(n, (Var, Rel)) and n.primed:
            out[n] = dataclasses.replace(n, primed=False)
    return out


def substitute(f: Node, subst: Mapping[Node, Node]) -> Node:
    """Replace primed symbols simultaneously by their definitions.

    The keys are primed ``Var``/``Rel`` nodes. Every primed symbol of ``f``
    must be covered; the result is prime-free.
    """
    def fn(n):
        if isinstance(n, (Var, Rel)) and n.primed:
            if n not in subst:
                label = var_symbol(n.name) if isinstance(n, Var) else n.name
                raise FormulaError(f"no definition for {label}'")
            return subst[n]
        return None

    return map_node(f, fn)


def rename_params(node: Node, rename: Callable[[str], str]) -> Node:
    return map_node(node, lambda n: Param(rename(n.name)) if isinstance(n, Param) else None)


# --- transducers ------------------------------------------------------------


@dataclass(frozen=True)
class Transducer:
    name: str
    url: str
    params: tuple  # of (name, sort)
    formula: Formula
    links: Optional[tuple] = None

    def param_names(self) -> list:
        return [n for n, _ in self.params]


def is_definition(c: Formula) -> bool:
    return (isinstance(c, Eq) and isinstance(c.lhs, Var) and c.lhs.primed) or (
        isinstance(c, RelEq) and isinstance(c.lhs, Rel) and c.lhs.primed
    )


def split(formula: Formula) -> tuple[list, dict]:
    """Separate a transition formula into guard conjuncts and primed definitions.

    Raises ``FormulaError`` when a symbol is defined twice, a definition uses
    next-state symbols on its right-hand side, or primes occur outside a
    top-level definition.
    """
    guard, defs = [], {}
    for c in conjuncts(formula):
        if is_definition(c):
            if has_primes(c.rhs):
                raise FormulaError(f"primed symbol on the right-hand side of a definition of {_label(c.lhs)}'")
            if c.lhs in defs:
                raise FormulaError(f"symbol {_label(c.lhs)} has two primed definitions")
            defs[c.lhs] = c.rhs
        elif has_primes(c):
            raise FormulaError("primed symbols may only appear on the left of a top-level definition")
        else:
            guard.append(c)
    return guard, defs


def _label(n) -> str:
    return var_symbol(n.name) if isinstance(n, Var) else n.name


def frame_close(t: Transducer, schema: Schema) -> Transducer:
    """Conjoin ``x' = x`` for every session variable and relation left undefined."""
    _, defs = split(t.formula)
    frames = []
    for name, _ in schema.session_vars:
        if Var(name, True) not in defs:
            frames.append(Eq(Var(name, True), Var(name)))
    for rel in schema.relations:
        if Rel(rel.name, True) not in defs:
            frames.append(RelEq(Rel(rel.name, True), Rel(rel.name)))
    for key in defs:
        if isinstance(key, Var):
            schema.var_sort(key.name)
        else:
            schema.relation(key.name)
    if not frames:
        return t
    return dataclasses.replace(t, formula=And(tuple(conjuncts(t.formula)) + tuple(frames)))


def guard_of(t: Transducer) -> Formula:
    return conj(*split(t.formula)[0])


def definitions(t: Transducer) -> dict:
    return split(t.formula)[1]


def writes_set(t: Transducer) -> frozenset:
    out = set()
    for lhs, rhs in definitions(t).items():
        if rhs != dataclasses.replace(lhs, primed=False):
            out.add(_label(lhs))
    return frozenset(out)


def state_formula(state: State, schema: Schema) -> Formula:
    """The characteristic constraint holding exactly at ``state``."""
    parts = []
    for name, _ in schema.session_vars:
        parts.append(Eq(Var(name), Lit(state.var(name))))
    for rel in schema.relations:
        rows = sorted(state.table(rel.name), key=row_key)
        parts.append(RelEq(Rel(rel.name), Tuples(tuple(tuple(Lit(v) for v in r) for r in rows), rel.arity)))
    return conj(*parts)
