"""Finite-scope model finding for state constraints.

A constraint is translated to CNF over a bounded universe: every tracked
session variable and parameter gets a one-hot encoding over its carrier plus
null, every tracked relation gets one Boolean per candidate row, and every
uninterpreted function or predicate gets an explicit table. Relational algebra
is compiled tuple-by-tuple into gate literals, cardinalities into exact
counters. The CNF is handed to a SAT solver (MiniSat through python-sat).

Every model is decoded back to concrete values and re-verified with the
direct evaluator before it is returned.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from pysat.card import CardEnc, EncType
from pysat.solvers import Solver

from . import expr as E
from .relmodel import (
    NULL,
    Anon,
    Const,
    IntVal,
    Schema,
    Scope,
    State,
    Value,
    carrier,
    check_instance,
    in_scope,
    row_key,
    value_fits,
    value_key,
)

TRUE_LIT = 1
FALSE_LIT = -1


class SolverError(Exception):
    """Internal inconsistency: a decoded model failed its self-check."""


class BudgetExhausted(Exception):
    def __init__(self, stats: dict):
        self.stats = stats
        super().__init__(f"solver budget exhausted ({stats})")


@dataclass
class Model:
    state: State
    bindings: dict = field(default_factory=dict)
    env: E.Environment = field(default_factory=E.Environment)

    def key(self) -> tuple:
        return (self.state, tuple(sorted(self.bindings.items())), self.env.canonical())


SAT, UNSAT, BUDGET = "sat", "unsat", "budget"


@dataclass
class SolveOutcome:
    status: str
    model: Optional[Model] = None
    stats: dict = field(default_factory=dict)

    @property
    def is_sat(self) -> bool:
        return self.status == SAT

    @property
    def is_unsat(self) -> bool:
        return self.status == UNSAT


@dataclass(frozen=True)
class ChainStep:
    """Definitions of one transducer application, parameters already renamed."""

    defs: tuple  # of (primed Var/Rel, rhs)


def chain_of(transducers: Sequence[E.Transducer]) -> tuple:
    return tuple(ChainStep(tuple(E.definitions(t).items())) for t in transducers)


# --- CNF construction -------------------------------------------------------


class _Encoder:
    def __init__(self, schema: Schema, scope: Scope):
        self.schema = schema
        self.scope = scope
        self.nv = 1
        self.clauses: list[list[int]] = [[TRUE_LIT]]
        self._and_cache: dict = {}
        self.funcs: dict = {}
        self.preds: dict = {}
        self.params: dict = {}
        self.carriers: dict = {}

    def carrier(self, sort: str) -> list:
        if sort not in self.carriers:
            self.carriers[sort] = carrier(self.schema, self.scope, sort)
        return self.carriers[sort]

    def new(self) -> int:
        self.nv += 1
        return self.nv

    def add(self, clause: list) -> None:
        if TRUE_LIT in clause:
            return
        self.clauses.append([l for l in clause if l != FALSE_LIT])

    # gates with constant folding
    def and_(self, lits: Iterable[int]) -> int:
        out = []
        seen = set()
        for l in lits:
            if l == TRUE_LIT or l in seen:
                continue
            if l == FALSE_LIT or -l in seen:
                return FALSE_LIT
            seen.add(l)
            out.append(l)
        if not out:
            return TRUE_LIT
        if len(out) == 1:
            return out[0]
        key = frozenset(out)
        g = self._and_cache.get(key)
        if g is None:
            g = self.new()
            for l in out:
                self.clauses.append([-g, l])
            self.clauses.append([g] + [-l for l in out])
            self._and_cache[key] = g
        return g

    def or_(self, lits: Iterable[int]) -> int:
        return -self.and_(-l for l in lits)

    def iff(self, a: int, b: int) -> int:
        if a == b:
            return TRUE_LIT
        if a == -b:
            return FALSE_LIT
        return self.or_([self.and_([a, b]), self.and_([-a, -b])])

    def one_hot(self, values: Sequence) -> dict:
        lits = [self.new() for _ in values]
        self.clauses.append(list(lits))
        for a, b in itertools.combinations(lits, 2):
            self.clauses.append([-a, -b])
        return dict(zip(values, lits))

    def at_most(self, lits: Sequence[int], k: int) -> None:
        live = [l for l in lits if l != FALSE_LIT]
        forced = sum(1 for l in live if l == TRUE_LIT)
        live = [l for l in live if l != TRUE_LIT]
        k -= forced
        if k < 0:
            self.clauses.append([FALSE_LIT])
            return
        if len(live) <= k:
            return
        if k == 0:
            for l in live:
                self.clauses.append([-l])
            return
        enc = CardEnc.atmost(live, bound=k, top_id=self.nv, encoding=EncType.seqcounter)
        self.nv = max(self.nv, enc.nv)
        self.clauses.extend(enc.clauses)

    def count(self, lits: Sequence[int]) -> dict:
        """One-hot encoding of how many of ``lits`` are true."""
        c = {0: TRUE_LIT}
        for x in lits:
            if x == FALSE_LIT:
                continue
            nxt = {}
            for k in range(len(c) + 1):
                stay = self.and_([c[k], -x]) if k in c else FALSE_LIT
                move = self.and_([c[k - 1], x]) if k - 1 in c else FALSE_LIT
                lit = self.or_([stay, move])
                if lit != FALSE_LIT:
                    nxt[k] = lit
            c = nxt
        return c

    # uninterpreted symbols
    def func_table(self, name: str) -> dict:
        if name not in self.funcs:
            sig = self.schema.function(name)
            args = list(itertools.product(*(self.carrier(s) for s in sig.args)))
            res = self.carrier(sig.result)
            table = {a: self.one_hot(res) for a in args}
            if sig.injective:
                for a, b in itertools.combinations(args, 2):
                    for v in res:
                        self.clauses.append([-table[a][v], -table[b][v]])
            self.funcs[name] = table
        return self.funcs[name]

    def pred_table(self, name: str) -> dict:
        if name not in self.preds:
            sig = self.schema.predicate(name)
            args = itertools.product(*(self.carrier(s) for s in sig.args))
            self.preds[name] = {a: self.new() for a in args}
        return self.preds[name]

    def param(self, name: str) -> dict:
        if name not in self.params:
            sort = self.schema.param_sort(name)
            self.params[name] = self.one_hot(self.carrier(sort) + [NULL])
        return self.params[name]

    # terms, relations, formulas over a symbolic state
    def term(self, t, st: dict) -> dict:
        if isinstance(t, E.Lit):
            return {t.value: TRUE_LIT}
        if isinstance(t, E.Var):
            return st[("var", t.name)]
        if isinstance(t, E.Param):
            return self.param(t.name)
        if isinstance(t, E.App):
            args = [self.term(a, st) for a in t.args]
            table = self.func_table(t.fn)
            out: dict = {}
            null_cases = []
            for combo in itertools.product(*(list(a.items()) for a in args)):
                vals = tuple(v for v, _ in combo)
                sel = self.and_(l for _, l in combo)
                if sel == FALSE_LIT:
                    continue
                if any(v is NULL for v in vals):
                    null_cases.append(sel)
                    continue
                if vals not in table:
                    raise E.EvalError(f"argument {vals} of {t.fn} outside the scope carrier")
                for v, l in table[vals].items():
                    out.setdefault(v, []).append(self.and_([sel, l]))
            res = {v: self.or_(ls) for v, ls in out.items()}
            if null_cases:
                res[NULL] = self.or_(null_cases)
            return {v: l for v, l in res.items() if l != FALSE_LIT}
        if isinstance(t, E.Card):
            rel = self.rel(t.expr, st)
            counts = self.count(list(rel.values()))
            return {IntVal(k + t.offset): l for k, l in counts.items()}
        raise TypeError(t)

    def rel(self, e, st: dict) -> dict:
        if isinstance(e, E.Rel):
            return st[("rel", e.name)]
        if isinstance(e, E.Tuples):
            out: dict = {}
            for row in e.rows:
                encs = [list(self.term(x, st).items()) for x in row]
                for combo in itertools.product(*encs):
                    tup = tuple(v for v, _ in combo)
                    out.setdefault(tup, []).append(self.and_(l for _, l in combo))
            return self._clean({k: self.or_(v) for k, v in out.items()})
        if isinstance(e, E.SelectEq):
            child = self.rel(e.child, st)
            term = self.term(e.term, st)
            return self._clean({t: self.and_([l, term.get(t[e.col - 1], FALSE_LIT)]) for t, l in child.items()})
        if isinstance(e, E.SelectCols):
            child = self.rel(e.child, st)
            return {t: l for t, l in child.items() if t[e.left - 1] == t[e.right - 1]}
        if isinstance(e, E.Project):
            child = self.rel(e.child, st)
            out = {}
            for t, l in child.items():
                out.setdefault(tuple(t[i - 1] for i in e.cols), []).append(l)
            return self._clean({k: self.or_(v) for k, v in out.items()})
        if isinstance(e, E.Product):
            a, b = self.rel(e.left, st), self.rel(e.right, st)
            return self._clean({x + y: self.and_([la, lb]) for x, la in a.items() for y, lb in b.items()})
        if isinstance(e, E.Union_):
            a, b = self.rel(e.left, st), self.rel(e.right, st)
            out = dict(a)
            for t, l in b.items():
                out[t] = self.or_([out[t], l]) if t in out else l
            return self._clean(out)
        if isinstance(e, E.Diff):
            a, b = self.rel(e.left, st), self.rel(e.right, st)
            return self._clean({t: self.and_([l, -b.get(t, FALSE_LIT)]) for t, l in a.items()})
        raise TypeError(e)

    @staticmethod
    def _clean(d: dict) -> dict:
        return {k: v for k, v in d.items() if v != FALSE_LIT}

    def formula(self, f, st: dict) -> int:
        if isinstance(f, E.Bool):
            return TRUE_LIT if f.value else FALSE_LIT
        if isinstance(f, E.Eq):
            a, b = self.term(f.lhs, st), self.term(f.rhs, st)
            return self.or_(self.and_([l, b[v]]) for v, l in a.items() if v in b)
        if isinstance(f, E.RelEq):
            a, b = self.rel(f.lhs, st), self.rel(f.rhs, st)
            keys = list(a) + [k for k in b if k not in a]
            return self.and_(self.iff(a.get(k, FALSE_LIT), b.get(k, FALSE_LIT)) for k in keys)
        if isinstance(f, E.Sat):
            return self.or_(self.rel(f.expr, st).values())
        if isinstance(f, E.Member):
            return self.formula(E.desugar_member(f), st)
        if isinstance(f, E.Pred):
            args = [self.term(a, st) for a in f.args]
            table = self.pred_table(f.name)
            cases = []
            for combo in itertools.product(*(list(a.items()) for a in args)):
                vals = tuple(v for v, _ in combo)
                if any(v is NULL for v in vals):
                    continue
                if vals not in table:
                    raise E.EvalError(f"argument {vals} of {f.name} outside the scope carrier")
                cases.append(self.and_([l for _, l in combo] + [table[vals]]))
            return self.or_(cases)
        if isinstance(f, E.Not):
            return -self.formula(f.child, st)
        if isinstance(f, E.And):
            return self.and_([self.formula(c, st) for c in f.children])
        if isinstance(f, E.Or):
            return self.or_([self.formula(c, st) for c in f.children])
        raise TypeError(f)

    # states
    def initial_state(self, vars_: set, rels: set) -> dict:
        st = {}
        for name, sort in self.schema.session_vars:
            st[("var", name)] = self.one_hot(self.carrier(sort) + [NULL]) if name in vars_ else {NULL: TRUE_LIT}
        for rel in self.schema.relations:
            if rel.name in rels:
                rows = itertools.product(*(self.carrier(s) for _, s in rel.columns))
                st[("rel", rel.name)] = {r: self.new() for r in rows}
            else:
                st[("rel", rel.name)] = {}
        return st

    def require_valid(self, st: dict) -> None:
        """Constrain a symbolic state to be a well-formed in-scope instance."""
        bound = self.scope.int_bound(self.schema)
        for name, sort in self.schema.session_vars:
            for v, l in st[("var", name)].items():
                if v is not NULL and not (value_fits(self.schema, sort, v) and _int_ok(v, bound)):
                    self.add([-l])
        for rel in self.schema.relations:
            table = st[("rel", rel.name)]
            live = {}
            for t, l in table.items():
                ok = all(value_fits(self.schema, rel.sort_of(i), v) and _int_ok(v, bound) for i, v in enumerate(t, 1))
                if ok:
                    live[t] = l
                else:
                    self.add([-l])
            if rel.key and len(rel.key) < rel.arity:
                groups: dict = {}
                for t, l in live.items():
                    groups.setdefault(tuple(t[i - 1] for i in rel.key), []).append(l)
                for ls in groups.values():
                    for a, b in itertools.combinations(ls, 2):
                        self.add([-a, -b])
            for fk in rel.foreign_keys:
                target = st[("rel", fk.target)]
                for t, l in live.items():
                    v = t[fk.column - 1]
                    support = [tl for tt, tl in target.items() if tt[fk.target_column - 1] == v]
                    self.add([-l] + support)
            self.at_most(list(live.values()), self.scope.rows(rel.name))

    def step(self, st: dict, step: ChainStep) -> dict:
        nxt = dict(st)
        for lhs, rhs in step.defs:
            if isinstance(lhs, E.Var):
                nxt[("var", lhs.name)] = self.term(rhs, st)
            else:
                nxt[("rel", lhs.name)] = self.rel(rhs, st)
        return nxt


def _int_ok(v: Value, bound: int) -> bool:
    return not isinstance(v, IntVal) or 0 <= v.n <= bound


# --- problems ---------------------------------------------------------------


def _fk_closure(schema: Schema, rels: set) -> set:
    out = set(rels)
    changed = True
    while changed:
        changed = False
        for r in schema.relations:
            if r.name in out:
                for fk in r.foreign_keys:
                    if fk.target not in out:
                        out.add(fk.target)
                        changed = True
    return out


def _constants(*nodes) -> list:
    labels = set()
    for n in nodes:
        labels |= E.symbols(n).consts
    return sorted(labels)


def _fixed_anons(*nodes) -> set:
    out = set()
    for n in nodes:
        for x in E.walk(n):
            if isinstance(x, E.Lit) and isinstance(x.value, Anon):
                out.add(x.value)
    return out


def problem_scope(scope: Scope, *nodes) -> Scope:
    return scope.with_constants(_constants(*nodes))


class Problem:
    """A compiled constraint with an incremental SAT solver behind it."""

    def __init__(
        self,
        f: E.Formula,
        schema: Schema,
        scope: Scope,
        chain: Sequence[ChainStep] = (),
        track_vars: Iterable[str] = (),
        track_rels: Iterable[str] = (),
        extra_nodes: Sequence = (),
    ):
        if E.has_primes(f):
            raise E.FormulaError("constraint contains primed symbols")
        E.check_formula(f, schema)
        chain_nodes = [rhs for step in chain for _, rhs in step.defs]
        self.f = f
        self.schema = schema
        self.chain = tuple(chain)
        self.scope = problem_scope(scope, f, *chain_nodes, *extra_nodes)
        self.budget = scope.budget
        sy = [E.symbols(f)] + [E.symbols(n) for n in chain_nodes]
        vars_ = set(track_vars).union(*(s.vars for s in sy))
        rels = set(track_rels).union(*(s.rels for s in sy))
        self.tracked_vars = vars_
        self.tracked_rels = _fk_closure(schema, rels)
        self.fixed = _fixed_anons(f, *chain_nodes, *extra_nodes)
        enc = _Encoder(schema, self.scope)
        self.enc = enc
        self.st = enc.initial_state(self.tracked_vars, self.tracked_rels)
        enc.require_valid(self.st)
        cur = self.st
        for step in self.chain:
            cur = enc.step(cur, step)
            enc.require_valid(cur)
        self.root = enc.formula(f, self.st)
        enc.add([self.root])
        self.param_names = sorted(set().union(*(s.params for s in sy)))
        for p in self.param_names:
            enc.param(p)
        self.trivially_unsat = self.root == FALSE_LIT or any(len(c) == 0 for c in enc.clauses)
        self.solver = None if self.trivially_unsat else Solver(name="minisat22", bootstrap_with=enc.clauses)
        self.stats = {"vars": enc.nv, "clauses": len(enc.clauses), "calls": 0}

    def close(self) -> None:
        if self.solver is not None:
            self.solver.delete()
            self.solver = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def run(self, assumptions: Sequence[int] = ()) -> str:
        if self.trivially_unsat or self.solver is None:
            return UNSAT
        assumptions = [a for a in assumptions if a != TRUE_LIT]
        if FALSE_LIT in assumptions:
            return UNSAT
        self.stats["calls"] += 1
        if self.budget is None:
            res = self.solver.solve(assumptions=assumptions)
        elif self.budget <= 0:
            res = None
        else:
            self.solver.prop_budget(self.budget)
            res = self.solver.solve_limited(assumptions=assumptions)
        if res is None:
            return BUDGET
        return SAT if res else UNSAT

    def block(self, lits: Sequence[int]) -> None:
        clause = [-l for l in lits if l != TRUE_LIT]
        if FALSE_LIT in lits:
            return
        if not clause:
            self.trivially_unsat = True
            return
        self.solver.add_clause(clause)

    def add_clause(self, clause: Sequence[int]) -> None:
        if TRUE_LIT in clause:
            return
        clause = [l for l in clause if l != FALSE_LIT]
        if not clause:
            self.trivially_unsat = True
            return
        self.solver.add_clause(clause)

    # decoding
    def _truth(self) -> set:
        return {l for l in self.solver.get_model() if l > 0} | {TRUE_LIT}

    @staticmethod
    def _pick(onehot: dict, on: set) -> Value:
        for v, l in onehot.items():
            if (l > 0 and l in on) or (l < 0 and -l not in on):
                return v
        raise SolverError("one-hot encoding with no true value")

    @staticmethod
    def _lit_true(l: int, on: set) -> bool:
        return l in on if l > 0 else -l not in on

    def symbol_lits(self, symbol: str) -> list:
        """Decision literals describing ``symbol``'s value (``#v`` or a relation name)."""
        if symbol.startswith("#"):
            return list(self.st[("var", symbol[1:])].values())
        return list(self.st[("rel", symbol)].values())

    def symbol_value(self, symbol: str, on: set):
        if symbol.startswith("#"):
            return self._pick(self.st[("var", symbol[1:])], on)
        return frozenset(t for t, l in self.st[("rel", symbol)].items() if self._lit_true(l, on))

    def value_assumptions(self, symbol: str, value) -> list:
        if symbol.startswith("#"):
            enc = self.st[("var", symbol[1:])]
            return [enc.get(value, FALSE_LIT)]
        table = self.st[("rel", symbol)]
        if any(t not in table for t in value):
            return [FALSE_LIT]
        return [l if t in value else -l for t, l in table.items()]

    def state_lits(self) -> list:
        out = []
        for name, _ in self.schema.session_vars:
            out.extend(self.st[("var", name)].values())
        for rel in self.schema.relations:
            out.extend(self.st[("rel", rel.name)].values())
        return out

    def true_lits(self, lits: Sequence[int], on: set) -> list:
        return [l if self._lit_true(l, on) else -l for l in lits]

    def decode(self) -> Model:
        on = self._truth()
        vars_ = {n: self._pick(self.st[("var", n)], on) for n, _ in self.schema.session_vars}
        tables = {r.name: self.symbol_value(r.name, on) for r in self.schema.relations}
        state = State.of(tables, vars_)
        bindings = {p: self._pick(self.enc.params[p], on) for p in self.param_names}
        funcs = {}
        for fsig in self.schema.functions:
            if fsig.name in self.enc.funcs:
                funcs[fsig.name] = {a: self._pick(oh, on) for a, oh in self.enc.funcs[fsig.name].items()}
            else:
                funcs[fsig.name] = default_function_table(self.schema, self.scope, fsig.name)
        preds = {}
        for psig in self.schema.predicates:
            if psig.name in self.enc.preds:
                preds[psig.name] = {a: self._lit_true(l, on) for a, l in self.enc.preds[psig.name].items()}
            else:
                args = itertools.product(*(self.enc.carrier(s) for s in psig.args))
                preds[psig.name] = {a: False for a in args}
        return Model(state, bindings, E.Environment(funcs, preds))

    def decision_lits(self) -> list:
        """Literals determining a model's tracked part: state, parameters, tables."""
        lits = self.state_lits()
        for p in self.param_names:
            lits.extend(self.enc.params[p].values())
        for name in sorted(self.enc.funcs):
            for oh in self.enc.funcs[name].values():
                lits.extend(oh.values())
        for name in sorted(self.enc.preds):
            lits.extend(self.enc.preds[name].values())
        return lits

    def verify(self, m: Model) -> None:
        if not E.eval_formula(self.f, m.state, m.env, m.bindings):
            raise SolverError("decoded model does not satisfy the constraint")
        if check_instance(self.schema, m.state) or in_scope(self.schema, self.scope, m.state):
            raise SolverError("decoded model is not a valid in-scope state")
        cur = m.state
        for step in self.chain:
            cur = _apply_defs(step, cur, m.env, m.bindings)
            if check_instance(self.schema, cur) or in_scope(self.schema, self.scope, cur):
                raise SolverError("decoded model leads to an invalid intermediate state")
        for fsig in self.schema.functions:
            if fsig.injective and fsig.name in self.enc.funcs:
                outs = list(m.env.funcs[fsig.name].values())
                if len(set(outs)) != len(outs):
                    raise SolverError(f"function {fsig.name} is not injective in the decoded model")


def _apply_defs(step: ChainStep, state: State, env: E.Environment, bindings: dict) -> State:
    tables, vars_ = {}, {}
    for lhs, rhs in step.defs:
        if isinstance(lhs, E.Var):
            vars_[lhs.name] = E.eval_term(rhs, state, env, bindings)
        else:
            tables[lhs.name] = E.eval_relalg(rhs, state, env, bindings)
    return state.replace(tables, vars_)


def default_function_table(schema: Schema, scope: Scope, name: str) -> dict:
    """The canonical table for a function the constraint never mentions."""
    sig = schema.function(name)
    args = list(itertools.product(*(carrier(schema, scope, s) for s in sig.args)))
    res = carrier(schema, scope, sig.result)
    if not res:
        return {}
    return {a: res[i % len(res)] for i, a in enumerate(args)}


# --- canonical form ---------------------------------------------------------


def _minimize_predicates(p: Problem, m: Model) -> Model:
    preds = {k: dict(v) for k, v in m.env.preds.items()}
    for name in sorted(p.enc.preds):
        for a in sorted(preds[name], key=row_key):
            if preds[name][a]:
                preds[name][a] = False
                env = E.Environment(m.env.funcs, preds)
                if not E.eval_formula(p.f, m.state, env, m.bindings):
                    preds[name][a] = True
    return Model(m.state, m.bindings, E.Environment(m.env.funcs, preds))


def _shrink_tables(p: Problem, m: Model) -> Model:
    """Drop rows one at a time while the model stays a verified model."""
    state = m.state
    changed = True
    while changed:
        changed = False
        for rel in p.schema.relations:
            for row in sorted(state.table(rel.name), key=row_key):
                smaller = state.replace({rel.name: state.table(rel.name) - {row}})
                try:
                    p.verify(Model(smaller, m.bindings, m.env))
                except SolverError:
                    continue
                state = smaller
                changed = True
    return Model(state, m.bindings, m.env)


def _collect_anons(v, out: list) -> None:
    if isinstance(v, Anon):
        out.append(v)
    elif isinstance(v, tuple):
        for x in v:
            _collect_anons(x, out)


def canonicalize(m: Model, schema: Schema, scope: Scope, fixed: set = frozenset(), tracked_funcs=()) -> Model:
    """Rename anonymous constants so they appear in index order of first use."""
    seen: list = []
    for n, _ in schema.session_vars:
        _collect_anons(m.state.var(n), seen)
    for p in sorted(m.bindings):
        _collect_anons(m.bindings[p], seen)
    for r in schema.relations:
        for row in sorted(m.state.table(r.name), key=row_key):
            _collect_anons(row, seen)
    for fname in sorted(tracked_funcs):
        for a, v in sorted(m.env.funcs[fname].items(), key=lambda kv: row_key(kv[0])):
            _collect_anons(a, seen)
            _collect_anons(v, seen)
    mapping: dict = {a: a for a in fixed}
    used: dict = {}
    for a in fixed:
        used.setdefault(a.sort, set()).add(a.index)
    nxt: dict = {}

    def assign(a: Anon) -> None:
        if a in mapping:
            return
        i = nxt.get(a.sort, 0)
        while i in used.get(a.sort, set()):
            i += 1
        mapping[a] = Anon(a.sort, i)
        used.setdefault(a.sort, set()).add(i)
        nxt[a.sort] = i + 1

    for a in seen:
        assign(a)
    for s in schema.sorts:
        if not schema.is_int(s.name):
            for i in range(scope.size(s.name)):
                assign(Anon(s.name, i))

    def mv(v):
        if isinstance(v, Anon):
            return mapping.get(v, v)
        return v

    def mt(t):
        return tuple(mv(x) for x in t)

    state = State.of(
        {r.name: {mt(t) for t in m.state.table(r.name)} for r in schema.relations},
        {n: mv(m.state.var(n)) for n, _ in schema.session_vars},
    )
    bindings = {k: mv(v) for k, v in m.bindings.items()}
    funcs = {}
    for fname, table in m.env.funcs.items():
        if fname in tracked_funcs:
            funcs[fname] = {mt(a): mv(v) for a, v in table.items()}
        else:
            funcs[fname] = table
    preds = {pname: {mt(a): b for a, b in table.items()} for pname, table in m.env.preds.items()}
    return Model(state, bindings, E.Environment(funcs, preds))


# --- public API -------------------------------------------------------------


def _problem(f, schema, scope, chain=(), track_vars=(), track_rels=(), extra_nodes=()) -> Problem:
    return Problem(f, schema, scope, chain, track_vars, track_rels, extra_nodes)


def solve(f: E.Formula, schema: Schema, scope: Scope, chain: Sequence[ChainStep] = ()) -> SolveOutcome:
    """Find one canonical model of ``f`` within ``scope``.

    ``chain`` optionally lists definitions applied in order from the model's
    state; every intermediate state must then also be valid and in scope.
    """
    p = _problem(f, schema, scope, chain)
    try:
        res = p.run()
        if res != SAT:
            return SolveOutcome(res, None, dict(p.stats))
        m = _minimize_predicates(p, p.decode())
        p.verify(m)
        m = _shrink_tables(p, m)
        c = canonicalize(m, schema, p.scope, p.fixed, tuple(p.enc.funcs))
        p.verify(c)
        return SolveOutcome(SAT, c, dict(p.stats))
    finally:
        p.close()


def joint_sat(f1: E.Formula, f2: E.Formula, schema: Schema, scope: Scope, chain: Sequence[ChainStep] = ()) -> SolveOutcome:
    return solve(E.conj(f1, f2), schema, scope, chain)


def enumerate_models(
    f: E.Formula, schema: Schema, scope: Scope, limit: Optional[int] = None, track_all_vars: bool = True
) -> Iterator[Model]:
    """Distinct models of ``f`` in a fixed order, at most ``limit`` of them.

    Models differ on the tracked symbols: the constraint's footprint plus,
    by default, every session variable. Everything else keeps its default.
    """
    limit = scope.model_limit if limit is None else limit
    track = [n for n, _ in schema.session_vars] if track_all_vars else []
    p = _problem(f, schema, scope, track_vars=track)
    try:
        lits = p.decision_lits()
        n = 0
        while n < limit:
            res = p.run()
            if res == BUDGET:
                raise BudgetExhausted(dict(p.stats))
            if res == UNSAT:
                return
            on = p._truth()
            m = p.decode()
            p.verify(m)
            yield m
            n += 1
            p.block(p.true_lits(lits, on))
    finally:
        p.close()


def model_states(f: E.Formula, schema: Schema, scope: Scope, extra_nodes: Sequence = ()) -> set:
    """The set of in-scope states satisfying ``f`` for some bindings and tables."""
    p = _problem(
        f, schema, scope,
        track_vars=[n for n, _ in schema.session_vars],
        track_rels=[r.name for r in schema.relations],
        extra_nodes=extra_nodes,
    )
    try:
        lits = p.state_lits()
        out = set()
        while True:
            res = p.run()
            if res == BUDGET:
                raise BudgetExhausted(dict(p.stats))
            if res == UNSAT:
                return out
            on = p._truth()
            m = p.decode()
            p.verify(m)
            out.add(m.state)
            p.block(p.true_lits(lits, on))
    finally:
        p.close()


def _check_symbol(schema: Schema, symbol: str) -> None:
    if symbol.startswith("#"):
        schema.var_sort(symbol[1:])
    else:
        schema.relation(symbol)


def _track(symbol: str) -> tuple:
    return ([symbol[1:]], []) if symbol.startswith("#") else ([], [symbol])


def value_domain(f: E.Formula, symbol: str, schema: Schema, scope: Scope, extra_nodes: Sequence = ()) -> set:
    """All values (or table contents) ``symbol`` takes across the in-scope models of ``f``."""
    _check_symbol(schema, symbol)
    tv, tr = _track(symbol)
    p = _problem(f, schema, scope, track_vars=tv, track_rels=tr, extra_nodes=extra_nodes)
    try:
        lits = p.symbol_lits(symbol)
        out = set()
        while True:
            res = p.run()
            if res == BUDGET:
                raise BudgetExhausted(dict(p.stats))
            if res == UNSAT:
                return out
            on = p._truth()
            out.add(p.symbol_value(symbol, on))
            p.block(p.true_lits(lits, on))
    finally:
        p.close()


def state_symbols(schema: Schema) -> list:
    return [E.var_symbol(n) for n, _ in schema.session_vars] + [r.name for r in schema.relations]


def domains_differ(f1: E.Formula, f2: E.Formula, symbol: str, schema: Schema, scope: Scope) -> bool:
    """Whether ``symbol`` has different value domains under ``f1`` and ``f2``.

    Both domains are enumerated lazily and in alternation; each value found on
    one side is tested for membership on the other with solver assumptions,
    so a difference is usually detected after a handful of calls.
    """
    _check_symbol(schema, symbol)
    tv, tr = _track(symbol)
    ps = [_problem(g, schema, scope, track_vars=tv, track_rels=tr, extra_nodes=(f1, f2)) for g in (f1, f2)]
    try:
        seen = [set(), set()]
        done = [False, False]
        lits = [p.symbol_lits(symbol) for p in ps]

        def run(p, assumptions=()):
            res = p.run(assumptions)
            if res == BUDGET:
                raise BudgetExhausted(dict(p.stats))
            return res

        side = 0
        while not all(done):
            if done[side]:
                side = 1 - side
                continue
            p, other = ps[side], ps[1 - side]
            if run(p) == UNSAT:
                done[side] = True
                if not done[1 - side]:
                    # Every value of this side is known; the other side
                    # differs iff it has a model outside that set.
                    for v in seen[side]:
                        other.block(other.value_assumptions(symbol, v))
                    return run(other) == SAT
                return False
            on = p._truth()
            v = p.symbol_value(symbol, on)
            seen[side].add(v)
            p.block(p.true_lits(lits[side], on))
            if v not in seen[1 - side]:
                if run(other, other.value_assumptions(symbol, v)) == UNSAT:
                    return True
                seen[1 - side].add(v)
                other.block(other.value_assumptions(symbol, v))
            side = 1 - side
        return False
    finally:
        for p in ps:
            p.close()


def get_modified(f1: E.Formula, f2: E.Formula, schema: Schema, scope: Scope) -> frozenset:
    """Session variables and relations whose value domains differ between ``f1`` and ``f2``."""
    return frozenset(s for s in state_symbols(schema) if domains_differ(f1, f2, s, schema, scope))
