"""Preimages and postimages of state constraints through transducers.

``pre_image`` is the syntactic algorithm: prime the post-condition, replace
each primed symbol by its definition, and conjoin the guard. The two
enumerative functions compute the same sets by brute force over a micro-scope
and serve as oracles.
"""
from __future__ import annotations

import itertools
from typing import Iterator, Optional

from . import expr as E
from .relmodel import NULL, Schema, Scope, State, carrier, enumerate_states


class ImageError(Exception):
    pass


def _require_closed(t: E.Transducer, schema: Schema) -> tuple[list, dict]:
    guard, defs = E.split(t.formula)
    for name, _ in schema.session_vars:
        if E.Var(name, True) not in defs:
            raise ImageError(f"transducer {t.name} is not frame-closed (#{name})")
    for rel in schema.relations:
        if E.Rel(rel.name, True) not in defs:
            raise ImageError(f"transducer {t.name} is not frame-closed ({rel.name})")
    return guard, defs


def pre_image(t: E.Transducer, post: E.Formula, schema: Optional[Schema] = None) -> E.Formula:
    """guard(t) conjoined with post, primed, with t's definitions substituted.

    When ``schema`` is given, ``t`` is checked to be frame-closed against it.
    """
    if E.has_primes(post):
        raise ImageError("post-condition contains primed symbols")
    if schema is not None:
        guard, defs = _require_closed(t, schema)
    else:
        guard, defs = E.split(t.formula)
    body = E.substitute(E.prime(post), defs)
    return E.conj(*guard, body)


# --- enumerative oracles ----------------------------------------------------


def oracle_scope(scope: Scope, *nodes) -> Scope:
    """``scope`` extended with every named constant occurring in ``nodes``."""
    labels = set()
    for n in nodes:
        labels |= E.symbols(n).consts
    return scope.with_constants(sorted(labels))


def _param_sorts(schema: Schema, *nodes) -> list[tuple[str, str]]:
    names = set()
    for n in nodes:
        names |= E.symbols(n).params
    return [(p, schema.param_sort(p)) for p in sorted(names)]


def enumerate_bindings(schema: Schema, scope: Scope, params) -> Iterator[dict]:
    names = [p for p, _ in params]
    domains = [carrier(schema, scope, s) + [NULL] for _, s in params]
    for vals in itertools.product(*domains):
        yield dict(zip(names, vals))


def enumerate_envs(schema: Schema, scope: Scope, funcs=None, preds=None) -> Iterator[E.Environment]:
    """Every total interpretation of the named functions and predicates in scope."""
    funcs = sorted(funcs if funcs is not None else (f.name for f in schema.functions))
    preds = sorted(preds if preds is not None else (p.name for p in schema.predicates))
    f_choices = []
    for name in funcs:
        sig = schema.function(name)
        args = list(itertools.product(*(carrier(schema, scope, s) for s in sig.args)))
        res = carrier(schema, scope, sig.result)
        tables = []
        for outs in itertools.product(res, repeat=len(args)):
            if sig.injective and len(set(outs)) != len(outs):
                continue
            tables.append(dict(zip(args, outs)))
        f_choices.append(tables)
    p_choices = []
    for name in preds:
        sig = schema.predicate(name)
        args = list(itertools.product(*(carrier(schema, scope, s) for s in sig.args)))
        p_choices.append([dict(zip(args, bits)) for bits in itertools.product((False, True), repeat=len(args))])
    for ft in itertools.product(*f_choices):
        for pt in itertools.product(*p_choices):
            yield E.Environment(dict(zip(funcs, ft)), dict(zip(preds, pt)))


def successor(defs: dict, state: State, env: E.Environment, bindings: dict) -> State:
    """The unique next state fixed by a set of definitions (frames included)."""
    tables, vars_ = {}, {}
    for lhs, rhs in defs.items():
        if isinstance(lhs, E.Var):
            vars_[lhs.name] = E.eval_term(rhs, state, env, bindings)
        else:
            tables[lhs.name] = E.eval_relalg(rhs, state, env, bindings)
    return State.of(tables, vars_)


def pre_image_oracle(t: E.Transducer, post: E.Formula, schema: Schema, scope: Scope) -> set:
    """Brute-force ``{s | some s' in T(s) satisfies post}`` over the scope.

    ``s'`` is the state fixed by the definitions; it is not itself required to
    respect row bounds or keys, matching the purely logical preimage.
    """
    _, defs = _require_closed(t, schema)
    scope = oracle_scope(scope, t.formula, post)
    syms = E.symbols(t.formula), E.symbols(post)
    funcs = syms[0].funcs | syms[1].funcs
    preds = syms[0].preds | syms[1].preds
    envs = list(enumerate_envs(schema, scope, funcs, preds))
    binds = list(enumerate_bindings(schema, scope, _param_sorts(schema, t.formula, post)))
    out = set()
    for s in enumerate_states(schema, scope):
        done = False
        for env in envs:
            for b in binds:
                nxt = successor(defs, s, env, b)
                if E.eval_formula(t.formula, (s, nxt), env, b) and E.eval_formula(post, nxt, env, b):
                    out.add(s)
                    done = True
                    break
            if done:
                break
    return out


def formula_states(f: E.Formula, schema: Schema, scope: Scope) -> set:
    """Brute-force set of in-scope states satisfying ``f`` for some bindings and tables."""
    scope = oracle_scope(scope, f)
    sy = E.symbols(f)
    envs = list(enumerate_envs(schema, scope, sy.funcs, sy.preds))
    binds = list(enumerate_bindings(schema, scope, _param_sorts(schema, f)))
    return {
        s for s in enumerate_states(schema, scope)
        if any(E.eval_formula(f, s, env, b) for env in envs for b in binds)
    }


def post_image_enum(t: E.Transducer, pre: E.Formula, schema: Schema, scope: Scope) -> set:
    """Brute-force ``{s' | s satisfies pre and s' in T(s)}``; successors must lie in scope."""
    from .relmodel import check_instance, in_scope

    _, defs = _require_closed(t, schema)
    scope = oracle_scope(scope, t.formula, pre)
    syms = E.symbols(t.formula), E.symbols(pre)
    envs = list(enumerate_envs(schema, scope, syms[0].funcs | syms[1].funcs, syms[0].preds | syms[1].preds))
    binds = list(enumerate_bindings(schema, scope, _param_sorts(schema, t.formula, pre)))
    out = set()
    for s in enumerate_states(schema, scope):
        for env in envs:
            for b in binds:
                if not E.eval_formula(pre, s, env, b):
                    continue
                nxt = successor(defs, s, env, b)
                if not E.eval_formula(t.formula, (s, nxt), env, b):
                    continue
                if check_instance(schema, nxt) or in_scope(schema, scope, nxt):
                    continue
                out.add(nxt)
    return out
