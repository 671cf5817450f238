"""Concrete forward execution of transducers on in-memory states.

This is the replay oracle for synthesized call sequences: it never consults
the solver, only the direct evaluator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import expr as E
from .relmodel import Anon, IntVal, Schema, Scope, State, check_instance, in_scope


class ConstraintViolation(Exception):
    """A step produced a state that breaks keys, sorts or scope bounds."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class LazyEnv(E.Environment):
    """An environment that invents fresh results for unseen function arguments.

    Fresh values are new anonymous constants (or integers) beyond those used in
    the table, so injective functions stay injective.
    """

    def __init__(self, base: Optional[E.Environment], schema: Schema):
        base = base or E.Environment()
        super().__init__({k: dict(v) for k, v in base.funcs.items()}, {k: dict(v) for k, v in base.preds.items()})
        self.schema = schema
        self.invented: list = []

    def _fresh(self, sort: str, table: dict):
        used = set(table.values())
        for args in table:
            used.update(args)
        if self.schema.is_int(sort):
            n = max([v.n for v in used if isinstance(v, IntVal)] + [-1]) + 1
            return IntVal(n)
        idx = max([v.index for v in used if isinstance(v, Anon) and v.sort == sort] + [-1]) + 1
        return Anon(sort, idx)

    def apply(self, fn: str, args: tuple):
        table = self.funcs.setdefault(fn, {})
        if args not in table:
            sig = self.schema.function(fn)
            table[args] = self._fresh(sig.result, table)
            self.invented.append((fn, args, table[args]))
        return table[args]

    def holds(self, pred: str, args: tuple) -> bool:
        return self.preds.setdefault(pred, {}).get(args, False)


def _successor(defs: dict, s: State, env, bindings) -> State:
    tables, vars_ = {}, {}
    for lhs, rhs in defs.items():
        if isinstance(lhs, E.Var):
            vars_[lhs.name] = E.eval_term(rhs, s, env, bindings)
        else:
            tables[lhs.name] = E.eval_relalg(rhs, s, env, bindings)
    return s.replace(tables, vars_)


def apply(t: E.Transducer, s: State, bindings: dict, env: Optional[E.Environment], schema: Schema, scope: Scope) -> frozenset:
    """The set (empty or singleton) of successor states of ``s`` under ``t``.

    Raises ``ConstraintViolation`` when the guard holds but the successor is
    not a valid in-scope state.
    """
    env = env if isinstance(env, LazyEnv) else LazyEnv(env, schema)
    missing = [p for p in t.param_names() if p not in bindings]
    if missing:
        raise E.EvalError(f"unbound parameters {', '.join('$' + p for p in missing)}")
    _, defs = E.split(t.formula)
    nxt = _successor(defs, s, env, bindings)
    if not E.eval_formula(t.formula, (s, nxt), env, bindings):
        return frozenset()
    problems = [str(v) for v in check_instance(schema, nxt)] + in_scope(schema, scope, nxt)
    if problems:
        raise ConstraintViolation(problems)
    return frozenset([nxt])


@dataclass
class RunResult:
    ok: bool
    state: Optional[State]
    failed_step: Optional[int] = None
    reason: str = ""
    snapshots: list = field(default_factory=list)
    env: Optional[E.Environment] = None


def run_sequence(steps: Sequence[tuple], initial: State, env: Optional[E.Environment], schema: Schema, scope: Scope) -> RunResult:
    """Apply ``(transducer, bindings)`` steps left to right from ``initial``.

    Stops at the first step whose guard fails or whose result is invalid.
    """
    env = LazyEnv(env, schema)
    cur = initial
    snaps = [initial]
    for i, (t, b) in enumerate(steps):
        try:
            out = apply(t, cur, b, env, schema, scope)
        except ConstraintViolation as e:
            return RunResult(False, cur, i, f"{t.name}: constraint violation: {e}", snaps, env)
        except E.EvalError as e:
            return RunResult(False, cur, i, f"{t.name}: {e}", snaps, env)
        if not out:
            return RunResult(False, cur, i, f"{t.name}: guard does not hold", snaps, env)
        (cur,) = out
        snaps.append(cur)
    return RunResult(True, cur, None, "", snaps, env)


@dataclass
class ValidationReport:
    ok: bool
    failed_step: Optional[int]
    reason: str
    snapshots: list


def validate(requests: Sequence, transducers: Sequence[E.Transducer], initial: State, env: Optional[E.Environment],
             target: E.Formula, schema: Schema, scope: Scope) -> ValidationReport:
    """Replay HTTP requests against their transducers and check the target at the end.

    ``requests`` carry the ``transducer`` name and original-name ``params``.
    """
    by_name = {t.name: t for t in transducers}
    steps = []
    for r in requests:
        t = by_name.get(r.transducer)
        if t is None:
            return ValidationReport(False, len(steps), f"no transducer serves {r.url}", [initial])
        steps.append((E.frame_close(t, schema), dict(r.params)))
    run = run_sequence(steps, initial, env, schema, scope)
    if not run.ok:
        return ValidationReport(False, run.failed_step, run.reason, run.snapshots)
    try:
        reached = E.eval_formula(target, run.state, run.env, {})
    except E.EvalError as e:
        return ValidationReport(False, len(steps), f"target cannot be evaluated: {e}", run.snapshots)
    if not reached:
        return ValidationReport(False, len(steps), "final state does not satisfy the target", run.snapshots)
    return ValidationReport(True, None, "", run.snapshots)
