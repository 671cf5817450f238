"""Backward synthesis of HTTP call sequences.

Starting from a target constraint, the generator repeatedly picks a
transducer that could have led to the current constraint, regresses the
constraint through it with ``pre_image`` and pushes the result on a stack,
until the constraint at the top is jointly satisfiable with the initial
states. Dead ends pop the stack and try the next candidate.

The same search, with an extra filter on link sets, finds workflow attacks:
sequences in which some request is not reachable by following the links of
the page before it.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import expr as E
from . import solver as SV
from .executor import ValidationReport, validate
from .image import pre_image
from .relmodel import NULL, Schema, Scope, carrier

FOUND, EXHAUSTED, BUDGET = "found", "exhausted", "budget"


class SynthError(Exception):
    pass


@dataclass
class SynthFrame:
    transducer: Optional[E.Transducer]  # parameter-renamed instance; None for the seed frame
    constraint: E.Formula
    instance_index: int = 0
    source: Optional[str] = None  # name of the transducer this instance came from
    tried: set = field(default_factory=set)


@dataclass
class SynthesisResult:
    status: str
    frames: list  # bottom (seed, target) first, top (earliest request) last
    witness: Optional[SV.Model]
    transducers: dict  # original transducers by name
    s0: E.Formula
    target: E.Formula
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HttpRequest:
    transducer: str
    url: str
    params: tuple  # of (name, value), declared order, original names
    defaulted: tuple = ()  # names of parameters no constraint determined


def instance_name(param: str, index: int) -> str:
    return f"{param}@{index}"


def base_name(param: str) -> str:
    return param.split("@", 1)[0]


def instantiate(t: E.Transducer, index: int) -> E.Transducer:
    """``t`` with every parameter suffixed by its position on the stack."""
    f = E.rename_params(t.formula, lambda p: instance_name(base_name(p), index))
    params = tuple((instance_name(n, index), s) for n, s in t.params)
    return dataclasses.replace(t, params=params, formula=f)


class _Search:
    def __init__(self, transducers, s0, target, schema: Schema, scope: Scope, attack: bool):
        self.schema = schema
        self.scope = scope
        self.s0 = s0
        self.target = target
        self.attack = attack
        self.originals = {t.name: t for t in transducers}
        self.closed = [E.frame_close(t, schema) for t in transducers]
        self.writes = {t.name: E.writes_set(t) for t in self.closed}
        self.modified_cache: dict = {}
        self.implied_cache: dict = {}
        self.stats = {"iterations": 0, "pushes": 0, "pops": 0, "depth_limited": 0, "max_depth": 0,
                      "candidates_rejected": 0}
        # Instance parameters resolve through their base names.
        self.ischema = schema.with_params([p for t in transducers for p in t.params])

    def modified(self, f: E.Formula) -> frozenset:
        if f not in self.modified_cache:
            self.modified_cache[f] = SV.get_modified(f, self.s0, self.ischema, self.scope)
        return self.modified_cache[f]

    def implied(self, t: E.Transducer) -> bool:
        """Whether the target alone forces ``t``'s guard (so ``t`` can close the session)."""
        if t.name not in self.implied_cache:
            g = E.guard_of(t)
            out = SV.solve(E.conj(self.target, E.Not(g)), self.ischema, self.scope)
            self.implied_cache[t.name] = out.is_unsat
        return self.implied_cache[t.name]

    def chain(self, stack) -> list:
        return [fr.transducer for fr in reversed(stack[1:])]

    def candidates(self, stack) -> list:
        top = stack[-1]
        on_stack = {fr.source for fr in stack[1:]}
        m1 = self.modified(top.constraint)
        m2 = self.modified(stack[-2].constraint if len(stack) >= 2 else E.TRUE)
        tiers = []
        if not self.attack and len(stack) == 1:
            tiers.append([t for t in self.closed if not self.writes[t.name] and self.implied(t)])
        tiers.append([t for t in self.closed if self.writes[t.name] & (m1 - m2)])
        tiers.append([t for t in self.closed if self.writes[t.name] & m1])
        if self.attack:
            tiers.append(list(self.closed))
        order, seen = [], set()
        for tier in tiers:
            for fresh in (True, False):
                for t in tier:
                    if t.name in seen or t.name in top.tried or ((t.name not in on_stack) != fresh):
                        continue
                    seen.add(t.name)
                    order.append(t)
        if self.attack and len(stack) == 2:
            later = stack[1].transducer
            order = [t for t in order if later.url not in (t.links or ())]
        return order

    def goal(self, stack) -> SV.SolveOutcome:
        if self.attack and len(stack) < 3:
            return SV.SolveOutcome(SV.UNSAT)
        chain = SV.chain_of(self.chain(stack))
        return SV.joint_sat(self.s0, stack[-1].constraint, self.ischema, self.scope, chain)

    def result(self, status, stack, witness=None) -> SynthesisResult:
        return SynthesisResult(status, list(stack), witness, self.originals, self.s0, self.target, dict(self.stats))

    def run(self) -> SynthesisResult:
        stack = [SynthFrame(None, self.target, 0)]
        try:
            while stack:
                self.stats["iterations"] += 1
                out = self.goal(stack)
                if out.status == SV.BUDGET:
                    return self.result(BUDGET, stack)
                if out.is_sat:
                    return self.result(FOUND, stack, out.model)
                depth = len(stack) - 1
                if depth >= self.scope.max_seq_len:
                    self.stats["depth_limited"] += 1
                    self._pop(stack)
                    continue
                pushed = False
                top = stack[-1]
                for cand in self.candidates(stack):
                    top.tried.add(cand.name)
                    inst = instantiate(cand, depth + 1)
                    pre = pre_image(inst, top.constraint, self.schema)
                    chain = SV.chain_of([inst] + self.chain(stack))
                    check = SV.solve(pre, self.ischema, self.scope, chain)
                    if check.is_unsat:
                        self.stats["candidates_rejected"] += 1
                        continue
                    stack.append(SynthFrame(inst, pre, depth + 1, cand.name))
                    self.stats["pushes"] += 1
                    self.stats["max_depth"] = max(self.stats["max_depth"], depth + 1)
                    pushed = True
                    break
                if not pushed:
                    self._pop(stack)
        except SV.BudgetExhausted:
            return self.result(BUDGET, stack)
        return self.result(EXHAUSTED, [])

    def _pop(self, stack) -> None:
        stack.pop()
        self.stats["pops"] += 1


def _check_inputs(transducers, s0, target, schema: Schema, scope: Optional[Scope]) -> None:
    if scope is None:
        raise SynthError("a scope is required")
    names = [t.name for t in transducers]
    if len(set(names)) != len(names):
        raise SynthError("transducer names must be unique")
    for f in (s0, target):
        if E.has_primes(f):
            raise SynthError("initial and target constraints must be prime-free")
        E.check_formula(f, schema)
    for t in transducers:
        E.frame_close(t, schema.with_params(t.params))


def call_seq_gen(transducers: Sequence[E.Transducer], s0: E.Formula, target: E.Formula, schema: Schema,
                 scope: Scope) -> SynthesisResult:
    """Search for a sequence of transducers leading from ``s0`` states to ``target``.

    Candidates are tried in the given order. At the first step, read-only
    transducers whose guard the target already implies are preferred, so a
    session ends on the page that exhibits the target state. After that,
    transducers writing a symbol whose value domain differs from the initial
    states are preferred, fresh ones before repeats.
    """
    _check_inputs(transducers, s0, target, schema, scope)
    return _Search(transducers, s0, target, schema, scope, attack=False).run()


def all_vars_null(schema: Schema) -> E.Formula:
    return E.conj(*(E.Eq(E.Var(n), E.Lit(NULL)) for n, _ in schema.session_vars))


def detect_workflow_attack(transducers: Sequence[E.Transducer], schema: Schema, scope: Scope) -> SynthesisResult:
    """Search for a bad-response-free sequence whose last hop is not a link of the previous page.

    Sessions start with every session variable null and an arbitrary database;
    any reachable state is acceptable.
    """
    for t in transducers:
        if t.links is None or not t.url:
            raise SynthError(f"transducer {t.name} has no link set or URL")
    s0 = all_vars_null(schema)
    _check_inputs(transducers, s0, E.TRUE, schema, scope)
    return _Search(transducers, s0, E.TRUE, schema, scope, attack=True).run()


def default_value(schema: Schema, scope: Scope, sort: str):
    vals = carrier(schema, scope, sort)
    return vals[0] if vals else NULL


def extract_requests(r: SynthesisResult, schema: Schema, scope: Scope) -> list:
    """The call sequence of a found result, earliest request first."""
    if r.status != FOUND:
        raise SynthError(f"no call sequence for a {r.status} result")
    out = []
    for fr in reversed(r.frames[1:]):
        orig = r.transducers[fr.source]
        params, defaulted = [], []
        for name, sort in orig.params:
            key = instance_name(name, fr.instance_index)
            if key in r.witness.bindings:
                params.append((name, r.witness.bindings[key]))
            else:
                params.append((name, default_value(schema, scope, sort)))
                defaulted.append(name)
        out.append(HttpRequest(orig.name, orig.url, tuple(params), tuple(defaulted)))
    return out


def validate_result(r: SynthesisResult, schema: Schema, scope: Scope) -> ValidationReport:
    """Replay the extracted requests from the witness state and check the target."""
    reqs = extract_requests(r, schema, scope)
    replay_scope = SV.problem_scope(scope, r.s0, r.target, *(f.constraint for f in r.frames))
    return validate(reqs, list(r.transducers.values()), r.witness.state, r.witness.env, r.target, schema, replay_scope)


def link_violations(requests: Sequence[HttpRequest], transducers: dict) -> list:
    """Hops ``(i, from_url, to_url)`` where request ``i+1`` is not linked from request ``i``."""
    out = []
    for i in range(len(requests) - 1):
        links = transducers[requests[i].transducer].links or ()
        if requests[i + 1].url not in links:
            out.append((i, requests[i].url, requests[i + 1].url))
    return out
