"""Command-line front end.

Exit codes: 0 success (sat, found), 1 unsat or exhausted, 2 usage or input
error, 3 solver budget exhausted.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional

from . import expr as E
from . import report as R
from . import solver as SV
from . import synth as Y
from .image import ImageError, pre_image
from .parser import SpecError, parse_formula, parse_spec, print_formula
from .relmodel import SchemaError, Scope

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


class InputError(Exception):
    pass


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from None
    try:
        spec = parse_spec(text)
    except SpecError as e:
        raise InputError(f"{path}:{e}") from None
    for t in spec.transducers:
        try:
            E.frame_close(t, spec.schema)
        except (E.FormulaError, SchemaError) as e:
            raise InputError(f"{path}: transducer {t.name}: {e}") from None
    return spec


def _scope(spec, args) -> Scope:
    base = spec.scope or Scope()
    kw = {}
    for flag, key in (("sort_size", "sort_size"), ("max_rows", "max_rows"), ("int_max", "int_max"),
                      ("max_seq_len", "max_seq_len"), ("model_limit", "model_limit"), ("budget", "budget")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    try:
        return base.replace(**kw)
    except ValueError as e:
        raise InputError(str(e)) from None


def _constraint(spec, text: str) -> E.Formula:
    if text in spec.constraints:
        return spec.constraints[text]
    try:
        return parse_formula(text, spec.schema)
    except SpecError as e:
        if text.isidentifier():
            raise InputError(f"unknown constraint {text}") from None
        raise InputError(f"constraint {text!r}: {e}") from None


def _write(args, payload: str) -> None:
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def cmd_check(args) -> int:
    spec = _load(args.spec)
    s = spec.schema
    print(f"{args.spec}: ok ({len(s.relations)} relations, {len(s.session_vars)} session variables, "
          f"{len(spec.transducers)} transducers, {len(spec.constraints)} constraints)")
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _load(args.spec)
    f = _constraint(spec, args.constraint)
    scope = _scope(spec, args)
    out = SV.solve(f, spec.schema, scope)
    print(out.status)
    if out.is_sat:
        print(R.model_text(out.model, spec.schema))
    if args.output:
        payload = {"status": out.status, "constraint": print_formula(f), "scope": R.scope_json(scope)}
        payload["model"] = R.model_json(out.model, spec.schema) if out.is_sat else None
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(R.dumps(payload))
    return {SV.SAT: EXIT_OK, SV.UNSAT: EXIT_NEGATIVE, SV.BUDGET: EXIT_BUDGET}[out.status]


def cmd_preimage(args) -> int:
    spec = _load(args.spec)
    try:
        t = spec.transducer(args.transducer)
    except KeyError:
        raise InputError(f"unknown transducer {args.transducer}") from None
    post = _constraint(spec, args.constraint)
    try:
        pre = pre_image(E.frame_close(t, spec.schema), post, spec.schema)
    except ImageError as e:
        raise InputError(str(e)) from None
    print(print_formula(pre))
    return EXIT_OK


def _finish(result, spec, scope, args, attack: bool) -> int:
    requests, validation, violation = [], None, None
    if result.status == Y.FOUND:
        requests = Y.extract_requests(result, spec.schema, scope)
        validation = Y.validate_result(result, spec.schema, scope)
        if attack:
            hops = Y.link_violations(requests, result.transducers)
            violation = hops[-1] if hops else None
    payload = R.synthesis_json(result, requests, spec.schema, scope, validation, violation)
    _write(args, R.dumps(payload))
    if result.status == Y.FOUND:
        names = ", ".join(r.transducer for r in requests) or "(empty sequence)"
        print(f"found: {names}; replay {'validated' if validation.ok else 'FAILED'}", file=sys.stderr)
        return EXIT_OK
    if result.status == Y.BUDGET:
        print("solver budget exhausted", file=sys.stderr)
        return EXIT_BUDGET
    st = result.stats
    print(f"exhausted: {st['pushes']} pushes, {st['pops']} pops, maximum depth {st['max_depth']}, "
          f"{st['depth_limited']} branches cut at max-seq-len {scope.max_seq_len}", file=sys.stderr)
    return EXIT_NEGATIVE


def cmd_synth(args) -> int:
    spec = _load(args.spec)
    s0 = _constraint(spec, args.s0)
    target = _constraint(spec, args.target)
    scope = _scope(spec, args)
    result = Y.call_seq_gen(list(spec.transducers), s0, target, spec.schema, scope)
    return _finish(result, spec, scope, args, attack=False)


def cmd_attack(args) -> int:
    spec = _load(args.spec)
    scope = _scope(spec, args)
    try:
        result = Y.detect_workflow_attack(list(spec.transducers), spec.schema, scope)
    except Y.SynthError as e:
        raise InputError(str(e)) from None
    return _finish(result, spec, scope, args, attack=True)


def _scope_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sort-size", type=int, help="anonymous constants per uninterpreted sort")
    p.add_argument("--max-rows", type=int, help="row bound for every relation")
    p.add_argument("--int-max", type=int, help="largest value of the integer sort")
    p.add_argument("--max-seq-len", type=int, help="longest call sequence to synthesize")
    p.add_argument("--model-limit", type=int, help="cap on enumerated models")
    p.add_argument("--budget", type=int, help="propagation budget per solver call")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relsynth", description="Constraint-driven synthesis of web call sequences.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and check a spec file")
    p.add_argument("spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="find a model of a named or inline constraint")
    p.add_argument("spec")
    p.add_argument("constraint")
    p.add_argument("--output", help="write a JSON report here")
    _scope_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("preimage", help="print the preimage of a constraint through a transducer")
    p.add_argument("spec")
    p.add_argument("transducer")
    p.add_argument("constraint")
    p.set_defaults(func=cmd_preimage)

    p = sub.add_parser("synth", help="synthesize a call sequence from S0 states to a target")
    p.add_argument("spec")
    p.add_argument("s0")
    p.add_argument("target")
    p.add_argument("--output", help="write the JSON report here instead of standard output")
    _scope_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("attack", help="search for a workflow attack")
    p.add_argument("spec")
    p.add_argument("--output", help="write the JSON report here instead of standard output")
    _scope_flags(p)
    p.set_defaults(func=cmd_attack)
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (E.FormulaError, SchemaError, E.EvalError, Y.SynthError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
