"""JSON rendering of models, synthesis results and attack results.

Field order is fixed and every collection is sorted, so reports are
byte-identical across runs. Values render as ``null``, ``"c_<label>"`` for
named constants, ``"<sort>_<n>"`` for anonymous constants and plain numbers
for integers.
"""
from __future__ import annotations

import json
from typing import Optional

from . import expr as E
from .parser import print_formula
from .relmodel import NULL, Anon, Const, IntVal, Schema, State, row_key


def value_json(v):
    if v is NULL:
        return None
    if isinstance(v, IntVal):
        return v.n
    if isinstance(v, (Anon, Const)):
        return str(v)
    if isinstance(v, bool):
        return v
    raise TypeError(v)


def value_text(v) -> str:
    return "null" if v is NULL else str(v)


def state_json(state: State, schema: Schema) -> dict:
    return {
        "vars": {E.var_symbol(n): value_json(state.var(n)) for n, _ in schema.session_vars},
        "tables": {
            r.name: [[value_json(v) for v in row] for row in sorted(state.table(r.name), key=row_key)]
            for r in schema.relations
        },
    }


def model_json(m, schema: Schema) -> dict:
    return {
        "state": state_json(m.state, schema),
        "bindings": [{"name": "$" + k, "value": value_json(v)} for k, v in sorted(m.bindings.items())],
        "functions": {
            name: [{"args": [value_json(a) for a in args], "value": value_json(v)}
                   for args, v in sorted(table.items(), key=lambda kv: row_key(kv[0]))]
            for name, table in sorted(m.env.funcs.items())
        },
        "predicates": {
            name: [{"args": [value_json(a) for a in args], "value": bool(v)}
                   for args, v in sorted(table.items(), key=lambda kv: row_key(kv[0]))]
            for name, table in sorted(m.env.preds.items())
        },
    }


def scope_json(scope) -> dict:
    return {
        "sortSize": scope.sort_size,
        "maxRows": scope.max_rows,
        "intMax": scope.int_max,
        "maxSeqLen": scope.max_seq_len,
        "modelLimit": scope.model_limit,
        "budget": scope.budget,
    }


def model_text(m, schema: Schema) -> str:
    lines = []
    for n, _ in schema.session_vars:
        lines.append(f"  #{n} = {value_text(m.state.var(n))}")
    for r in schema.relations:
        rows = sorted(m.state.table(r.name), key=row_key)
        body = ", ".join("(" + ", ".join(value_text(v) for v in row) + ")" for row in rows)
        lines.append(f"  {r.name} = {{{body}}}")
    for k, v in sorted(m.bindings.items()):
        lines.append(f"  ${k} = {value_text(v)}")
    for name, table in sorted(m.env.funcs.items()):
        items = sorted(table.items(), key=lambda kv: row_key(kv[0]))
        lines.append(f"  {name}: " + ", ".join(f"{','.join(value_text(a) for a in args)} -> {value_text(v)}" for args, v in items))
    for name, table in sorted(m.env.preds.items()):
        true = [args for args, b in sorted(table.items(), key=lambda kv: row_key(kv[0])) if b]
        lines.append(f"  {name}: true on " + (", ".join(",".join(value_text(a) for a in args) for args in true) or "nothing"))
    return "\n".join(lines)


def request_json(r) -> dict:
    return {
        "transducer": r.transducer,
        "url": r.url,
        "params": [{"name": "$" + n, "value": value_json(v)} for n, v in r.params],
        "defaulted": ["$" + n for n in r.defaulted],
    }


def synthesis_json(result, requests, schema: Schema, scope, validation=None, violation: Optional[tuple] = None) -> dict:
    frames = result.frames
    steps = []
    if frames:
        ordered = list(reversed(frames))
        for i, fr in enumerate(ordered):
            steps.append({
                "beforeStep": i,
                "transducer": fr.source,
                "constraint": print_formula(fr.constraint),
            })
    out = {
        "status": result.status,
        "sequence": [request_json(r) for r in requests],
        "witness": model_json(result.witness, schema) if result.witness is not None else None,
        "perStepConstraints": steps,
        "replayValidated": bool(validation.ok) if validation is not None else False,
    }
    if validation is not None and not validation.ok:
        out["replayFailure"] = {"step": validation.failed_step, "reason": validation.reason}
    if violation is not None:
        hop, src, dst = violation
        out["violation"] = {"hop": hop, "fromUrl": src, "toUrl": dst}
    out["search"] = dict(result.stats)
    out["scope"] = scope_json(scope)
    return out


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
