"""Concrete data model: sorts, values, schemas, database instances, states and scopes.

Everything here is an immutable value. Domains are finite carriers: a scope
contributes ``sort_size`` anonymous constants per uninterpreted sort, every
named constant of the input is added on top, and the integer sort ranges over
``[0, int_max]``.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union


class SchemaError(Exception):
    """Structural misuse of a schema: unknown names, bad indices, duplicates."""


# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True, order=True)
class Anon:
    """The ``index``-th anonymous constant of an uninterpreted sort."""

    sort: str
    index: int

    def __str__(self) -> str:
        return f"{self.sort}_{self.index}"


@dataclass(frozen=True, order=True)
class Const:
    """A named constant such as ``'s1'``; admissible in every uninterpreted sort."""

    label: str

    def __str__(self) -> str:
        return f"c_{self.label}"


@dataclass(frozen=True, order=True)
class IntVal:
    n: int

    def __str__(self) -> str:
        return str(self.n)


class _Null:
    _instance: Optional["_Null"] = None

    def __new__(cls) -> "_Null":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NULL"

    def __str__(self) -> str:
        return "null"

    def __reduce__(self):
        return (_Null, ())


NULL = _Null()

Value = Union[Anon, Const, IntVal, _Null]
Row = tuple  # tuple of Value


def value_key(v: Value) -> tuple:
    """Total order on values used for every deterministic iteration."""
    if isinstance(v, Anon):
        return (0, v.sort, v.index)
    if isinstance(v, Const):
        return (1, "", v.label)
    if isinstance(v, IntVal):
        return (2, "", v.n)
    return (3, "", 0)


def row_key(row: Sequence[Value]) -> tuple:
    return tuple(value_key(v) for v in row)


# ---------------------------------------------------------------------------
# schema


UNINTERPRETED = "value"
INTEGER = "int"


@dataclass(frozen=True)
class Sort:
    name: str
    kind: str = UNINTERPRETED

    def __post_init__(self) -> None:
        if self.kind not in (UNINTERPRETED, INTEGER):
            raise SchemaError(f"unknown sort kind {self.kind!r}")


@dataclass(frozen=True)
class ForeignKey:
    column: int  # 1-based, local
    target: str
    target_column: int  # 1-based


@dataclass(frozen=True)
class RelationSchema:
    name: str
    columns: tuple[tuple[str, str], ...]  # (column name, sort name)
    key: tuple[int, ...] = ()  # 1-based column indices
    foreign_keys: tuple[ForeignKey, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.columns)

    def sort_of(self, col: int) -> str:
        return self.columns[col - 1][1]


@dataclass(frozen=True)
class FunctionSig:
    name: str
    args: tuple[str, ...]
    result: str
    injective: bool = False


@dataclass(frozen=True)
class PredicateSig:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Schema:
    sorts: tuple[Sort, ...] = ()
    relations: tuple[RelationSchema, ...] = ()
    session_vars: tuple[tuple[str, str], ...] = ()
    functions: tuple[FunctionSig, ...] = ()
    predicates: tuple[PredicateSig, ...] = ()
    params: tuple[tuple[str, str], ...] = ()  # global parameter sorts

    def __post_init__(self) -> None:
        self._check()

    def _check(self) -> None:
        for kind, names in (
            ("sort", [s.name for s in self.sorts]),
            ("relation", [r.name for r in self.relations]),
            ("session variable", [n for n, _ in self.session_vars]),
            ("function", [f.name for f in self.functions]),
            ("predicate", [p.name for p in self.predicates]),
            ("parameter", [n for n, _ in self.params]),
        ):
            seen = set()
            for n in names:
                if n in seen:
                    raise SchemaError(f"duplicate {kind} {n!r}")
                seen.add(n)
        sorts = {s.name for s in self.sorts}

        def need_sort(s: str, where: str) -> None:
            if s not in sorts:
                raise SchemaError(f"undeclared sort {s!r} in {where}")

        for rel in self.relations:
            for _, s in rel.columns:
                need_sort(s, f"relation {rel.name}")
            for k in rel.key:
                if not 1 <= k <= rel.arity:
                    raise SchemaError(f"key column {k} out of range in {rel.name}")
        for rel in self.relations:
            for fk in rel.foreign_keys:
                if not 1 <= fk.column <= rel.arity:
                    raise SchemaError(f"foreign key column {fk.column} out of range in {rel.name}")
                target = self.relation(fk.target)
                if not 1 <= fk.target_column <= target.arity:
                    raise SchemaError(f"foreign key target column out of range in {rel.name}")
                if rel.sort_of(fk.column) != target.sort_of(fk.target_column):
                    raise SchemaError(f"foreign key {rel.name}.{fk.column} -> {fk.target} has mismatched sorts")
        for n, s in self.session_vars + self.params:
            need_sort(s, n)
        for f in self.functions:
            for s in f.args + (f.result,):
                need_sort(s, f"function {f.name}")
        for p in self.predicates:
            for s in p.args:
                need_sort(s, f"predicate {p.name}")

    def sort(self, name: str) -> Sort:
        for s in self.sorts:
            if s.name == name:
                return s
        raise SchemaError(f"undeclared sort {name!r}")

    def relation(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaError(f"undeclared relation {name!r}")

    def has_relation(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)

    def var_sort(self, name: str) -> str:
        for n, s in self.session_vars:
            if n == name:
                return s
        raise SchemaError(f"undeclared session variable #{name}")

    def function(self, name: str) -> FunctionSig:
        for f in self.functions:
            if f.name == name:
                return f
        raise SchemaError(f"undeclared function {name!r}")

    def predicate(self, name: str) -> PredicateSig:
        for p in self.predicates:
            if p.name == name:
                return p
        raise SchemaError(f"undeclared predicate {name!r}")

    def param_sort(self, name: str) -> str:
        """Sort of a parameter; instance suffixes (``$u_L@3``) are ignored."""
        base = name.split("@", 1)[0]
        for n, s in self.params:
            if n == base:
                return s
        raise SchemaError(f"undeclared parameter ${name}")

    def is_int(self, sort: str) -> bool:
        return self.sort(sort).kind == INTEGER

    def with_params(self, params: Sequence[tuple[str, str]]) -> "Schema":
        merged = list(self.params)
        known = dict(self.params)
        for n, s in params:
            if n in known:
                if known[n] != s:
                    raise SchemaError(f"parameter ${n} declared with sorts {known[n]} and {s}")
                continue
            known[n] = s
            merged.append((n, s))
        return Schema(self.sorts, self.relations, self.session_vars, self.functions, self.predicates, tuple(merged))


# ---------------------------------------------------------------------------
# instances and states


@dataclass(frozen=True)
class State:
    """A database instance together with a valuation of the session variables.

    ``tables`` and ``vars`` are stored as name-sorted tuples of pairs so that
    states hash and compare structurally.
    """

    tables: tuple[tuple[str, frozenset], ...] = ()
    vars: tuple[tuple[str, Value], ...] = ()

    @classmethod
    def of(cls, tables: Mapping[str, object] = (), vars: Mapping[str, Value] = ()) -> "State":
        t = {k: frozenset(tuple(r) for r in v) for k, v in dict(tables).items()}
        return cls(tuple(sorted(t.items())), tuple(sorted(dict(vars).items())))

    @classmethod
    def empty(cls, schema: Schema) -> "State":
        return cls.of({r.name: () for r in schema.relations}, {n: NULL for n, _ in schema.session_vars})

    def table(self, name: str) -> frozenset:
        for n, rows in self.tables:
            if n == name:
                return rows
        return frozenset()

    def var(self, name: str) -> Value:
        for n, v in self.vars:
            if n == name:
                return v
        return NULL

    def table_map(self) -> dict[str, frozenset]:
        return dict(self.tables)

    def var_map(self) -> dict[str, Value]:
        return dict(self.vars)

    def replace(self, tables: Mapping[str, object] = (), vars: Mapping[str, Value] = ()) -> "State":
        t = self.table_map()
        t.update({k: frozenset(tuple(r) for r in v) for k, v in dict(tables).items()})
        v = self.var_map()
        v.update(dict(vars))
        return State.of(t, v)

    def complete(self, schema: Schema) -> "State":
        """Fill in empty tables and null variables for every undeclared slot."""
        t = {r.name: self.table(r.name) for r in schema.relations}
        v = {n: self.var(n) for n, _ in schema.session_vars}
        return State.of(t, v)


@dataclass(frozen=True)
class Violation:
    relation: str
    row: Optional[tuple]
    constraint: str
    message: str

    def __str__(self) -> str:
        return self.message


def _fmt_row(row: Sequence[Value]) -> str:
    return "(" + ", ".join(str(v) for v in row) + ")"


def value_fits(schema: Schema, sort: str, v: Value) -> bool:
    if v is NULL:
        return False
    if schema.is_int(sort):
        return isinstance(v, IntVal)
    if isinstance(v, Anon):
        return v.sort == sort
    return isinstance(v, Const)


def check_instance(schema: Schema, db: State) -> list[Violation]:
    """All arity, sort, null, primary-key and foreign-key violations of ``db``.

    Raises ``SchemaError`` when ``db`` mentions an undeclared relation, which is
    a structural problem rather than a constraint violation.
    """
    out: list[Violation] = []
    for name, _ in db.tables:
        if not schema.has_relation(name):
            raise SchemaError(f"undeclared relation {name!r}")
    for rel in schema.relations:
        rows = sorted(db.table(rel.name), key=row_key)
        for row in rows:
            if len(row) != rel.arity:
                out.append(Violation(rel.name, row, "arity", f"{rel.name}: row {_fmt_row(row)} has arity {len(row)}, expected {rel.arity}"))
                continue
            for i, v in enumerate(row, 1):
                if not value_fits(schema, rel.sort_of(i), v):
                    col = rel.columns[i - 1][0]
                    out.append(Violation(rel.name, row, f"sort:{col}", f"{rel.name}.{col}: value {v} in {_fmt_row(row)} is not of sort {rel.sort_of(i)}"))
        good = [r for r in rows if len(r) == rel.arity]
        if rel.key:
            seen: dict[tuple, tuple] = {}
            for row in good:
                k = tuple(row[i - 1] for i in rel.key)
                if k in seen:
                    cols = ",".join(rel.columns[i - 1][0] for i in rel.key)
                    out.append(Violation(rel.name, row, f"key:{cols}", f"{rel.name}.{cols}: primary key violated by {_fmt_row(seen[k])} and {_fmt_row(row)}"))
                else:
                    seen[k] = row
        for fk in rel.foreign_keys:
            target = schema.relation(fk.target)
            present = {r[fk.target_column - 1] for r in db.table(fk.target) if len(r) == target.arity}
            col = rel.columns[fk.column - 1][0]
            tcol = target.columns[fk.target_column - 1][0]
            for row in good:
                if row[fk.column - 1] not in present:
                    out.append(Violation(rel.name, row, f"foreign:{col}", f"{rel.name}.{col}: {row[fk.column - 1]} in {_fmt_row(row)} does not appear in {fk.target}.{tcol}"))
    return out


# ---------------------------------------------------------------------------
# scopes and carriers


@dataclass(frozen=True)
class Scope:
    sort_size: int = 2
    max_rows: int = 2
    int_max: Optional[int] = None
    max_seq_len: int = 6
    model_limit: int = 1000
    budget: Optional[int] = None
    constants: tuple[str, ...] = ()
    sort_sizes: tuple[tuple[str, int], ...] = ()
    row_limits: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        for n in (self.sort_size, self.max_rows, self.model_limit):
            if n < 0:
                raise ValueError("scope bounds must be non-negative")
        if self.int_max is not None and self.int_max < 0:
            raise ValueError("int_max must be non-negative")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be at least 1")
        object.__setattr__(self, "constants", tuple(sorted(set(self.constants))))

    def size(self, sort: str) -> int:
        return dict(self.sort_sizes).get(sort, self.sort_size)

    def rows(self, relation: str) -> int:
        return dict(self.row_limits).get(relation, self.max_rows)

    def int_bound(self, schema: Schema) -> int:
        if self.int_max is not None:
            return self.int_max
        return max([self.rows(r.name) for r in schema.relations] or [0]) + 1

    def with_constants(self, labels) -> "Scope":
        return _replace(self, constants=tuple(self.constants) + tuple(labels))

    def replace(self, **kw) -> "Scope":
        return _replace(self, **kw)


def _replace(scope: Scope, **kw) -> Scope:
    return dataclasses.replace(scope, **kw)


def carrier(schema: Schema, scope: Scope, sort: str) -> list[Value]:
    """Non-null values of ``sort`` within scope, in canonical order."""
    if schema.is_int(sort):
        return [IntVal(i) for i in range(scope.int_bound(schema) + 1)]
    return [Anon(sort, i) for i in range(scope.size(sort))] + [Const(c) for c in scope.constants]


def candidate_rows(schema: Schema, scope: Scope, rel: RelationSchema) -> list[tuple]:
    return [tuple(r) for r in itertools.product(*(carrier(schema, scope, s) for _, s in rel.columns))]


def in_scope(schema: Schema, scope: Scope, state: State) -> list[str]:
    """Reasons why ``state`` lies outside ``scope`` (row bounds, integer range)."""
    problems = []
    bound = scope.int_bound(schema)
    for rel in schema.relations:
        rows = state.table(rel.name)
        if len(rows) > scope.rows(rel.name):
            problems.append(f"{rel.name} has {len(rows)} rows, scope allows {scope.rows(rel.name)}")
        for row in rows:
            for v in row:
                if isinstance(v, IntVal) and not 0 <= v.n <= bound:
                    problems.append(f"{rel.name}: integer {v.n} exceeds int_max {bound}")
    for name, sort in schema.session_vars:
        v = state.var(name)
        if v is not NULL and not value_fits(schema, sort, v):
            problems.append(f"#{name}: value {v} is not of sort {sort}")
        if isinstance(v, IntVal) and not 0 <= v.n <= bound:
            problems.append(f"#{name}: integer {v.n} exceeds int_max {bound}")
    return problems


def _tables_for(schema: Schema, scope: Scope, rel: RelationSchema) -> list[frozenset]:
    cands = candidate_rows(schema, scope, rel)
    out = []
    for k in range(min(scope.rows(rel.name), len(cands)) + 1):
        for combo in itertools.combinations(cands, k):
            if rel.key:
                keys = [tuple(r[i - 1] for i in rel.key) for r in combo]
                if len(set(keys)) != len(keys):
                    continue
            out.append(frozenset(combo))
    return out


def enumerate_states(schema: Schema, scope: Scope) -> Iterator[State]:
    """Every valid state within ``scope``, in a fixed order, without duplicates.

    This is plain brute force and serves as the independent oracle for the
    solver and the image computations; only use it on micro-scopes.
    """
    per_rel = [_tables_for(schema, scope, r) for r in schema.relations]
    per_var = [carrier(schema, scope, s) + [NULL] for _, s in schema.session_vars]
    names = [r.name for r in schema.relations]
    vnames = [n for n, _ in schema.session_vars]
    for tables in itertools.product(*per_rel):
        st = State.of(dict(zip(names, tables)))
        if check_instance(schema, st):
            continue
        for vals in itertools.product(*per_var):
            yield State.of(dict(zip(names, tables)), dict(zip(vnames, vals)))
