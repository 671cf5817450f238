"""Text syntax for spec files and a canonical pretty-printer.

A spec file declares the schema, the transducers, named constraints and an
optional default scope::

    sort varchar;
    sort int : integer;
    relation S(sid: int, sname: varchar) key(1);
    var #u : varchar;
    transducer Insertsession "Insertsession.php" ($s_I: varchar) {
      S' = S + {(|S|+1, $s_I)}
    }
    constraint init = #u = null && S = {};

``print_spec`` emits text that parses back to an equal ``SpecFile``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import expr as E
from .relmodel import (
    INTEGER,
    NULL,
    Anon,
    Const,
    ForeignKey,
    FunctionSig,
    IntVal,
    PredicateSig,
    RelationSchema,
    Schema,
    SchemaError,
    Scope,
    Sort,
)


class SpecError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


class LexError(SpecError):
    pass


class SyntaxError_(SpecError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.expected = frozenset(expected)
        if self.expected:
            message = f"{message}; expected one of: {', '.join(sorted(self.expected))}"
        super().__init__(message, line, col)


class UnresolvedSymbol(SpecError):
    def __init__(self, name: str, line: int, col: int):
        self.name = name
        super().__init__(f"unresolved symbol {name}", line, col)


class DuplicateDeclaration(SpecError):
    def __init__(self, name: str, line: int, col: int):
        self.name = name
        super().__init__(f"duplicate declaration of {name}", line, col)


@dataclass
class SpecFile:
    schema: Schema
    transducers: tuple = ()
    constraints: dict = field(default_factory=dict)
    scope: Optional[Scope] = None

    def transducer(self, name: str) -> E.Transducer:
        for t in self.transducers:
            if t.name == name:
                return t
        raise KeyError(name)

    def constants(self) -> tuple:
        labels = set()
        for t in self.transducers:
            labels |= E.symbols(t.formula).consts
        for f in self.constraints.values():
            labels |= E.symbols(f).consts
        return tuple(sorted(labels))


# --- lexer ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<const>'[^'\n]*')
  | (?P<var>\#[A-Za-z_][A-Za-z0-9_]*'?)
  | (?P<param>\$[A-Za-z_][A-Za-z0-9_]*(?:@[0-9]+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*'?)
  | (?P<int>[0-9]+)
  | (?P<op>&&|\|\||!=|->|[!=()\[\]{},;:|+\-.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise LexError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            out.append(Token(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


KEYWORDS = {
    "sort", "integer", "relation", "key", "ref", "var", "function", "injective", "predicate",
    "param", "transducer", "links", "constraint", "scope", "true", "false", "sat", "sel",
    "proj", "null", "in", "x",
}
SCOPE_KEYS = ("sort_size", "max_rows", "int_max", "max_seq_len", "model_limit", "budget")


# --- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.sorts: dict[str, Sort] = {}
        self.rels: dict[str, RelationSchema] = {}
        self.vars: dict[str, str] = {}
        self.funcs: dict[str, FunctionSig] = {}
        self.preds: dict[str, PredicateSig] = {}
        self.params: dict[str, str] = {}
        self.transducers: list[E.Transducer] = []
        self.constraints: dict[str, E.Formula] = {}
        self.scope: Optional[Scope] = None
        self.furthest: Optional[SyntaxError_] = None

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def fail(self, expected, tok: Optional[Token] = None) -> SyntaxError_:
        tok = tok or self.tok
        what = "end of input" if tok.kind == "eof" else repr(tok.text)
        err = SyntaxError_(f"unexpected {what}", tok.line, tok.col, expected)
        if self.furthest is None or (err.line, err.col) > (self.furthest.line, self.furthest.col):
            self.furthest = err
        elif (err.line, err.col) == (self.furthest.line, self.furthest.col):
            self.furthest = SyntaxError_(f"unexpected {what}", tok.line, tok.col, self.furthest.expected | err.expected)
        return self.furthest

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("op", "ident")

    def eat(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail([repr(text)])
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def kind(self, kind: str, label: Optional[str] = None) -> Token:
        t = self.tok
        if t.kind != kind or (kind == "ident" and t.text in KEYWORDS):
            raise self.fail([label or kind])
        self.i += 1
        return t

    def integer(self) -> int:
        return int(self.kind("int", "integer").text)

    def attempt(self, *alts: Callable):
        start = self.i
        last = None
        for alt in alts:
            try:
                return alt()
            except SyntaxError_ as e:
                last = e
                self.i = start
        raise self.furthest or last

    # declarations
    def spec(self) -> SpecFile:
        starters = ["'sort'", "'relation'", "'var'", "'function'", "'predicate'", "'param'",
                    "'transducer'", "'constraint'", "'scope'"]
        if self.tok.kind == "eof":
            raise self.fail(starters)
        while self.tok.kind != "eof":
            word = self.tok.text if self.tok.kind == "ident" else None
            handler = {
                "sort": self.decl_sort, "relation": self.decl_relation, "var": self.decl_var,
                "function": self.decl_function, "predicate": self.decl_predicate, "param": self.decl_param,
                "transducer": self.decl_transducer, "constraint": self.decl_constraint, "scope": self.decl_scope,
            }.get(word)
            if handler is None:
                raise self.fail(starters)
            handler()
        return SpecFile(self.schema(), tuple(self.transducers), dict(self.constraints), self.scope)

    def schema(self) -> Schema:
        return Schema(
            tuple(self.sorts.values()), tuple(self.rels.values()), tuple(self.vars.items()),
            tuple(self.funcs.values()), tuple(self.preds.values()), tuple(self.params.items()),
        )

    def fresh(self, table: dict, tok: Token, name: str) -> None:
        if name in table:
            raise DuplicateDeclaration(name, tok.line, tok.col)

    def sort_ref(self) -> str:
        t = self.kind("ident", "sort name")
        if t.text not in self.sorts:
            raise UnresolvedSymbol(t.text, t.line, t.col)
        return t.text

    def decl_sort(self) -> None:
        self.eat("sort")
        t = self.kind("ident", "sort name")
        self.fresh(self.sorts, t, t.text)
        kind = "value"
        if self.accept(":"):
            self.eat("integer")
            kind = INTEGER
        self.eat(";")
        self.sorts[t.text] = Sort(t.text, kind)

    def decl_relation(self) -> None:
        self.eat("relation")
        t = self.kind("ident", "relation name")
        self.fresh(self.rels, t, t.text)
        self.eat("(")
        cols = []
        while True:
            c = self.kind("ident", "column name").text
            self.eat(":")
            cols.append((c, self.sort_ref()))
            if not self.accept(","):
                break
        self.eat(")")
        key: tuple = ()
        fks = []
        if self.accept("key"):
            self.eat("(")
            ks = [self.integer()]
            while self.accept(","):
                ks.append(self.integer())
            self.eat(")")
            key = tuple(ks)
        while self.accept("ref"):
            self.eat("(")
            col = self.integer()
            self.eat("->")
            tt = self.kind("ident", "relation name")
            if tt.text not in self.rels and tt.text != t.text:
                raise UnresolvedSymbol(tt.text, tt.line, tt.col)
            self.eat(".")
            tc = self.integer()
            self.eat(")")
            fks.append(ForeignKey(col, tt.text, tc))
        self.eat(";")
        rel = RelationSchema(t.text, tuple(cols), key, tuple(fks))
        self.rels[t.text] = rel
        try:
            self.schema()
        except SchemaError as e:
            del self.rels[t.text]
            raise SpecError(str(e), t.line, t.col) from None

    def decl_var(self) -> None:
        self.eat("var")
        t = self.kind("var", "#variable")
        name = t.text[1:]
        if name.endswith("'"):
            raise self.fail(["#variable"], t)
        self.fresh(self.vars, t, t.text)
        self.eat(":")
        self.vars[name] = self.sort_ref()
        self.eat(";")

    def decl_function(self) -> None:
        self.eat("function")
        t = self.kind("ident", "function name")
        self.fresh({**self.funcs, **self.preds, **self.rels}, t, t.text)
        args = self.sort_list()
        self.eat(":")
        res = self.sort_ref()
        inj = self.accept("injective")
        self.eat(";")
        self.funcs[t.text] = FunctionSig(t.text, args, res, inj)

    def decl_predicate(self) -> None:
        self.eat("predicate")
        t = self.kind("ident", "predicate name")
        self.fresh({**self.funcs, **self.preds, **self.rels}, t, t.text)
        args = self.sort_list()
        self.eat(";")
        self.preds[t.text] = PredicateSig(t.text, args)

    def sort_list(self) -> tuple:
        self.eat("(")
        args = []
        if not self.at(")"):
            args.append(self.sort_ref())
            while self.accept(","):
                args.append(self.sort_ref())
        self.eat(")")
        return tuple(args)

    def add_param(self, tok: Token, sort: str) -> None:
        name = tok.text[1:]
        if "@" in name:
            raise self.fail(["$parameter"], tok)
        known = self.params.get(name)
        if known is not None and known != sort:
            raise SpecError(f"parameter {tok.text} declared with sorts {known} and {sort}", tok.line, tok.col)
        self.params[name] = sort

    def decl_param(self) -> None:
        self.eat("param")
        t = self.kind("param", "$parameter")
        self.eat(":")
        s = self.sort_ref()
        self.eat(";")
        self.add_param(t, s)

    def decl_transducer(self) -> None:
        self.eat("transducer")
        t = self.kind("ident", "transducer name")
        if any(x.name == t.text for x in self.transducers):
            raise DuplicateDeclaration(t.text, t.line, t.col)
        url = self.kind("string", "URL string").text[1:-1]
        params = []
        if self.accept("("):
            if not self.at(")"):
                while True:
                    p = self.kind("param", "$parameter")
                    self.eat(":")
                    s = self.sort_ref()
                    if any(n == p.text[1:] for n, _ in params):
                        raise DuplicateDeclaration(p.text, p.line, p.col)
                    self.add_param(p, s)
                    params.append((p.text[1:], s))
                    if not self.accept(","):
                        break
            self.eat(")")
        links = None
        if self.accept("links"):
            self.eat("{")
            ls = []
            if not self.at("}"):
                ls.append(self.kind("string", "URL string").text[1:-1])
                while self.accept(","):
                    ls.append(self.kind("string", "URL string").text[1:-1])
            self.eat("}")
            links = tuple(ls)
        self.eat("{")
        start = self.tok
        f = self.formula()
        self.eat("}")
        self.check(f, start)
        used = E.symbols(f).params
        declared = {n for n, _ in params}
        for p in sorted(used - declared):
            raise SpecError(f"parameter ${p} is not declared by transducer {t.text}", start.line, start.col)
        self.transducers.append(E.Transducer(t.text, url, tuple(params), f, links))

    def decl_constraint(self) -> None:
        self.eat("constraint")
        t = self.kind("ident", "constraint name")
        self.fresh(self.constraints, t, t.text)
        self.eat("=")
        start = self.tok
        f = self.formula()
        self.eat(";")
        self.check(f, start)
        self.constraints[t.text] = f

    def decl_scope(self) -> None:
        st = self.eat("scope")
        if self.scope is not None:
            raise DuplicateDeclaration("scope", st.line, st.col)
        kw = {}
        while self.tok.kind == "ident" and self.tok.text in SCOPE_KEYS:
            k = self.tok.text
            self.i += 1
            kw[k] = self.integer()
        self.eat(";")
        try:
            self.scope = Scope(**kw)
        except ValueError as e:
            raise SpecError(str(e), st.line, st.col) from None

    def check(self, f, tok: Token) -> None:
        if any(isinstance(n, _Empty) for n in E.walk(f)):
            raise SpecError("cannot infer the arity of {}", tok.line, tok.col)
        try:
            E.check_formula(f, self.schema())
        except (E.FormulaError, SchemaError) as e:
            raise SpecError(str(e), tok.line, tok.col) from None

    # formulas
    def formula(self) -> E.Formula:
        parts = [self.conjunction()]
        while self.accept("||"):
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else E.Or(tuple(parts))

    def conjunction(self) -> E.Formula:
        parts = [self.unary()]
        while self.accept("&&"):
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else E.And(tuple(parts))

    def unary(self) -> E.Formula:
        if self.accept("!"):
            return E.Not(self.unary())
        return self.atom()

    def atom(self) -> E.Formula:
        t = self.tok
        if self.accept("true"):
            return E.TRUE
        if self.accept("false"):
            return E.FALSE
        if self.accept("sat"):
            self.eat("(")
            e = self.rel()
            self.eat(")")
            return E.Sat(e)
        if t.kind == "ident" and t.text in self.preds and self.peek().text == "(":
            self.i += 1
            return E.Pred(t.text, self.term_args())
        if t.text == "(" and t.kind == "op":
            return self.attempt(self.paren_formula, self.tuple_member, self.comparison)
        return self.comparison()

    def paren_formula(self) -> E.Formula:
        self.eat("(")
        f = self.formula()
        self.eat(")")
        return f

    def tuple_member(self) -> E.Formula:
        self.eat("(")
        terms = [self.term()]
        while self.accept(","):
            terms.append(self.term())
        self.eat(")")
        self.eat("in")
        return E.Member(tuple(terms), self.member_rel(len(terms)))

    def member_rel(self, n: int) -> E.RelExpr:
        e = self.rel()
        return E.Tuples((), n) if isinstance(e, _Empty) else e

    def rel_start(self) -> bool:
        t = self.tok
        if t.kind == "ident":
            return t.text.rstrip("'") in self.rels or t.text in ("sel", "proj")
        return t.text == "{" and t.kind == "op"

    def comparison(self) -> E.Formula:
        start = self.tok
        if self.rel_start() or start.text == "(":
            try_rel = self.at("(")
            if try_rel:
                return self.attempt(self.rel_comparison, self.term_comparison)
            return self.rel_comparison()
        return self.term_comparison()

    def rel_comparison(self) -> E.Formula:
        left = self.rel()
        if self.accept("="):
            right = self.rel()
            left, right = self.fix_empty_pair(left, right)
            return E.RelEq(left, right)
        if self.accept("!="):
            right = self.rel()
            left, right = self.fix_empty_pair(left, right)
            return E.Not(E.RelEq(left, right))
        raise self.fail(["'='", "'!='"])

    def term_comparison(self) -> E.Formula:
        left = self.term()
        if self.accept("="):
            return E.Eq(left, self.term())
        if self.accept("!="):
            return E.Not(E.Eq(left, self.term()))
        if self.accept("in"):
            return E.Member((left,), self.member_rel(1))
        raise self.fail(["'='", "'!='", "'in'"])

    # terms
    def term_args(self) -> tuple:
        self.eat("(")
        args = []
        if not self.at(")"):
            args.append(self.term())
            while self.accept(","):
                args.append(self.term())
        self.eat(")")
        return tuple(args)

    def term(self) -> E.Term:
        t = self.tok
        if self.accept("null"):
            return E.Lit(NULL)
        if t.kind == "const":
            self.i += 1
            return E.Lit(Const(t.text[1:-1]))
        if t.kind == "int":
            self.i += 1
            return E.Lit(IntVal(int(t.text)))
        if t.kind == "var":
            self.i += 1
            name = t.text[1:]
            primed = name.endswith("'")
            name = name.rstrip("'")
            if name not in self.vars:
                raise UnresolvedSymbol("#" + name, t.line, t.col)
            return E.Var(name, primed)
        if t.kind == "param":
            self.i += 1
            name = t.text[1:]
            if name.split("@", 1)[0] not in self.params:
                raise UnresolvedSymbol(t.text, t.line, t.col)
            return E.Param(name)
        if t.kind == "ident" and t.text not in KEYWORDS:
            if self.peek().text == "(":
                if t.text not in self.funcs:
                    raise UnresolvedSymbol(t.text, t.line, t.col)
                self.i += 1
                return E.App(t.text, self.term_args())
            if t.text.rstrip("'") in self.rels:
                raise self.fail(["term"])
            raise UnresolvedSymbol(t.text, t.line, t.col)
        if self.accept("|"):
            e = self.rel()
            self.eat("|")
            off = 0
            if self.accept("+"):
                off = self.integer()
            return E.Card(e, off)
        if self.accept("("):
            x = self.term()
            self.eat(")")
            return x
        raise self.fail(["term"])

    # relational algebra
    def rel(self) -> E.RelExpr:
        left = self.rel_product()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            right = self.rel_product()
            left, right = self.fix_empty_pair(left, right)
            left = E.Union_(left, right) if op == "+" else E.Diff(left, right)
        return left

    def rel_product(self) -> E.RelExpr:
        left = self.rel_atom()
        while self.at("x"):
            self.i += 1
            left = E.Product(left, self.rel_atom())
        return left

    def rel_atom(self) -> E.RelExpr:
        t = self.tok
        if self.accept("sel"):
            self.eat("[")
            col = self.integer()
            self.eat("=")
            if self.tok.kind == "int":
                other = self.integer()
                self.eat("]")
                return E.SelectCols(self.rel_arg(), col, other)
            term = self.term()
            self.eat("]")
            return E.SelectEq(self.rel_arg(), col, term)
        if self.accept("proj"):
            self.eat("[")
            cols = [self.integer()]
            while self.accept(","):
                cols.append(self.integer())
            self.eat("]")
            return E.Project(self.rel_arg(), tuple(cols))
        if self.accept("{"):
            rows = []
            if not self.at("}"):
                rows.append(self.row())
                while self.accept(","):
                    rows.append(self.row())
            self.eat("}")
            if not rows:
                if self.accept(":"):
                    return E.Tuples((), self.integer())
                return _Empty()
            ar = len(rows[0])
            for r in rows:
                if len(r) != ar:
                    raise SpecError("literal rows of different lengths", t.line, t.col)
            return E.Tuples(tuple(rows), ar)
        if t.kind == "ident" and t.text not in KEYWORDS:
            name = t.text.rstrip("'")
            if name not in self.rels:
                raise UnresolvedSymbol(name, t.line, t.col)
            self.i += 1
            return E.Rel(name, t.text.endswith("'"))
        if self.accept("("):
            e = self.rel()
            self.eat(")")
            return e
        raise self.fail(["relation"])

    def rel_arg(self) -> E.RelExpr:
        self.eat("(")
        e = self.rel()
        self.eat(")")
        return e

    def row(self) -> tuple:
        self.eat("(")
        terms = [self.term()]
        while self.accept(","):
            terms.append(self.term())
        self.eat(")")
        return tuple(terms)

    def fix_empty_pair(self, a, b):
        sch = self.schema()
        if isinstance(a, _Empty) and isinstance(b, _Empty):
            raise SpecError("cannot infer the arity of {}", self.tok.line, self.tok.col)
        try:
            if isinstance(a, _Empty):
                a = E.Tuples((), E.arity(_resolve_empty(b), sch))
            if isinstance(b, _Empty):
                b = E.Tuples((), E.arity(_resolve_empty(a), sch))
        except (E.FormulaError, SchemaError) as e:
            raise SpecError(str(e), self.tok.line, self.tok.col) from None
        return a, b


@dataclass(frozen=True)
class _Empty(E.Node):
    """Placeholder for ``{}`` until its arity is known from context."""


def _resolve_empty(e):
    if any(isinstance(n, _Empty) for n in E.walk(e)):
        raise E.FormulaError("cannot infer the arity of {}")
    return e


def parse_spec(text: str) -> SpecFile:
    """Parse a spec file; raises a ``SpecError`` subclass with a line/column."""
    p = _Parser(text)
    return p.spec()


def parse_formula(text: str, schema: Schema) -> E.Formula:
    """Parse a single formula against an existing schema."""
    p = _Parser(text)
    p.sorts = {s.name: s for s in schema.sorts}
    p.rels = {r.name: r for r in schema.relations}
    p.vars = dict(schema.session_vars)
    p.funcs = {f.name: f for f in schema.functions}
    p.preds = {x.name: x for x in schema.predicates}
    p.params = dict(schema.params)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.fail(["'&&'", "'||'", "end of input"])
    p.check(f, p.toks[0])
    return f


# --- printer ----------------------------------------------------------------


def print_value(v) -> str:
    if v is NULL:
        return "null"
    if isinstance(v, Const):
        return f"'{v.label}'"
    if isinstance(v, IntVal):
        return str(v.n)
    if isinstance(v, Anon):
        raise ValueError(f"anonymous constant {v} has no surface syntax")
    raise TypeError(v)


def print_term(t: E.Term) -> str:
    if isinstance(t, E.Lit):
        return print_value(t.value)
    if isinstance(t, E.Var):
        return "#" + t.name + ("'" if t.primed else "")
    if isinstance(t, E.Param):
        return "$" + t.name
    if isinstance(t, E.App):
        return f"{t.fn}({', '.join(print_term(a) for a in t.args)})"
    if isinstance(t, E.Card):
        s = f"|{print_rel(t.expr)}|"
        return s + (f"+{t.offset}" if t.offset else "")
    raise TypeError(t)


def _rel_prec(e) -> int:
    if isinstance(e, (E.Union_, E.Diff)):
        return 1
    if isinstance(e, E.Product):
        return 2
    return 3


def _rel_at(e, prec: int, arity_known: bool = False) -> str:
    s = print_rel(e, arity_known)
    return f"({s})" if _rel_prec(e) < prec else s


def _is_empty(e) -> bool:
    return isinstance(e, E.Tuples) and not e.rows


def print_rel(e: E.RelExpr, arity_known: bool = False) -> str:
    """``arity_known`` marks contexts where the parser infers the arity of a bare ``{}``."""
    if isinstance(e, E.Rel):
        return e.name + ("'" if e.primed else "")
    if isinstance(e, E.Tuples):
        if not e.rows:
            return "{}" if arity_known else f"{{}}:{e.arity}"
        return "{" + ", ".join("(" + ", ".join(print_term(x) for x in r) + ")" for r in e.rows) + "}"
    if isinstance(e, E.SelectEq):
        rhs = f"({print_term(e.term)})" if isinstance(e.term, E.Lit) and isinstance(e.term.value, IntVal) else print_term(e.term)
        return f"sel[{e.col}={rhs}]({print_rel(e.child)})"
    if isinstance(e, E.SelectCols):
        return f"sel[{e.left}={e.right}]({print_rel(e.child)})"
    if isinstance(e, E.Project):
        return f"proj[{','.join(str(c) for c in e.cols)}]({print_rel(e.child)})"
    if isinstance(e, E.Product):
        return f"{_rel_at(e.left, 2)} x {_rel_at(e.right, 3)}"
    if isinstance(e, (E.Union_, E.Diff)):
        op = "+" if isinstance(e, E.Union_) else "-"
        left = _rel_at(e.left, 1, not _is_empty(e.right))
        return f"{left} {op} {_rel_at(e.right, 2, not _is_empty(e.left))}"
    raise TypeError(e)


def _f_prec(f) -> int:
    if isinstance(f, E.Or):
        return 1
    if isinstance(f, E.And):
        return 2
    return 3


def _rel_pair(a, b, op: str) -> str:
    return f"{print_rel(a, not _is_empty(b))} {op} {print_rel(b, not _is_empty(a))}"


def print_formula(f: E.Formula) -> str:
    if isinstance(f, E.Bool):
        return "true" if f.value else "false"
    if isinstance(f, E.Eq):
        return f"{print_term(f.lhs)} = {print_term(f.rhs)}"
    if isinstance(f, E.RelEq):
        return f"{_rel_pair(f.lhs, f.rhs, '=')}"
    if isinstance(f, E.Sat):
        return f"sat({print_rel(f.expr)})"
    if isinstance(f, E.Member):
        return "(" + ", ".join(print_term(t) for t in f.terms) + f") in {print_rel(f.expr, True)}"
    if isinstance(f, E.Pred):
        return f"{f.name}({', '.join(print_term(a) for a in f.args)})"
    if isinstance(f, E.Not):
        c = f.child
        if isinstance(c, E.Eq):
            return f"{print_term(c.lhs)} != {print_term(c.rhs)}"
        if isinstance(c, E.RelEq):
            return _rel_pair(c.lhs, c.rhs, "!=")
        if isinstance(c, (E.And, E.Or)):
            return f"!({print_formula(c)})"
        return "!" + print_formula(c)
    if isinstance(f, (E.And, E.Or)):
        op, me = (" && ", E.And) if isinstance(f, E.And) else (" || ", E.Or)
        parts = []
        for c in f.children:
            s = print_formula(c)
            if isinstance(c, (E.And, E.Or)) and (isinstance(c, me) or _f_prec(c) < _f_prec(f)):
                s = f"({s})"
            parts.append(s)
        return op.join(parts)
    raise TypeError(f)


def print_spec(spec: SpecFile) -> str:
    """Canonical text for ``spec``; parsing it yields an equal ``SpecFile``."""
    sch = spec.schema
    lines = []
    for s in sch.sorts:
        lines.append(f"sort {s.name}{' : integer' if s.kind == INTEGER else ''};")
    for r in sch.relations:
        cols = ", ".join(f"{c}: {s}" for c, s in r.columns)
        tail = ""
        if r.key:
            tail += f" key({', '.join(str(k) for k in r.key)})"
        for fk in r.foreign_keys:
            tail += f" ref({fk.column} -> {fk.target}.{fk.target_column})"
        lines.append(f"relation {r.name}({cols}){tail};")
    for n, s in sch.session_vars:
        lines.append(f"var #{n} : {s};")
    for f in sch.functions:
        lines.append(f"function {f.name}({', '.join(f.args)}) : {f.result}{' injective' if f.injective else ''};")
    for p in sch.predicates:
        lines.append(f"predicate {p.name}({', '.join(p.args)});")
    owned = {n for t in spec.transducers for n, _ in t.params}
    for n, s in sch.params:
        if n not in owned:
            lines.append(f"param ${n} : {s};")
    for t in spec.transducers:
        head = f'transducer {t.name} "{t.url}"'
        if t.params:
            head += " (" + ", ".join(f"${n}: {s}" for n, s in t.params) + ")"
        if t.links is not None:
            head += " links {" + ", ".join(f'"{u}"' for u in t.links) + "}"
        lines.append("")
        lines.append(head + " {")
        lines.append("  " + print_formula(t.formula))
        lines.append("}")
    if spec.constraints:
        lines.append("")
    for name, f in spec.constraints.items():
        lines.append(f"constraint {name} = {print_formula(f)};")
    if spec.scope is not None:
        sc = spec.scope
        parts = []
        for k in SCOPE_KEYS:
            v = getattr(sc, k)
            if v is not None:
                parts.append(f"{k} {v}")
        lines.append("")
        lines.append("scope " + " ".join(parts) + ";")
    return "\n".join(lines) + "\n"


pretty_print = print_spec
