import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from relsynth import expr as E
from relsynth.relmodel import NULL, Anon, Const, IntVal, Scope, State, enumerate_states

from strategies import MICRO, formulas, rels, terms, transducers

a, b = Const("a"), Const("b")
MICRO_STATES = list(enumerate_states(MICRO, Scope(sort_size=2, max_rows=1)))
MICRO_ENV = E.Environment({"g": {(Anon("value", 0),): Anon("value", 1), (Anon("value", 1),): Anon("value", 0),
                                 (Const("k"),): Const("k")}},
                          {"p": {(Anon("value", 0),): True, (Anon("value", 1),): False, (Const("k"),): False}})
MICRO_BINDINGS = {"x": Anon("value", 0), "y": NULL}


def test_select_eq(schema):
    s = State.empty(schema).replace({"M": {(IntVal(1), a), (IntVal(2), b)}})
    e = E.SelectEq(E.Rel("M"), 2, E.Lit(a))
    assert E.eval_relalg(e, s) == {(IntVal(1), a)}


def test_s1_not_s2_query(spec):
    i1, u1 = IntVal(1), Const("u1")
    s = State.empty(spec.schema).replace({"S": {(i1, Const("s1"))}, "M": {(i1, u1)}})
    q = spec.constraints["s1_not_s2"].expr
    assert E.eval_relalg(q, s) == {(u1,)}


def test_empty_tables_give_empty_relations(spec):
    s = State.empty(spec.schema)
    assert E.eval_relalg(spec.constraints["s1_not_s2"].expr, s) == frozenset()


def test_showsessions_guard(spec):
    f = spec.constraints["showsessions"]
    s = State.empty(spec.schema).replace({"M": {(IntVal(1), a)}}, {"u": a})
    assert E.eval_formula(f, s)
    assert not E.eval_formula(f, s.replace(vars={"u": NULL}))


def test_membership_with_function(schema):
    fv, pv = Const("fv"), Const("pb")
    s = State.empty(schema).replace({"U": {(a, fv)}})
    m = E.Member((E.Param("u"), E.App("f", (E.Param("p"),))), E.Rel("U"))
    env = E.Environment({"f": {(pv,): fv}}, {})
    assert E.eval_formula(m, s, env, {"u": a, "p": pv})
    assert E.eval_formula(E.desugar_member(m), s, env, {"u": a, "p": pv})


def test_function_and_predicate_on_null():
    env = E.Environment({"g": {}}, {"p": {}})
    s = State.empty(MICRO)
    assert E.eval_term(E.App("g", (E.Lit(NULL),)), s, env) is NULL
    assert not E.eval_formula(E.Pred("p", (E.Lit(NULL),)), s, env)


def test_unbound_parameter_raises(schema):
    with pytest.raises(E.EvalError):
        E.eval_formula(E.Eq(E.Param("u_L"), E.Lit(a)), State.empty(schema))


def test_primed_reference_needs_second_state(schema):
    with pytest.raises(E.EvalError):
        E.eval_formula(E.Sat(E.Rel("M", True)), State.empty(schema))


def test_prime_showsessions(spec):
    primed = E.prime(spec.constraints["showsessions"])
    u = E.Var("u", True)
    assert primed == E.And((E.Not(E.Eq(u, E.Lit(NULL))), E.Sat(E.SelectEq(E.Rel("M", True), 2, u))))
    assert not E.symbols(primed).vars and not E.symbols(primed).rels


def test_prime_leaves_parameters_and_true():
    assert E.prime(E.TRUE) == E.TRUE
    f = E.Not(E.Eq(E.Param("u_L"), E.Lit(NULL)))
    assert E.prime(f) == f


def test_prime_rejects_primed_input():
    with pytest.raises(E.FormulaError):
        E.prime(E.Eq(E.Var("u", True), E.Lit(NULL)))


def test_substitute_login_definitions():
    f = E.Sat(E.SelectEq(E.Rel("M", True), 2, E.Var("u", True)))
    out = E.substitute(f, {E.Var("u", True): E.Param("u_L"), E.Rel("M", True): E.Rel("M")})
    assert out == E.Sat(E.SelectEq(E.Rel("M"), 2, E.Param("u_L")))


def test_substitute_addmember_definition(spec):
    f = E.Sat(E.SelectEq(E.Rel("M", True), 2, E.Param("u_L")))
    _, defs = E.split(spec.transducer("Addmember").formula)
    rhs = defs[E.Rel("M", True)]
    assert E.substitute(f, defs) == E.Sat(E.SelectEq(rhs, 2, E.Param("u_L")))
    assert isinstance(rhs, E.Union_) and rhs.left == E.Rel("M")


def test_substitute_identity_without_primes(spec):
    f = spec.constraints["showsessions"]
    assert E.substitute(f, {}) == f


def test_substitute_unmapped_prime_raises():
    with pytest.raises(E.FormulaError):
        E.substitute(E.Sat(E.Rel("M", True)), {})


def test_frame_close_showsessions(spec, schema):
    t = E.frame_close(spec.transducer("Showsessions"), schema)
    defs = E.definitions(t)
    assert defs == {E.Var("u", True): E.Var("u"), **{E.Rel(n, True): E.Rel(n) for n in ("U", "S", "M")}}
    assert E.guard_of(t) == spec.constraints["showsessions"]


def test_frame_close_insertsession_keeps_definition(spec, schema):
    t = E.frame_close(spec.transducer("Insertsession"), schema)
    defs = E.definitions(t)
    assert defs[E.Rel("S", True)] != E.Rel("S")
    for n in ("U", "M"):
        assert defs[E.Rel(n, True)] == E.Rel(n)
    assert defs[E.Var("u", True)] == E.Var("u")


def test_frame_close_is_idempotent(spec, schema):
    for t in spec.transducers:
        once = E.frame_close(t, schema)
        assert E.frame_close(once, schema) == once


def test_two_definitions_rejected(schema):
    f = E.And((E.Eq(E.Var("u", True), E.Lit(NULL)), E.Eq(E.Var("u", True), E.Var("u"))))
    with pytest.raises(E.FormulaError):
        E.frame_close(E.Transducer("t", "t.php", (), f), schema)


def test_primed_rhs_rejected(schema):
    f = E.Eq(E.Var("u", True), E.Var("u", True))
    with pytest.raises(E.FormulaError):
        E.split(f)


@pytest.mark.parametrize("name,expected", [
    ("Login", {"#u"}), ("Showsessions", set()), ("Addmember", {"M"}),
    ("Generaloptions", {"U"}), ("Insertsession", {"S"}),
])
def test_writes_set(spec, schema, name, expected):
    assert E.writes_set(E.frame_close(spec.transducer(name), schema)) == expected


def test_state_formula_characterizes_state(schema):
    s = State.empty(schema).replace({"U": {(a, b)}}, {"u": a})
    f = E.state_formula(s, schema)
    assert E.eval_formula(f, s)
    assert not E.eval_formula(f, s.replace(vars={"u": NULL}))


def test_conj_flattens_and_collapses():
    x = E.Eq(E.Var("v"), E.Lit(NULL))
    assert E.conj(E.TRUE, x, E.And((x, E.TRUE))) == x
    assert E.conj(x, E.FALSE) == E.FALSE
    assert E.conj() == E.TRUE


def test_cardinality_term(schema):
    s = State.empty(schema).replace({"S": {(IntVal(1), a), (IntVal(2), b)}})
    assert E.eval_term(E.Card(E.Rel("S"), 1), s) == IntVal(3)


# properties over the micro schema

micro = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@micro
@given(rels(1), st.sampled_from(MICRO_STATES))
def test_relalg_arity_soundness_unary(e, s):
    assert all(len(r) == E.arity(e, MICRO) for r in E.eval_relalg(e, s, MICRO_ENV, MICRO_BINDINGS))


@micro
@given(rels(2), st.sampled_from(MICRO_STATES))
def test_relalg_arity_soundness_binary(e, s):
    assert all(len(r) == 2 for r in E.eval_relalg(e, s, MICRO_ENV, MICRO_BINDINGS))


@micro
@given(formulas())
def test_prime_substitute_round_trip(f):
    assert E.substitute(E.prime(f), E.unprime_identity(E.prime(f))) == f


@micro
@given(rels(1), rels(1), st.sampled_from(MICRO_STATES))
def test_sat_monotone_under_union(e1, e2, s):
    if E.eval_formula(E.Sat(e1), s, MICRO_ENV, MICRO_BINDINGS):
        assert E.eval_formula(E.Sat(E.Union_(e1, e2)), s, MICRO_ENV, MICRO_BINDINGS)


@micro
@given(terms(), terms(), rels(2, depth=1))
def test_membership_matches_containment(t1, t2, e):
    m = E.Member((t1, t2), e)
    for s in MICRO_STATES:
        row = (E.eval_term(t1, s, MICRO_ENV, MICRO_BINDINGS), E.eval_term(t2, s, MICRO_ENV, MICRO_BINDINGS))
        direct = row in E.eval_relalg(e, s, MICRO_ENV, MICRO_BINDINGS)
        assert E.eval_formula(m, s, MICRO_ENV, MICRO_BINDINGS) == direct
        assert E.eval_formula(E.desugar_member(m), s, MICRO_ENV, MICRO_BINDINGS) == direct


@micro
@given(transducers(), st.sampled_from(MICRO_STATES), st.sampled_from(MICRO_STATES))
def test_frames_pin_unwritten_symbols(t, s, s2):
    assert E.frame_close(t, MICRO) == t
    writes = E.writes_set(t)
    changed = {E.var_symbol("v")} if s.var("v") != s2.var("v") else set()
    changed |= {r for r in ("R", "T") if s.table(r) != s2.table(r)}
    if changed - writes:
        assert not E.eval_formula(t.formula, (s, s2), MICRO_ENV, MICRO_BINDINGS)
