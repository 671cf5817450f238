import pytest
from hypothesis import HealthCheck, given, settings

from relsynth import expr as E
from relsynth import solver as SV
from relsynth.executor import ConstraintViolation, LazyEnv, apply, run_sequence
from relsynth.image import enumerate_bindings, enumerate_envs, post_image_enum, pre_image_oracle, successor
from relsynth.relmodel import Anon, Const, IntVal, Scope, State, check_instance, enumerate_states

import golden
from strategies import MICRO, formulas, transducers

CASE = Scope(sort_size=3, max_rows=3)
c = Const("c")


def closed(spec, name):
    return E.frame_close(spec.transducer(name), spec.schema)


def test_insertsession_on_empty(spec):
    s = State.empty(spec.schema)
    (out,) = apply(closed(spec, "Insertsession"), s, {"s_I": c}, None, spec.schema, CASE)
    assert out.table("S") == {(IntVal(1), c)}
    assert out.replace({"S": frozenset()}) == s


def test_login_needs_logged_out(spec):
    s = State.empty(spec.schema).replace(vars={"u": Const("a")})
    assert apply(closed(spec, "Login"), s, {"u_L": Const("a"), "p_L": Const("b")}, None, spec.schema, CASE) == set()


def test_showsessions_keeps_state(spec):
    a = Const("a")
    s = State.empty(spec.schema).replace(
        {"U": {(a, Const("w"))}, "S": {(IntVal(1), c)}, "M": {(IntVal(1), a)}}, {"u": a})
    assert apply(closed(spec, "Showsessions"), s, {}, None, spec.schema, CASE) == {s}


def test_unbound_parameter(spec):
    with pytest.raises(E.EvalError):
        apply(closed(spec, "Insertsession"), State.empty(spec.schema), {}, None, spec.schema, CASE)


def test_key_violation_is_reported(spec):
    a = Const("a")
    s = State.empty(spec.schema).replace({"U": {(a, Const("w"))}})
    env = E.Environment({"f": {(Const("p"),): Const("z")}}, {"r": {(Const("p"),): True}})
    with pytest.raises(ConstraintViolation):
        apply(closed(spec, "Generaloptions"), s, {"u_G": a, "p_G": Const("p")}, env, spec.schema, CASE)


def test_cardinality_overflow_is_reported(spec):
    s = State.empty(spec.schema).replace({"S": {(IntVal(1), c)}})
    with pytest.raises(ConstraintViolation):
        apply(closed(spec, "Insertsession"), s, {"s_I": c}, None, spec.schema, Scope(max_rows=3, int_max=1))


def test_lazy_env_invents_injective_values(schema):
    env = LazyEnv(E.Environment({"f": {(Const("a"),): Anon("varchar", 0)}}, {}), schema)
    x = env.apply("f", (Const("b"),))
    y = env.apply("f", (Const("c"),))
    assert len({Anon("varchar", 0), x, y}) == 3
    assert env.invented == [("f", (Const("b"),), x), ("f", (Const("c"),), y)]
    assert env.holds("r", (Const("a"),)) is False


def test_empty_sequence_returns_initial(schema):
    s = State.empty(schema)
    r = run_sequence([], s, None, schema, CASE)
    assert r.ok and r.state == s and r.snapshots == [s]


def test_login_on_empty_database_fails_at_first_step(spec):
    r = run_sequence([(closed(spec, "Login"), {"u_L": Const("a"), "p_L": Const("b")})],
                     State.empty(spec.schema), None, spec.schema, CASE)
    assert not r.ok and r.failed_step == 0
    assert "guard" in r.reason


def case_study_witness(spec, formula):
    out = SV.joint_sat(spec.constraints["init"], formula(golden.N0), spec.schema, CASE)
    assert out.is_sat
    return out.model


def case_study_steps(spec, bindings):
    return [(closed(spec, name), dict(bindings)) for name in golden.IGALS]


def test_case_study_replay(spec, formula):
    m = case_study_witness(spec, formula)
    r = run_sequence(case_study_steps(spec, m.bindings), m.state, m.env, spec.schema, CASE)
    assert r.ok, r.reason
    assert E.eval_formula(spec.constraints["showsessions"], r.state, r.env)
    assert r.state.var("u") == m.bindings["u_L"]
    assert len(r.snapshots) == 6
    for s in r.snapshots:
        assert check_instance(spec.schema, s) == []


def test_case_study_mutated_login_fails(spec, formula):
    m = case_study_witness(spec, formula)
    steps = case_study_steps(spec, m.bindings)
    login = golden.IGALS.index("Login")
    steps[login][1]["u_L"] = Const("mallory")
    r = run_sequence(steps, m.state, m.env, spec.schema, CASE)
    assert not r.ok
    assert r.failed_step in (login, login + 1)


# micro-scope properties

micro = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
MICRO_SCOPE = Scope(sort_size=2, max_rows=1)


def envs_and_bindings(scope):
    envs = list(enumerate_envs(MICRO, scope))
    binds = list(enumerate_bindings(MICRO, scope, MICRO.params))
    return [(env, b) for env in envs for b in binds]


def safe_apply(t, s, b, env, scope):
    try:
        return apply(t, s, b, env, MICRO, scope)
    except ConstraintViolation:
        return None


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(transducers(consts=False))
def test_apply_agrees_with_post_image(t):
    scope = MICRO_SCOPE
    pairs = envs_and_bindings(scope)
    for s in enumerate_states(MICRO, scope):
        pre = E.state_formula(s, MICRO)
        forward = set()
        for env, b in pairs:
            out = safe_apply(t, s, b, env, scope)
            assert out is None or len(out) <= 1
            forward |= out or set()
        assert forward == post_image_enum(t, pre, MICRO, scope)


@micro
@given(transducers(consts=False), formulas(consts=False, depth=1))
def test_preimage_states_replay(t, post):
    # The logical successor of an oracle state may break keys; apply must then say so.
    wide = Scope(sort_size=2, max_rows=10)
    pairs = envs_and_bindings(MICRO_SCOPE)
    _, defs = E.split(t.formula)
    for s in pre_image_oracle(t, post, MICRO, MICRO_SCOPE):
        witnessed = False
        for env, b in pairs:
            nxt = successor(defs, s, env, b)
            if not (E.eval_formula(t.formula, (s, nxt), env, b) and E.eval_formula(post, nxt, env, b)):
                continue
            out = safe_apply(t, s, b, env, wide)
            if out is None:
                assert check_instance(MICRO, nxt)
            else:
                assert out == {nxt}
            witnessed = True
        assert witnessed


@micro
@given(transducers(consts=False))
def test_apply_never_returns_invalid_state(t):
    for s in enumerate_states(MICRO, MICRO_SCOPE):
        for env, b in envs_and_bindings(MICRO_SCOPE)[:6]:
            out = safe_apply(t, s, b, env, MICRO_SCOPE)
            for nxt in out or ():
                assert check_instance(MICRO, nxt) == []
