import pytest
from hypothesis import HealthCheck, given, settings

from relsynth import expr as E
from relsynth import solver as SV
from relsynth.image import ImageError, formula_states, post_image_enum, pre_image, pre_image_oracle
from relsynth.relmodel import IntVal, Scope, carrier

import golden
from strategies import MICRO, formulas, transducers

TINY = Scope(sort_size=1, max_rows=1)


def closed(spec, name):
    return E.frame_close(spec.transducer(name), spec.schema)


@pytest.mark.parametrize("index", range(len(golden.CHAIN)))
def test_golden_chain(spec, index):
    computed, expected = golden.regress(spec)[index]
    assert golden.same_up_to_order(computed, expected), (golden.CHAIN[index][0], computed)


def test_showsessions_preimage_of_true_is_guard(spec):
    assert pre_image(closed(spec, "Showsessions"), E.TRUE, spec.schema) == spec.constraints["showsessions"]


def test_preimage_is_prime_free(spec):
    for computed, _ in golden.regress(spec):
        assert not E.has_primes(computed)


def test_preimage_rejects_unclosed_transducer(spec):
    with pytest.raises(ImageError):
        pre_image(spec.transducer("Login"), E.TRUE, spec.schema)


def test_preimage_rejects_primed_post(spec):
    with pytest.raises(ImageError):
        pre_image(closed(spec, "Login"), E.Sat(E.Rel("M", True)), spec.schema)


def test_preimage_never_renames_parameters(spec):
    pre = pre_image(closed(spec, "Login"), E.TRUE, spec.schema)
    assert E.symbols(pre).params == {"u_L", "p_L"}


def test_login_oracle_matches_solver(spec, formula):
    t = closed(spec, "Login")
    n4 = formula(golden.N4)
    pre = pre_image(t, n4, spec.schema)
    expected = pre_image_oracle(t, n4, spec.schema, TINY)
    assert expected
    assert SV.model_states(pre, spec.schema, TINY, extra_nodes=[t.formula, n4]) == expected


def test_insertsession_oracle_matches_solver(spec, formula):
    t = closed(spec, "Insertsession")
    post = formula("sat(sel[1=(2)](S))")
    pre = pre_image(t, post, spec.schema)
    scope = Scope(sort_size=1, max_rows=2)
    expected = pre_image_oracle(t, post, spec.schema, scope)
    assert expected
    assert SV.model_states(pre, spec.schema, scope, extra_nodes=[t.formula, post]) == expected


def test_oracle_of_false_is_empty(spec):
    assert pre_image_oracle(closed(spec, "Login"), E.FALSE, spec.schema, TINY) == set()


def test_oracle_of_pure_guard(spec):
    t = closed(spec, "Showsessions")
    p = spec.constraints["logged_out"]
    assert pre_image_oracle(t, p, spec.schema, TINY) == formula_states(E.conj(E.guard_of(t), p), spec.schema, TINY)


def test_insertsession_post_image(spec, formula):
    t = closed(spec, "Insertsession")
    out = post_image_enum(t, formula("S = {}"), spec.schema, TINY)
    assert out
    names = carrier(spec.schema, TINY, "varchar")
    assert {next(iter(s.table("S"))) for s in out} == {(IntVal(1), v) for v in names}
    for s in out:
        assert len(s.table("S")) == 1
    before = formula_states(formula("S = {}"), spec.schema, TINY)
    assert {(s.table("U"), s.table("M"), s.var("u")) for s in out} == {
        (s.table("U"), s.table("M"), s.var("u")) for s in before
    }


def test_post_image_of_false(spec):
    assert post_image_enum(closed(spec, "Login"), E.FALSE, spec.schema, TINY) == set()


def test_post_image_of_frames(spec):
    t = closed(spec, "Showsessions")
    p = spec.constraints["showsessions"]
    assert post_image_enum(t, p, spec.schema, TINY) == formula_states(p, spec.schema, TINY)


def test_preimage_size_is_bounded(spec):
    post = E.TRUE
    for name, _ in golden.CHAIN:
        t = closed(spec, name)
        pre = pre_image(t, post, spec.schema)
        assert E.size(pre) <= 2 * (E.size(post) + 1) * E.size(t.formula)
        post = pre


micro = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def micro_scope(*nodes, size=2):
    has_consts = any(E.symbols(n).consts for n in nodes)
    return Scope(sort_size=1 if has_consts else size, max_rows=1)


@micro
@given(transducers(), formulas(depth=1))
def test_oracle_equivalence(t, post):
    scope = micro_scope(t.formula, post)
    pre = pre_image(t, post, MICRO)
    assert SV.model_states(pre, MICRO, scope, [t.formula, post]) == pre_image_oracle(t, post, MICRO, scope)


@micro
@given(transducers())
def test_preimage_of_true_is_guard(t):
    scope = micro_scope(t.formula)
    pre = pre_image(t, E.TRUE, MICRO)
    g = E.guard_of(t)
    assert SV.model_states(pre, MICRO, scope, [t.formula]) == SV.model_states(g, MICRO, scope, [t.formula])


@micro
@given(transducers(), formulas(depth=1), formulas(depth=1))
def test_preimage_monotone(t, p1, p2):
    weaker = E.Or((p1, p2))
    scope = micro_scope(t.formula, p1, p2)
    extra = [t.formula, p1, p2]
    small = SV.model_states(pre_image(t, p1, MICRO), MICRO, scope, extra)
    big = SV.model_states(pre_image(t, weaker, MICRO), MICRO, scope, extra)
    assert small <= big
