from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gen import random_term
from pipa.syntax import parse
from pipa.terms import (NIL, Input, Output, Par, Rec, Res, Sum, Tau, Var, alpha_normalize,
                        canonical, canonical_key, congruent, free_names, fresh, is_literal,
                        par, prefix_sum, show, substitute, unfold)


def test_literals():
    assert all(is_literal(n) for n in ("true", "false", "0", "1"))
    assert not is_literal("t")


def test_free_names_binders():
    p = parse("new y in x!y | 1: z?(w). w!v")
    assert free_names(p) == {"x", "z", "v"}


def test_literals_are_not_free_names():
    assert free_names(parse("x!true")) == {"x"}


def test_substitution_renames_capturing_binder():
    p = parse("1: x?(y). z!y")
    q = substitute(p, "y", "z")
    # the formal must move out of the way of the incoming y
    b = q.branches[0]
    assert b.prefix.formal != "y"
    assert b.cont == Output("y", b.prefix.formal)


def test_substitution_under_restriction():
    p = parse("new y in x!y")
    q = substitute(p, "y", "x")
    assert isinstance(q, Res) and q.binder != "y"
    assert q.body == Output("y", q.binder)


def test_substitution_leaves_bound_occurrences():
    p = parse("1: a?(x). x!b")
    assert substitute(p, "c", "x") == p


def test_substitute_literal_target_rejected():
    with pytest.raises(ValueError):
        substitute(NIL, "a", "true")


def test_fresh():
    assert fresh("x", {"x", "x_1"}) == "x_2"
    assert fresh("x_3", set()) == "x_1"


def test_alpha_equivalent_inputs():
    assert congruent(parse("1: x?(y). y!a"), parse("1: x?(z). z!a"))
    assert not congruent(parse("1: x?(y). y!a"), parse("1: x?(y). a!y"))


def test_alpha_normal_form_uses_levels():
    p = alpha_normalize(parse("new a in new b in a!b"))
    assert show(p) == "new _0 _1 in _0!_1"


def test_alpha_prefix_avoids_free_names():
    p = alpha_normalize(parse("new a in a!_0"))
    assert "_0" in free_names(p)
    assert p.binder != "_0"


def test_congruence_is_ac_for_par():
    p, q, r = Output("a", "b"), Output("c", "d"), parse("1: e?(x). x!x")
    assert congruent(Par(p, Par(q, r)), Par(Par(r, q), p))


def test_congruence_does_not_unfold():
    r = parse("rec X. 1: tau. X")
    assert not congruent(r, unfold(r))


def test_canonical_idempotent_example():
    p = parse("new y in (x!y | 1: y?(z). z!w)")
    assert canonical(canonical(p)) == canonical(p)


def test_unfold():
    r = parse("rec X. 1/2: tau. X + 1/2: tau. 0")
    u = unfold(r)
    assert isinstance(u, Sum)
    assert u.branches[0].cont == r


def test_unfold_avoids_capture_of_rec_free_names():
    r = Rec("X", prefix_sum((1, Input("a", "y"), Par(Output("y", "y"), Var("X")))))
    u = unfold(r)
    # y is bound by the input; the copy of r inside must stay closed over it
    assert free_names(u) == free_names(r) == {"a"}


def test_par_builder():
    assert par() == NIL
    assert par(Output("a", "b")) == Output("a", "b")


def test_show_parenthesises_nested_right_par():
    p = Par(Output("a", "b"), Par(Output("c", "d"), Output("e", "f")))
    assert parse(show(p)) == p


def test_tau_label_printing():
    assert show(prefix_sum((1, Tau("draw(0,1)"), NIL))) == "1: tau[draw(0,1)]. 0"


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 4))
def test_show_parse_round_trip(rng, depth):
    p = random_term(rng, depth)
    assert parse(show(p)) == p


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 4))
def test_canonical_is_idempotent(rng, depth):
    p = random_term(rng, depth)
    c = canonical(p)
    assert canonical(c) == c
    assert canonical_key(p) == show(c)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 3))
def test_renaming_free_name_consistently(rng, depth):
    p = random_term(rng, depth)
    # renaming a free name to an unused one keeps the term shape
    q = substitute(p, "fresh_name", "a")
    back = substitute(q, "a", "fresh_name")
    assert congruent(back, p)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 3), st.permutations(range(3)))
def test_par_permutations_are_congruent(rng, depth, perm):
    comps = [random_term(rng, depth) for _ in range(3)]
    a = par(*comps)
    b = par(*(comps[i] for i in perm))
    assert congruent(a, b)


def test_probabilities_are_fractions():
    p = parse("0.25: tau. 0 + 3/4: tau. 0")
    assert [b.prob for b in p.branches] == [Fraction(1, 4), Fraction(3, 4)]
