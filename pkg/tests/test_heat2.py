import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nctheat.heat2 import (ConformalTerm, PolyM, compare_terms, contract, format_terms, golden_components,
                           golden_diagonal, leibniz_partition, split_derivative, symmetrization_split,
                           terms_to_json, v2_components, v2_conformal, v2_diagonal, v2_general)
from nctheat.heat2 import _templates
from nctheat.symcalc import QI, general_operator, resolvent_b

I = QI(0, 1)


def poly(*cs):
    return PolyM([QI(c) if not isinstance(c, QI) else c for c in cs])


# ---------------------------------------------------------------- compact form

def test_general_form_groups():
    groups = v2_general()
    part1 = [a for a in groups if len(a) == 2]
    part2 = [a for a in groups if len(a) == 3]
    assert set(part1) == {(2, 1), (3, 1), (1, 1)}
    assert set(part2) == {(2, 1, 1), (3, 1, 1), (2, 2, 1), (1, 2, 1), (1, 1, 1)}


def test_general_form_coefficients():
    groups = v2_general()
    (t311,) = groups[(3, 1, 1)]
    assert t311.coeff == QI(-2)
    (t11,) = groups[(1, 1)]
    assert t11.coeff == QI(-1)
    assert [f.l for f in t11.slots[0]] == [0]


def test_general_form_without_lower_order_parts():
    groups = v2_general(with_p1=False, with_p0=False)
    assert set(groups) == {(2, 1), (3, 1), (2, 1, 1), (3, 1, 1), (2, 2, 1)}


# ---------------------------------------------------------------- Leibniz splitting

def test_leibniz_partition_worked_example():
    split = leibniz_partition([1, 1, 2, 2], 3)
    assert split.beta == (1, 1, 2, 2)
    assert split.prefactor == Fraction(1, 4)


def test_leibniz_partition_odd_degree_vanishes():
    assert leibniz_partition([1, 2], 2) is None
    assert leibniz_partition([3], 2) is None


def test_leibniz_partition_single_factor():
    assert leibniz_partition([2], 1).prefactor == Fraction(1, 2)


homog = st.integers(0, 3).flatmap(
    lambda d: st.dictionaries(st.tuples(*[st.integers(0, d)] * 2).filter(lambda e: sum(e) == d),
                              st.integers(-3, 3).filter(bool), min_size=1, max_size=3))


@settings(max_examples=80)
@given(st.lists(homog, min_size=1, max_size=3), st.data())
def test_split_derivative_matches_direct(polys, data):
    total = sum(sum(next(iter(p))) for p in polys)
    if total % 2:
        direct, split = split_derivative(polys, [0] * total)
        assert split == 0
        return
    l = data.draw(st.lists(st.integers(0, 1), min_size=total, max_size=total))
    direct, split = split_derivative(polys, l)
    assert direct == split


# ---------------------------------------------------------------- parity

def test_odd_xi_degree_terms_are_dropped():
    op = general_operator(2)
    b1 = contract(resolvent_b(1, op))
    assert b1.dropped_odd == b1.total and not b1.terms
    b2 = contract(resolvent_b(2, op))
    assert b2.dropped_odd == 0 and b2.total == len(resolvent_b(2, op))


# ---------------------------------------------------------------- expanded components

@pytest.fixture(scope="module")
def components_m2():
    return {t.key: t.coeff for t in v2_components(2)}


def test_components_match_golden_m2(components_m2):
    assert compare_terms(components_m2, golden_components(2, literal=False)) == {}


def test_literal_121_reading_differs_only_in_that_group(components_m2):
    diff = compare_terms(components_m2, golden_components(2, literal=True))
    assert diff
    assert {k[0] for k in diff} == {(1, 2, 1)}


def test_component_prefactors():
    coeffs = {t.name: t.coeff for t in _templates(False)}
    assert coeffs["I,2,1 k∇²k"] == QI(-2)
    assert coeffs["I,3,1"] == QI(4)
    assert coeffs["II,3,1,1"] == QI(-8)
    assert coeffs["II,2,2,1"] == QI(-4)


def test_component_single_index_value(components_m2):
    from nctheat.symcalc import CoeffSymbol
    k11 = CoeffSymbol("K", 1, 1, ())
    k11_dd = CoeffSymbol("K", 1, 1, (1, 1))
    assert components_m2[((2, 1), ((1, 1),), ((k11, k11_dd),))] == QI(-2)


def test_symmetrization_multiplicities():
    by_name = {t.name: t for t in _templates(False)}
    four = symmetrization_split(by_name["I,3,1"])
    assert sorted(four.values()) == [8, 16]
    assert four[((0, 1),)] == 16
    six = symmetrization_split(by_name["II,3,1,1"])
    assert sorted(six.values()) == [48, 96, 96, 96, 384]
    assert six[((0, 1, 2),)] == 384
    assert sum(six.values()) == 720


# ---------------------------------------------------------------- diagonal case

def test_diagonal_matches_corrected_golden():
    eng = {t.key: t.coeff for t in v2_diagonal(2)}
    assert compare_terms(eng, golden_diagonal(2, literal=False)) == {}


def test_diagonal_literal_index_typos():
    eng = {t.key: t.coeff for t in v2_diagonal(2)}
    diff = compare_terms(eng, golden_diagonal(2, literal=True))
    alphas = {k[1] if k[0] == "badN" else k[0] for k in diff}
    assert alphas == {(1, 1, 1), (2, 1, 1)}


def test_diagonal_index_counts():
    for t in v2_diagonal(2):
        assert len(t.s_list) == sum(t.alpha) - 2


def test_diagonal_one_dimensional_collapse():
    terms = v2_diagonal(1, with_p1=False, with_p0=False)
    got = sorted((t.alpha, str(t.coeff)) for t in terms)
    assert got == sorted([((2, 1), "-1/2"), ((3, 1), "3"), ((2, 1, 1), "9/2"), ((2, 2, 1), "-15/2"),
                          ((3, 1, 1), "-15")])


# ---------------------------------------------------------------- conformal case

def test_conformal_part_I():
    res = v2_conformal("delta_k")
    got = {(t.alpha, t.zpow): t.coeff for t in res.G_I}
    assert got == {((3, 1), 0): poly(2, 1), ((2, 1), 0): poly(0, Fraction(-1, 2))}


def test_conformal_part_II():
    res = v2_conformal("delta_k")
    got = {(t.alpha, t.zpow): t.coeff for t in res.G_II}
    h = Fraction(1, 2)
    assert got == {((3, 1, 1), 0): poly(-8, -6, -1),
                   ((2, 2, 1), 1): poly(-4, -3, -h),
                   ((2, 1, 1), 0): poly(2, 2, h)}
    assert got[((2, 1, 1), 0)] == PolyM([QI(4), QI(4), QI(1)]) * PolyM([QI(h)])


def test_conformal_delta_k_has_no_J_terms():
    assert v2_conformal("delta_k").J == []


def test_conformal_delta_phi_J_terms():
    res = v2_conformal("delta_phi")
    assert [t.coeff for t in res.G_I] == [t.coeff for t in v2_conformal("delta_k").G_I]
    got = {(t.alpha, t.zpow, t.pattern): t.coeff for t in res.J}
    h = Fraction(1, 2)
    assert got == {
        ((1, 1), 0, "p0"): poly(-1),
        ((2, 1), 0, "∇_s r_s"): poly(-I),
        ((1, 1, 1), 0, "r_s ⊗ r_s"): poly(h),
        ((2, 1, 1), 0, "r_s ⊗ ∇_s k"): poly(I, I * h),
        ((1, 2, 1), 1, "r_s ⊗ ∇_s k"): poly(I, I * h),
        ((1, 1, 1), 0, "r_s ⊗ ∇_s k"): poly(0, -I * h),
        ((2, 1, 1), 0, "∇_s k ⊗ r_s"): poly(I, I * h),
    }


def test_conformal_rejects_unknown_operator():
    with pytest.raises(ValueError):
        v2_conformal("delta_q")


def test_conformal_interpolation_has_a_spare_point():
    res = v2_conformal("delta_k", sample_m=(2, 3, 4, 5))
    assert max(t.coeff.degree for t in res.G_II) <= 2


def test_polym_evaluation():
    p = poly(-8, -6, -1)
    assert complex(p(2)) == -24
    assert str(PolyM.interpolate([(2, QI(1)), (3, QI(2))])) == "m - 1"


# ---------------------------------------------------------------- output

def test_terms_to_json_schema():
    res = v2_conformal("delta_k")
    data = json.loads(terms_to_json("conformal", res.G_I, m=None))
    assert data["schema_version"] == 1
    assert data["form"] == "conformal"
    assert data["terms"][0]["alpha"] == [3, 1]
    assert data["terms"][0]["coeff_m"] == ["2", "1"]


def test_terms_to_json_rejects_foreign_objects():
    with pytest.raises(TypeError):
        terms_to_json("x", [object()])


def test_format_terms_lists_each_term():
    res = v2_conformal("delta_k")
    text = format_terms(res.G_I)
    assert text.count("\n") == 1 and "H_{3,1}" in text
    assert isinstance(res.G_I[0], ConformalTerm)
