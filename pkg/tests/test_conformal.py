import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nctheat import conformal as C
from nctheat.conformal import (Z1, Z2, EvalContext, EvalPoint, GPow1, GPow11, H, HAtom, Mul, Add, Const, Y1, Y2,
                               check_identity, divided_difference, gpow1, gpow11, random_points, sH, tau1, tau2,
                               tau2_sq)
from nctheat.heat2 import v2_conformal
from nctheat.rearrange import H_alpha

pos = st.floats(0.05, 20.0)


# ---------------------------------------------------------------- divided differences

def test_gpow_examples():
    assert gpow1(1.0) == pytest.approx(0.5, abs=1e-15)
    assert gpow1(4.0) == pytest.approx(1 / 3, abs=1e-15)
    assert gpow11(1.0, 1.0) == pytest.approx(-1 / 8, abs=1e-15)


@pytest.mark.parametrize("eps", [1e-3, 1e-5, 1e-7, 1e-9, 1e-12])
def test_gpow1_smooth_across_confluence(eps):
    exact = 1 / (1 + math.sqrt(1 + eps))
    assert gpow1(1 + eps) == pytest.approx(exact, rel=1e-13)
    assert gpow1(1 - eps) == pytest.approx(1 / (1 + math.sqrt(1 - eps)), rel=1e-13)


@pytest.mark.parametrize("y1,y2", [(1 + 1e-6, 1 - 2e-6), (1.00005, 1.3), (0.7, 1 + 1e-9), (1.0, 1.0)])
def test_gpow11_near_confluence_matches_integral_form(y1, y2):
    # f[x0, x1, x2] = int_simplex f''(x0 (1-u-v) + x1 u + x2 v) du dv
    x0, x1, x2 = 1.0, y1, y1 * y2
    g, w = np.polynomial.legendre.leggauss(30)
    tot = 0.0
    for a, wa in zip(g, w):
        u = (a + 1) / 2
        for b, wb in zip(g, w):
            v = (1 - u) * (b + 1) / 2
            pt = x0 * (1 - u - v) + x1 * u + x2 * v
            tot += wa * wb * (1 - u) / 4 * (-0.25 * pt ** -1.5)
    assert gpow11(y1, y2) == pytest.approx(tot, rel=1e-12)


@settings(max_examples=200)
@given(st.lists(pos, min_size=2, max_size=4), st.permutations(range(4)))
def test_divided_difference_symmetric_in_nodes(nodes, perm):
    perm = [p for p in perm if p < len(nodes)]
    a = divided_difference(nodes)
    b = divided_difference([nodes[p] for p in perm])
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_divided_difference_rejects_nonpositive():
    with pytest.raises(ValueError):
        divided_difference([1.0, -1.0])
    with pytest.raises(ValueError):
        gpow11(1.0, 0.0)


def test_eval_point_validation():
    with pytest.raises(ValueError):
        EvalPoint(-1.0)
    with pytest.raises(ValueError):
        EvalPoint(1.0, 1.0, 1.5)


# ---------------------------------------------------------------- cyclic transforms

ONE_VAR = [H(1, 1), H(2, 1), H(3, 1), H(1, 2), sH(2, 1), GPow1(Y1)]
TWO_VAR = [H(1, 1, 1), H(2, 1, 1), H(1, 2, 1), H(2, 2, 1), sH(3, 1, 1), H(1, 2, args=(Z1,)),
           H(2, 1, args=(Z2,)), GPow11(Y1, Y2), GPow1(Y2) * H(1, 1, 1)]


def _pairs(nvar, count, seed):
    rng = np.random.default_rng(seed)
    atoms = ONE_VAR if nvar == 1 else TWO_VAR
    pts = random_points(nvar, count, rng, lo=0.4, hi=2.5)
    return [(atoms[i % len(atoms)], p) for i, p in enumerate(pts)]


@pytest.mark.parametrize("rules", [False, True])
def test_tau1_is_an_involution(rules):
    for f, p in _pairs(1, 100, 1):
        g = tau1(tau1(f, rules=rules), rules=rules)
        a, b = f.evaluate(p), g.evaluate(p)
        assert abs(a - b) < 1e-10 * max(1.0, abs(a))


@pytest.mark.parametrize("rules", [False, True])
def test_tau2_has_order_three(rules):
    for f, p in _pairs(2, 100, 2):
        g = tau2(tau2(tau2(f, rules=rules), rules=rules), rules=rules)
        a, b = f.evaluate(p), g.evaluate(p)
        assert abs(a - b) < 1e-10 * max(1.0, abs(a))


def test_tau2_squared_is_tau2_twice():
    for f, p in _pairs(2, 30, 3):
        a = tau2_sq(f, rules=False).evaluate(p)
        b = tau2(tau2(f, rules=False), rules=False).evaluate(p)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


def test_tau1_rule_on_Hab_explicit():
    for a, b in ((1, 1), (2, 1), (1, 3)):
        for y, m in ((0.5, 2), (2.5, 3)):
            z = 1 - y
            lhs = H(a, b).evaluate(EvalPoint(1 / y, 1.0, m))
            rhs = (1 - z) ** (a + b + m / 2 - 2) * H(b, a).evaluate(EvalPoint(y, 1.0, m))
            assert lhs == pytest.approx(rhs, rel=1e-10)


def test_transform_identities_hold():
    rng = np.random.default_rng(4)
    for ident in C.transform_identities():
        tab = check_identity(ident, random_points(ident.nvar, 20, rng), tol=1e-8)
        assert tab.passed, (ident.name, tab.max_residual)


# ---------------------------------------------------------------- recurrences

@pytest.mark.parametrize("ident", C.recurrences(), ids=lambda i: i.name)
def test_recurrence(ident):
    rng = np.random.default_rng(abs(hash(ident.name)) % 2**32)
    tab = check_identity(ident, random_points(ident.nvar, 20, rng), tol=1e-8)
    assert tab.passed, tab.max_residual


def test_remove_H122_at_reference_point():
    (ident,) = [i for i in C.recurrences() if i.name == "remove-H122"]
    _, _, r = ident.residual(EvalPoint(2.0, 3.0, 2))
    assert r < 1e-8


def test_ode_identity_on_a_z_range():
    (ident,) = [i for i in C.recurrences() if i.name == "VI-vanishes"]
    pts = [EvalPoint(1 - z, 1.0, m) for z in np.linspace(-3.0, 0.9, 14) for m in (2, 3, 4)]
    assert check_identity(ident, pts, tol=1e-8).passed


@pytest.mark.parametrize("ident", C.gpow_identities(), ids=lambda i: i.name)
def test_gpow_identity(ident):
    tab = check_identity(ident, random_points(ident.nvar, 20, np.random.default_rng(5)), tol=1e-10)
    assert tab.passed


@pytest.mark.parametrize("dc", C.display_checks(), ids=lambda d: d.corrected.name)
def test_printed_form_fails_and_corrected_form_holds(dc):
    pts = random_points(dc.corrected.nvar, 8, np.random.default_rng(6))
    printed = check_identity(dc.printed, pts, tol=1e-6, relative=True)
    corrected = check_identity(dc.corrected, pts, tol=1e-8, relative=True)
    assert corrected.passed
    assert printed.max_residual > 1e-4


def test_eta_readings():
    r113, r131 = C.eta_readings()
    pts = random_points(2, 10, np.random.default_rng(7))
    assert check_identity(r131, pts, tol=1e-8).passed
    assert not check_identity(r113, pts, tol=1e-4).passed


# ---------------------------------------------------------------- J functions

def test_J2_structure():
    p = EvalPoint(2.0, 1.0, 2)
    J = C.J_functions(p)
    g = gpow1(2.0)
    direct = -g * (2 * H_alpha((2, 1), (-1.0,), 2) - H_alpha((1, 1), (-1.0,), 2))
    assert J["J2"] == pytest.approx(direct, rel=1e-12)


def test_J2_vanishes_at_y_equal_one():
    for m in (2, 3, 5):
        assert abs(C.J2().evaluate(EvalPoint(1.0, 1.0, m))) < 1e-10


def _flatten(e):
    if isinstance(e, Mul):
        out = []
        for f in e.factors:
            out += _flatten(f)
        return out
    return [e]


def _terms(e):
    if isinstance(e, Add):
        out = []
        for t in e.terms:
            out += _terms(t)
        return out
    return [e]


def test_J_L6_10_coefficient_of_H211():
    (term,) = [t for t in _terms(C.J_L6_10()) if any(isinstance(f, HAtom) and f.alpha == (2, 1, 1)
                                                      for f in _flatten(t))]
    coeff = Mul(tuple(f for f in _flatten(term) if not isinstance(f, HAtom)))
    for y1, y2, m in ((0.5, 2.0, 2), (1.7, 0.6, 3)):
        expect = (2 + m) * (gpow1(y1) + gpow1(y2))
        assert coeff.evaluate(EvalPoint(y1, y2, m)) == pytest.approx(expect, rel=1e-14)


# ---------------------------------------------------------------- spectral functions

def test_engine_and_formula_G_functions_agree():
    res = v2_conformal("delta_k")
    for y1, y2, m in ((0.5, 1.7, 2), (2.2, 0.4, 3)):
        p = EvalPoint(y1, y2, m)
        assert res.spectral("I")((1 - y1,), m) == pytest.approx(C.G_I().evaluate(p), rel=1e-11)
        assert res.spectral("II")((1 - y1, 1 - y1 * y2), m) == pytest.approx(C.G_II().evaluate(p), rel=1e-11)


def test_m4_degeneracy():
    # both sides of relations I and II vanish identically at m = 4
    for y in (0.3, 0.8, 2.5):
        p = EvalPoint(y, 1.7, 4)
        scale = abs(C.sH(3, 1).evaluate(p))
        assert abs(C.G_I().evaluate(p)) < 1e-11 * scale
        assert abs(C.J2().evaluate(p)) < 1e-11 * scale


# ---------------------------------------------------------------- relations

def test_relation_I_default_grid():
    tab = C.verify_relation_I()
    assert len(tab.rows) == 24
    assert tab.passed, tab.max_residual


def test_relation_II_default_grid():
    tab = C.verify_relation_II(with_lemmas=False)
    assert len(tab.rows) == 32
    assert tab.passed, tab.max_residual


def test_relations_trivial_points():
    for m in (2, 3, 4, 5):
        assert C.relation_I().residual(EvalPoint(1.0, 1.0, m))[2] < 1e-12
    for m in (2, 4):
        assert C.relation_II().residual(EvalPoint(1.0, 1.0, m))[2] < 1e-10


def test_relation_I_quadrature_self_consistency():
    p = EvalPoint(2.0, 1.0, 2)
    lhs_fine, rhs_fine, _ = C.relation_I().residual(p, EvalContext(tol=1e-13))
    lhs_coarse, rhs_coarse, _ = C.relation_I().residual(p, EvalContext(tol=1e-9))
    assert lhs_fine == pytest.approx(lhs_coarse, abs=1e-9)
    assert rhs_fine == pytest.approx(rhs_coarse, abs=1e-9)


@pytest.mark.parametrize("ident", [i for i in C.lemma_identities()
                                   if i.name not in ("c111-simplified", "tau2sq(J_I)-displayed")],
                         ids=lambda i: i.name)
def test_lemma_decompositions(ident):
    pts = random_points(2, 10, np.random.default_rng(8))
    assert check_identity(ident, pts, tol=1e-10, relative=True).passed


def test_c112_closed_form():
    (ident,) = [i for i in C.lemma_identities() if i.name == "c112-simplified"]
    for p in random_points(2, 10, np.random.default_rng(9)):
        a, b, r = ident.residual(p)
        assert r < 1e-10 * max(1.0, abs(a))
        expect = p.y1 ** 2 * p.y2 * (math.sqrt(p.y1) * gpow1(p.y1) - gpow1(p.y2))
        assert b == pytest.approx(expect, rel=1e-12)


def test_displayed_c111_sign_fails():
    (ident,) = [i for i in C.lemma_identities() if i.name == "c111-simplified"]
    pts = random_points(2, 6, np.random.default_rng(10))
    assert not check_identity(ident, pts, tol=1e-6, relative=True).passed


def test_normalization_independence():
    assert C.normalization_spread() < 1e-9


def test_relation_II_holds_for_every_prefactor():
    p = EvalPoint(0.6, 1.9, 3)
    for norm in ("pi", "2pi", "one", 7.5):
        a, b, r = C.relation_II().residual(p, EvalContext(norm=norm))
        assert r < 1e-10 * max(abs(a), abs(b))


def test_residual_table_csv(tmp_path):
    tab = C.verify_relation_I([(0.5, 2), (2.0, 3)])
    path = tmp_path / "res.csv"
    text = tab.to_csv(path)
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert rows[0] == ["y1", "y2", "m", "lhs", "rhs", "residual", "quadrature_error"]
    assert len(rows) == 3
    assert list(csv.reader(io.StringIO(text))) == rows


def test_failed_point_is_marked_and_run_continues():
    bad = C.Identity("bad", H(1, 1, args=(Const(2.0),)), Const(0.0), 1)
    tab = check_identity(bad, [EvalPoint(0.5), EvalPoint(2.0)])
    assert not tab.passed
    assert all(r.note.startswith("evaluation failed") for r in tab.rows)


def test_threaded_check_matches_serial():
    pts = random_points(2, 8, np.random.default_rng(11))
    a = check_identity(C.relation_II(), pts)
    b = check_identity(C.relation_II(), pts, threads=4)
    assert [r.residual for r in a.rows] == [r.residual for r in b.rows]
