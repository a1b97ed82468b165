"""Acceptance criteria; a one-line verdict per criterion is printed in the terminal summary."""
import time

import numpy as np
import pytest

from nctheat import conformal as C
from nctheat import nc_torus as T
from nctheat import rearrange as R
from nctheat.heat2 import (PolyM, _templates, compare_terms, golden_components, symmetrization_split, v2_components,
                           v2_conformal)
from nctheat.symcalc import QI, compare_b2, general_operator
from test_nc_torus import algebra_case

criterion = pytest.mark.criterion


@criterion(1, "symbolic b2 reproduction")
def test_criterion_1_b2_symbolic():
    t0 = time.perf_counter()
    dI, dII = compare_b2(general_operator(2))
    dt = time.perf_counter() - t0
    assert dt < 5.0
    assert dI.is_zero(), f"part I differs in {len(dI.terms)} terms"
    # the hand-entered part II omits i sum_s b0^2 (D_s p2) p1 b0 (nabla_s p2) b0
    assert dII.is_zero(), f"part II differs in {len(dII.terms)} terms"


@criterion(2, "v2 component reproduction")
def test_criterion_2_components():
    t0 = time.perf_counter()
    for m in (2, 3):
        eng = {t.key: t.coeff for t in v2_components(m)}
        assert compare_terms(eng, golden_components(m, literal=False)) == {}, m
    coeffs = {t.name: t.coeff for t in _templates(False)}
    assert coeffs["I,2,1 k∇²k"] == QI(-2)
    assert coeffs["I,3,1"] == QI(4)
    assert coeffs["II,3,1,1"] == QI(-8)
    assert coeffs["II,2,2,1"] == QI(-4)
    by_name = {t.name: t for t in _templates(False)}
    assert sorted(symmetrization_split(by_name["I,3,1"]).values()) == [8, 16]
    assert sorted(symmetrization_split(by_name["II,3,1,1"]).values()) == [48, 96, 96, 96, 384]
    assert time.perf_counter() - t0 < 30.0


@criterion(3, "conformal coefficients")
def test_criterion_3_conformal():
    res = v2_conformal("delta_k")
    q = lambda *cs: PolyM([QI(c) for c in cs])
    from fractions import Fraction as F
    assert {(t.alpha, t.zpow): t.coeff for t in res.G_I} == {((3, 1), 0): q(2, 1), ((2, 1), 0): q(0, F(-1, 2))}
    assert {(t.alpha, t.zpow): t.coeff for t in res.G_II} == {
        ((3, 1, 1), 0): q(-8, -6, -1),
        ((2, 2, 1), 1): q(-4, -3, F(-1, 2)),
        ((2, 1, 1), 0): q(2, 2, F(1, 2)),
    }


@criterion(4, "oracle suite")
def test_criterion_4_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        l = [1] * (n + 1)
        for _ in range(int(rng.integers(0, 6 - n))):
            l[int(rng.integers(0, n + 1))] += 1
        A = rng.uniform(0.5, 4.0, n + 1)
        worst = max(worst, abs(R.simplex_G(l, A) - R.contour_G(l, A)))
    assert worst < 1e-6
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(1, 5))
        X = rng.normal(size=(m, m))
        B = X @ X.T + 0.5 * m * np.eye(m)
        e = [0] * m
        for _ in range(int(rng.integers(0, 7))):
            e[int(rng.integers(0, m))] += 1
        poly = {tuple(e): 1.0}
        a = R.gaussian_moment(B, poly, method="series")
        b = R.gaussian_moment(B, poly, method="wick")
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    assert worst < 1e-12
    assert time.perf_counter() - t0 < 120.0


@criterion(5, "functional relations I and II")
def test_criterion_5_relations():
    t0 = time.perf_counter()
    grid_I = [(y, m) for y in (0.25, 0.5, 0.8, 1.25, 2.0, 4.0) for m in (2, 3, 4, 5)]
    tab = C.verify_relation_I(grid_I, tol=1e-8)
    assert len(tab.rows) == 24 and tab.passed, tab.max_residual
    ys = (0.5, 0.8, 1.25, 2.0)
    grid_II = [(a, b, m) for a in ys for b in ys for m in (2, 4)]
    tab = C.verify_relation_II(grid_II, tol=1e-6)
    assert len(tab.rows) >= 32 and tab.passed, tab.max_residual
    assert time.perf_counter() - t0 < 600.0


@criterion(6, "recurrence and transform suite")
def test_criterion_6_recurrences():
    rng = np.random.default_rng(6)
    wanted = {"remove-H131", "remove-H122", "H12(z1)", "H12(z2)", "H21-as-Habc", "VI-vanishes"}
    idents = C.recurrences()
    assert wanted <= {i.name for i in idents}
    assert any(i.name.startswith("tau1-on-") for i in idents)
    assert any(i.name.startswith("tau2sq-on-") for i in idents)
    for ident in idents:
        tab = C.check_identity(ident, C.random_points(ident.nvar, 20, rng), tol=1e-8)
        assert tab.passed, (ident.name, tab.max_residual)
    atoms1 = [C.H(1, 1), C.H(2, 1), C.H(3, 1), C.H(1, 3)]
    atoms2 = [C.H(1, 1, 1), C.H(2, 1, 1), C.H(1, 2, 1), C.H(2, 2, 1), C.H(3, 1, 1)]
    for i, p in enumerate(C.random_points(1, 20, rng)):
        f = atoms1[i % len(atoms1)]
        for rules in (False, True):
            assert abs(C.tau1(C.tau1(f, rules=rules), rules=rules).evaluate(p) - f.evaluate(p)) < 1e-8
    for i, p in enumerate(C.random_points(2, 20, rng)):
        f = atoms2[i % len(atoms2)]
        for rules in (False, True):
            g = C.tau2(C.tau2(C.tau2(f, rules=rules), rules=rules), rules=rules)
            assert abs(g.evaluate(p) - f.evaluate(p)) < 1e-8


@criterion(7, "end-to-end heat trace")
def test_criterion_7_heat_trace():
    t0 = time.perf_counter()
    theta, L = T.Theta.two(0.3), 12
    flat = T.heat_trace_fit(None, theta, L)
    assert abs(flat.V2) < 1e-6
    for eps in (0.1, 0.2):
        v = T.v2_formula_eval(T.cosine_weyl(theta, [eps, 0.0], 8))
        fit = T.heat_trace_fit(T.cosine_weyl(theta, [eps, 0.0], L), theta, L)
        err = abs(fit.V2 - v) / max(abs(v), eps ** 2)
        assert err < 0.05, (eps, v, fit.V2)
    assert time.perf_counter() - t0 < 300.0


@criterion(8, "algebra property suite")
def test_criterion_8_algebra():
    failures = []
    for seed in range(1000):
        d = algebra_case(seed, 2 if seed % 4 else 3, 3 if seed % 4 else 2)
        if max(d.values()) >= 1e-12:
            failures.append((seed, d))
    assert not failures, failures[:3]
