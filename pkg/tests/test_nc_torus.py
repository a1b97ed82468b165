import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nctheat import nc_torus as T
from nctheat.nc_torus import FourierElement as FE
from nctheat.nc_torus import Theta, TorusError, delta, modular_fn, trace0, twisted_mul

TH = Theta.two(0.3)


def U(theta, *l):
    return FE.monomial(theta, l)


def rand(theta, L, seed, **kw):
    return FE.random(theta, L, np.random.default_rng(seed), **kw)


def close(a, b, tol=1e-12):
    return a.distance(b) <= tol * max(1.0, a.norm(), b.norm())


# ---------------------------------------------------------------- structure

def test_theta_must_be_skew():
    with pytest.raises(TorusError):
        Theta.from_array([[0.0, 0.3], [0.3, 0.0]])
    with pytest.raises(TorusError):
        Theta.from_array([[0.0, 0.3, 0.1]])


def test_generator_relation():
    u1, u2 = U(TH, 1, 0), U(TH, 0, 1)
    lhs = twisted_mul(u1, u2, "full")
    rhs = twisted_mul(u2, u1, "full") * np.exp(2j * np.pi * TH.array[1, 0])
    assert close(lhs, rhs)
    assert not close(lhs, twisted_mul(u2, u1, "full"))


def test_commutative_when_theta_vanishes():
    th = Theta.zero(2)
    f, g = rand(th, 2, 0), rand(th, 2, 1)
    assert close(twisted_mul(f, g, "full"), twisted_mul(g, f, "full"))
    # convolution of coefficients
    fg = twisted_mul(f, g, "full")
    assert fg[(1, -1)] == pytest.approx(sum(f[(a, b)] * g[(1 - a, -1 - b)]
                                            for a in range(-2, 3) for b in range(-2, 3)), abs=1e-12)


def test_trace_examples():
    assert trace0(FE.one(TH)) == 1
    for l in ((1, 0), (0, -2), (3, 1)):
        assert trace0(U(TH, *l)) == 0


def test_delta_examples():
    assert close(delta(1, U(TH, 1, 0)), U(TH, 1, 0))
    assert delta(2, FE.one(TH)).norm() == 0
    with pytest.raises(TorusError):
        delta(3, FE.one(TH))


def test_nabla_phase():
    f = rand(TH, 2, 2)
    assert close(T.nabla(1, f), delta(1, f) * 1j)


def test_adjoint_of_monomial_is_inverse():
    w = twisted_mul(U(TH, 0, 1), U(TH, 1, 0))
    assert close(twisted_mul(w, w.adjoint()), FE.one(TH, 1))


def test_resize_records_spill():
    f = rand(TH, 3, 3)
    g = f.resize(1)
    assert g.spill > 0
    assert g.resize(3).resize(1).distance(g) == 0


def test_mismatched_tori():
    with pytest.raises(TorusError):
        FE.one(TH) + FE.one(Theta.two(0.5))


def test_monomial_length_checked():
    with pytest.raises(TorusError):
        FE.monomial(TH, (1, 2, 3))


# ---------------------------------------------------------------- algebra properties

def algebra_case(seed: int, m: int = 2, L: int = 3) -> dict[str, float]:
    """Defects of the algebraic identities on one random instance."""
    rng = np.random.default_rng(seed)
    th = Theta.from_array(_skew(rng, m))
    f, g, h = (FE.random(th, L, rng, decay=0.7) for _ in range(3))
    s = int(rng.integers(1, m + 1))
    mul = lambda a, b: twisted_mul(a, b, "full")
    fg = mul(f, g)
    out = {
        "trace": abs(trace0(fg) - trace0(mul(g, f))),
        "leibniz": delta(s, fg).distance(mul(delta(s, f), g) + mul(f, delta(s, g))),
        "associativity": mul(fg, h).distance(mul(f, mul(g, h))),
        "trace-of-derivative": abs(trace0(delta(s, fg))),
    }
    a = rng.integers(-L, L + 1, m)
    b = rng.integers(-L, L + 1, m)
    ua, ub = FE.monomial(th, a), FE.monomial(th, b)
    ab = mul(ua, ub)
    deg = T.grading_degree(ab)
    out["grading"] = (0.0 if deg is not None and np.array_equal(deg, a + b) else 1.0) + \
        delta(s, ab).distance(ab * float(a[s - 1] + b[s - 1]))
    # a product of odd total degree has no constant term
    if (a.sum() + b.sum()) % 2 == 0:
        b[0] += 1
    out["odd-degree"] = abs(trace0(mul(ua, FE.monomial(th, b))))
    scale = max(1.0, f.norm() * g.norm() * max(1.0, h.norm()))
    return {k: v / scale for k, v in out.items()}


def _skew(rng, m):
    a = rng.uniform(-1, 1, (m, m))
    return np.triu(a, 1) - np.triu(a, 1).T


@settings(max_examples=300)
@given(st.integers(0, 2**31), st.sampled_from([2, 3]))
def test_algebra_properties(seed, m):
    d = algebra_case(seed, m, 3 if m == 2 else 2)
    assert max(d.values()) < 1e-12, d


@settings(max_examples=200)
@given(st.integers(0, 2**31))
def test_trace_of_adjoint_and_positivity(seed):
    f = rand(TH, 3, seed)
    assert trace0(f.adjoint()) == pytest.approx(np.conj(trace0(f)), abs=1e-14)
    ff = twisted_mul(f.adjoint(), f, "full")
    assert trace0(ff).real == pytest.approx(f.norm() ** 2, rel=1e-12)
    assert close(f.adjoint().adjoint(), f)


def test_gns_matrix_represents_product():
    f, g = rand(TH, 2, 4), rand(TH, 2, 5)
    L = 4
    A = T.gns_matrix(f, L)
    assert np.allclose(A @ g.resize(L).coeffs, twisted_mul(f, g, "full").resize(L).coeffs, atol=1e-13)
    assert np.allclose(T.gns_sparse(f, L).toarray(), A, atol=0)
    sa = rand(TH, 2, 6, selfadjoint=True)
    M = T.gns_matrix(sa, L)
    assert np.allclose(M, M.conj().T, atol=1e-13)


# ---------------------------------------------------------------- functional calculus

def _weyl(eps=(0.3, 0.2), L=10):
    return T.cosine_weyl(TH, eps, L)


def test_weyl_power_laws():
    w = _weyl()
    k, kinv = w.power(1.0), w.power(-1.0)
    assert close(twisted_mul(k, kinv).resize(6), FE.one(TH, 6), 1e-10)
    h2 = w.power(0.5)
    assert close((h2 * h2).resize(6), k.resize(6), 1e-10)


def test_self_adjoint_function_exp():
    w = _weyl()
    e = T.self_adjoint_function(w.h, np.exp, 16, L_out=6)
    assert close(e, w.k.resize(6), 1e-10)


def test_non_selfadjoint_rejected():
    with pytest.raises(TorusError):
        T.WeylFactor(U(TH, 1, 0), 4)
    with pytest.raises(TorusError):
        T.self_adjoint_function(U(TH, 1, 0), np.exp, 4)


def test_modular_basis_rejects_nonpositive():
    h = (U(TH, 1, 0) + U(TH, 1, 0).adjoint()) * 0.5
    with pytest.raises(TorusError, match="positive"):
        T.ModularBasis.of(h, 4)
    with pytest.raises(TorusError, match="self-adjoint"):
        T.ModularBasis.of(U(TH, 1, 0), 4)


def test_modular_fn_identity_and_trivial_k():
    w = _weyl()
    a = rand(TH, 2, 7).resize(w.L)
    assert close(modular_fn(lambda y: np.ones_like(y), w.k, a), a, 1e-10)
    one = FE.one(TH, w.L)
    assert close(modular_fn(lambda y: 3 + y, one, a), a * 4, 1e-12)


def test_modular_fn_is_conjugation():
    w = _weyl(L=12)
    a = rand(TH, 1, 8)
    got = modular_fn(lambda y: y, w.k, a.resize(w.L)).resize(4)
    want = (w.power(-1.0) * a.resize(w.L) * w.k).resize(4)
    assert close(got, want, 1e-10)


def test_modular_fn_rank_two_factorizes():
    w = _weyl()
    a, b = rand(TH, 1, 9).resize(w.L), rand(TH, 1, 10).resize(w.L)
    F1, F2 = (lambda y: np.sqrt(y) + 1), (lambda y: 1 / (1 + y))
    two = modular_fn(lambda y1, y2: F1(y1) * F2(y2), w.k, [(a, b)], rank=2)
    one = modular_fn(F1, w.k, a) * modular_fn(F2, w.k, b)
    assert close(two.resize(4), one.resize(4), 1e-9)
    with pytest.raises(TorusError):
        modular_fn(F1, w.k, a, rank=3)


def test_cheb_interpolant_accuracy():
    f = lambda y1, y2: np.log1p(y1) / (1 + y2)
    c = T.ChebInterpolant(f, 2, 1.0, 20)
    ys = np.exp(np.linspace(-0.9, 0.9, 7))
    assert np.allclose(c(ys, ys[::-1]), f(ys, ys[::-1]), rtol=1e-12)
    assert np.allclose(c.outer(ys, ys), f(ys[:, None], ys[None, :]), rtol=1e-12)
    with pytest.raises(TorusError):
        c(np.array([10.0]), np.array([1.0]))


# ---------------------------------------------------------------- formula and heat traces

def test_formula_vanishes_for_flat_metric():
    w = T.WeylFactor(FE.zero(TH, 1), 6)
    assert abs(T.v2_formula_eval(w)) < 1e-14
    assert T.v0_formula_eval(w) == pytest.approx(math.pi)


def test_conjugation_route_for_delta_phi():
    w = T.cosine_weyl(TH, [0.3, 0.2], 8)
    eng = T.v2_element(w, "delta_phi")
    conj = T.v2_element(w, "delta_phi", route="conjugate")
    assert eng.resize(4).distance(conj.resize(4)) < 1e-8
    with pytest.raises(TorusError):
        T.v2_element(w, "delta_k", route="conjugate")


def test_flat_heat_trace_is_exact():
    t = T.fit_window(8)
    tr, mu0 = T.heat_traces(None, TH, 8, t)
    assert np.allclose(tr, T.flat_trace_exact(2, 8, t), rtol=1e-14)
    assert mu0 == 0


def test_flat_fit():
    fit = T.heat_trace_fit(None, TH, 10)
    assert fit.V0.real == pytest.approx(math.pi, rel=1e-6)
    assert abs(fit.V2) < 1e-6
    assert fit.spectrum_min >= 0


def test_fit_window_shape():
    assert T.fit_window(12)[0] == pytest.approx(0.15)
    assert T.fit_window(8)[0] == pytest.approx(25 / 81)
    assert T.fit_window(8)[-1] == 0.4


def test_fit_needs_enough_points():
    with pytest.raises(TorusError):
        T.heat_trace_fit(None, TH, 4, [0.2, 0.3])


def test_heat_operator_spectrum_nonnegative():
    w = T.cosine_weyl(TH, [0.5, 0.3], 6)
    P = T.heat_operator(w, TH, 6)
    mu = np.linalg.eigvalsh((P + P.conj().T) / 2)
    assert mu[0] > -1e-8 * np.max(np.abs(mu))
    assert np.allclose(P, P.conj().T, atol=1e-10)


def test_weighted_trace_reduces_to_plain_trace():
    w = T.cosine_weyl(TH, [0.2, 0.1], 6)
    t = [0.2, 0.3]
    a, _ = T.heat_traces(w, TH, 6, t, FE.one(TH))
    b, _ = T.heat_traces(w, TH, 6, t)
    assert np.allclose(a, b, rtol=1e-12)


def test_v0_matches_fit():
    w = T.cosine_weyl(TH, [0.2, 0.0], 10)
    fit = T.heat_trace_fit(w, TH, 10)
    assert fit.V0.real == pytest.approx(T.v0_formula_eval(T.cosine_weyl(TH, [0.2, 0.0], 8)).real, rel=1e-5)


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.7071])
def test_cross_check_noncommutative_weight(theta):
    th = Theta.two(theta)
    u1, u2 = U(th, 1, 0), U(th, 0, 1)
    w = twisted_mul(u2, u1)
    a = FE.one(th) + (u1 + u1.adjoint()) * 0.5 + (w + w.adjoint()) * 0.3
    L = 10
    v = T.v2_formula_eval(T.cosine_weyl(th, [0.2, 0.14], 8), a)
    fit = T.heat_trace_fit(T.cosine_weyl(th, [0.2, 0.14], L), th, L, a=a)
    assert abs(fit.V2 - v) / max(abs(v), 0.04) < 0.05


def test_weighted_v2_is_linear_in_a_pure_mode():
    # the U_1 mode of v_2 is first order in h; the U_1 U_2 mode is higher order
    u1, u11 = U(TH, 1, 0), U(TH, 1, 1)
    def val(e, w):
        return T.v2_formula_eval(T.cosine_weyl(TH, [e, 0.7 * e], 8), FE.one(TH) + w + w.adjoint())
    assert abs(val(0.1, u1) / val(0.05, u1)) == pytest.approx(2.0, rel=0.05)
    assert abs(val(0.1, u11) / val(0.05, u11)) > 8


def test_fit_csv():
    fit = T.heat_trace_fit(None, TH, 6)
    text = fit.to_csv()
    assert text.splitlines()[0] == "schema_version,1"
    assert "V2" in text


def test_weyl_file_round_trip(tmp_path):
    w = _weyl((0.3, 0.2), 4)
    p = tmp_path / "h.txt"
    T.write_weyl_file(p, w.h)
    back = T.read_weyl_file(p, TH, 4)
    assert back.h.distance(w.h) == 0


def test_weyl_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 0 0.5\n")
    with pytest.raises(TorusError, match="expected"):
        T.read_weyl_file(p, TH, 4)
    p.write_text("1 0 0.5 0.0\n")  # not self-adjoint
    with pytest.raises(TorusError):
        T.read_weyl_file(p, TH, 4)
