"""Hypergeometric simplex integrals behind the rearrangement lemma.

Everything here is plain numerics on commuting (scalar) inputs: the weight
``omega_alpha``, an adaptive Grundmann-Moeller cubature on the standard
simplex, the two oracles (contour integral and Gaussian moments) and the
spectral functions ``F_alpha``, the diagonal ``sfF`` and the conformal
``H_alpha``.

Normalization conventions
-------------------------
``omega_weight`` follows the published definition, whose Gamma product runs
over ``alpha_1..alpha_n`` only.  The contour oracle shows that the
rearrangement lemma needs the full product ``Gamma(alpha_0)...Gamma(alpha_n)``,
so every integral built on top of the weight (``simplex_G``, ``F_component``,
``sfF``, ``H_alpha``) divides by ``Gamma(alpha_0)`` as well unless
``gamma0=False`` is passed.  The Gaussian prefactor ``c(m)`` is selected with
``norm`` (``"2pi"`` by default, ``"pi"`` for the value of the actual Gaussian
integral, ``"one"`` to drop it).
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "QuadratureError",
    "DomainError",
    "ContourTailError",
    "QuadratureRule",
    "IntegrationResult",
    "norm_constant",
    "check_multiindex",
    "omega_weight",
    "grundmann_moeller",
    "simplex_integrate",
    "contour_G",
    "simplex_G",
    "gaussian_moment",
    "wick_moment",
    "F_component",
    "sfF",
    "H_alpha",
    "H_prior",
    "hnow_over_hbefore",
]


class QuadratureError(RuntimeError):
    """Adaptive cubature did not reach the requested tolerance."""

    def __init__(self, message, worst_cell=None, estimate=None):
        super().__init__(message)
        self.worst_cell = worst_cell
        self.estimate = estimate


class DomainError(ValueError):
    """An integrand has a pole (or branch point) on the simplex."""


class ContourTailError(RuntimeError):
    """The truncated line integral cannot meet the tolerance."""

    def __init__(self, message, tail_estimate):
        super().__init__(message)
        self.tail_estimate = tail_estimate


def norm_constant(m: float, norm="2pi") -> float:
    """Value of the Gaussian prefactor c(m)."""
    if isinstance(norm, (int, float)) and not isinstance(norm, bool):
        return float(norm)
    if callable(norm):
        return float(norm(m))
    if norm == "2pi":
        return (2.0 * math.pi) ** (m / 2.0)
    if norm == "pi":
        return math.pi ** (m / 2.0)
    if norm == "one":
        return 1.0
    raise ValueError(f"unknown normalization {norm!r} (expected 'pi', '2pi' or 'one')")


def check_multiindex(alpha: Sequence[int]) -> tuple[int, ...]:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) < 1:
        raise ValueError("multi-index must have at least one entry")
    if any(a < 1 for a in alpha):
        raise ValueError(f"multi-index entries must be >= 1, got {alpha}")
    return alpha


def _gamma_prod(alpha, gamma0: bool) -> float:
    start = 0 if gamma0 else 1
    return math.prod(math.gamma(a) for a in alpha[start:])


def omega_weight(alpha: Sequence[int], u) -> np.ndarray | float:
    """The weight (prod_{l>=1} Gamma(alpha_l))^{-1} (1-sum u)^{alpha_0-1} prod u_l^{alpha_l-1}.

    ``u`` is a point of the n-simplex or an array of points of shape (K, n).
    """
    alpha = check_multiindex(alpha)
    n = len(alpha) - 1
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    pts = u.reshape(1, -1) if single else u
    if pts.shape[1] != n:
        raise ValueError(f"point dimension {pts.shape[1]} does not match n = {n} of alpha {alpha}")
    val = _omega_raw(alpha, pts) / _gamma_prod(alpha, gamma0=False)
    return float(val[0]) if single else val


def _omega_raw(alpha, pts: np.ndarray) -> np.ndarray:
    u0 = 1.0 - pts.sum(axis=1)
    val = u0 ** (alpha[0] - 1)
    for l, a in enumerate(alpha[1:]):
        val = val * pts[:, l] ** (a - 1)
    return val


# ---------------------------------------------------------------------------
# cubature on the simplex
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Cubature rule on the reference simplex {u >= 0, sum u <= 1}.

    ``bary`` holds barycentric coordinates of the nodes (vertex 0 is the
    origin, vertex j is e_j), so ``nodes = bary[:, 1:]``.
    """

    dimension: int
    bary: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def nodes(self) -> np.ndarray:
        return self.bary[:, 1:]


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def grundmann_moeller(n: int, s: int) -> QuadratureRule:
    """Grundmann-Moeller rule of degree 2s+1 on the n-simplex (volume 1/n!)."""
    if n < 0 or s < 0:
        raise ValueError("need n >= 0 and s >= 0")
    d = 2 * s + 1
    bary, weights = [], []
    for i in range(s + 1):
        denom = d + n - 2 * i
        w = (-1) ** i * 2.0 ** (-2 * s) * denom**d / (math.factorial(i) * math.factorial(d + n - i))
        for beta in _compositions(s - i, n + 1):
            bary.append([(2 * b + 1) / denom for b in beta])
            weights.append(w)
    return QuadratureRule(n, np.array(bary, dtype=float), np.array(weights), d)


@lru_cache(maxsize=None)
def _child_bary(n: int) -> np.ndarray:
    """Barycentric vertex arrays of the 2^n Freudenthal children of a simplex.

    Uses the Kuhn picture: u -> x with x_i = u_i + ... + u_n maps the simplex to
    {1 >= x_1 >= ... >= x_n >= 0}; halving the cube and keeping the Kuhn
    simplices inside that region gives a congruent subdivision.
    """
    children = []
    for corner in itertools.product((0.0, 0.5), repeat=n):
        c = np.array(corner)
        for perm in itertools.permutations(range(n)):
            verts = [c.copy()]
            cur = c.copy()
            for p in perm:
                cur = cur.copy()
                cur[p] += 0.5
                verts.append(cur)
            verts = np.array(verts)
            centroid = verts.mean(axis=0)
            ok = centroid[0] < 1 and centroid[-1] > 0 and np.all(np.diff(centroid) < 0)
            if not ok:
                continue
            u = verts - np.append(verts[:, 1:], np.zeros((n + 1, 1)), axis=1)
            b = np.column_stack([1.0 - u.sum(axis=1), u])
            children.append(b)
    out = np.array(children)
    assert out.shape[0] == 2**n
    return out


@dataclass
class IntegrationResult:
    value: float | np.ndarray
    error: float
    cells: int
    evaluations: int

    def __float__(self):
        return float(self.value)


def _cell_rules(f, verts, hi: QuadratureRule, lo: QuadratureRule):
    """Integrate f over a batch of cells with the rule pair; returns (Q_hi, Q_lo)."""
    n = hi.dimension
    c = verts.shape[0]
    edge = verts[:, 1:, :] - verts[:, :1, :]
    vol_scale = np.abs(np.linalg.det(edge)) if n > 0 else np.ones(c)
    out = []
    for rule in (hi, lo):
        pts = np.einsum("kb,cbn->ckn", rule.bary, verts).reshape(-1, n)
        vals = np.asarray(f(pts), dtype=float)
        vals = vals.reshape(c, rule.bary.shape[0], *vals.shape[1:])
        q = np.einsum("k,ck...->c...", rule.weights, vals)
        q = q * vol_scale.reshape((c,) + (1,) * (q.ndim - 1))
        out.append(q)
    return out[0], out[1], c * (hi.bary.shape[0] + lo.bary.shape[0])


def simplex_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    n: int,
    rule: QuadratureRule | None = None,
    *,
    tol: float = 1e-10,
    atol: float = 1e-15,
    max_depth: int = 12,
    max_cells: int = 200_000,
    s: int = 7,
) -> IntegrationResult:
    """Adaptive cubature of ``f`` over the standard n-simplex.

    ``f`` receives an array of points of shape (K, n) and returns values of
    shape (K,) or (K, P) for P simultaneous integrands.  The local error
    estimate of a cell is the difference between the Grundmann-Moeller rules
    of degrees 2s+1 and 2s-1 (``rule`` overrides the higher one); the worst
    cells are split into their 2^n Freudenthal children until the total
    estimate drops below ``max(atol, tol*|value|)``.
    """
    if n == 0:
        v = np.asarray(f(np.zeros((1, 0))), dtype=float)[0]
        return IntegrationResult(v if np.ndim(v) else float(v), 0.0, 1, 1)
    hi = rule if rule is not None else grundmann_moeller(n, s)
    if hi.dimension != n:
        raise ValueError("rule dimension does not match n")
    lo = grundmann_moeller(n, max((hi.order - 1) // 2 - 1, 0))
    children = _child_bary(n)

    ref = np.vstack([np.zeros(n), np.eye(n)])[None, :, :]
    q_hi, q_lo, evals = _cell_rules(f, ref, hi, lo)
    # heap of (-error, counter, depth, verts, value)
    def err_of(a, b):
        return float(np.max(np.abs(a - b)))

    heap = [(-err_of(q_hi[0], q_lo[0]), 0, 0, ref[0], q_hi[0])]
    counter = 1
    total = q_hi[0].copy()
    total_err = -heap[0][0]
    while True:
        scale = float(np.max(np.abs(total))) if np.ndim(total) else abs(float(total))
        target = max(atol, tol * scale)
        if total_err <= target:
            break
        if len(heap) >= max_cells:
            worst = heap[0]
            raise QuadratureError(
                f"simplex cubature: {len(heap)} cells, error estimate {total_err:.3e} > {target:.3e}",
                worst_cell=worst[3], estimate=total_err)
        # split every cell whose error is within a factor 4 of the worst one
        worst_err = -heap[0][0]
        batch = []
        while heap and -heap[0][0] >= worst_err / 4:
            batch.append(heapq.heappop(heap))
        if any(item[2] >= max_depth for item in batch):
            worst = max(batch, key=lambda it: -it[0])
            raise QuadratureError(
                f"simplex cubature: maximal depth {max_depth} reached, error estimate {total_err:.3e}",
                worst_cell=worst[3], estimate=total_err)
        parent_verts = np.array([item[3] for item in batch])
        kids = np.einsum("jab,cbn->cjan", children, parent_verts).reshape(-1, n + 1, n)
        k_hi, k_lo, ev = _cell_rules(f, kids, hi, lo)
        evals += ev
        for item in batch:
            total = total - item[4]
            total_err -= -item[0]
        per = children.shape[0]
        for ci, item in enumerate(batch):
            for j in range(per):
                idx = ci * per + j
                e = err_of(k_hi[idx], k_lo[idx])
                heapq.heappush(heap, (-e, counter, item[2] + 1, kids[idx], k_hi[idx]))
                counter += 1
                total = total + k_hi[idx]
                total_err += e
        total_err = max(total_err, 0.0)
    value = total if np.ndim(total) else float(total)
    return IntegrationResult(value, total_err, len(heap), evals)


# ---------------------------------------------------------------------------
# contour oracle and the simplex side of the contour lemma
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def contour_G(l: Sequence[int], A: Sequence[float], *, tol: float = 1e-10,
              max_X: float = 1e6, panel: float = 1.0) -> float:
    """(1/2pi) * integral over the real line of e^{-ix} prod_j (A_j - ix)^{-l_j} dx.

    Gauss-Legendre panels cover [-X, X]; the two tails are replaced by the
    first three terms of their integration-by-parts expansion.  X is picked so
    the next term of that expansion is below ``tol``.
    """
    l = check_multiindex(l)
    A = np.asarray(A, dtype=float)
    if A.shape != (len(l),):
        raise ValueError("A must have one entry per entry of l")
    if np.any(A <= 0):
        raise ValueError("contour_G needs positive A_j")
    lv = np.array(l, dtype=float)
    order = lv.sum()

    def g_and_derivs(x):
        w = A[None, :] - 1j * np.asarray(x, dtype=float)[:, None]
        g = np.exp(-(lv[None, :] * np.log(w)).sum(axis=1))
        s1 = (1j * lv[None, :] / w).sum(axis=1)
        s2 = (-lv[None, :] / w**2).sum(axis=1)
        s3 = (-2j * lv[None, :] / w**3).sum(axis=1)
        g1 = g * s1
        g2 = g * (s1**2 + s2)
        g3 = g * (s1**3 + 3 * s1 * s2 + s3)
        return g, g1, g2, g3

    amp = float(np.prod(A ** (-lv)))
    X = max(40.0, (10.0 * (order + 3) ** 3 * max(amp, 1.0) / tol) ** (1.0 / (order + 3)))
    X = math.ceil(X / panel) * panel
    if X > max_X:
        _, _, _, g3 = g_and_derivs(np.array([max_X]))
        raise ContourTailError(
            f"contour_G: truncation X={X:.3g} exceeds max_X={max_X:.3g}", float(abs(g3[0])))
    edges = np.arange(-X, X + 0.5 * panel, panel)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    g, _, _, _ = g_and_derivs(x)
    core = np.sum(w * np.exp(-1j * x) * g)
    gp = g_and_derivs(np.array([X]))
    gm = g_and_derivs(np.array([-X]))
    tail_plus = -1j * np.exp(-1j * X) * (gp[0] - 1j * gp[1] - gp[2])[0]
    tail_minus = 1j * np.exp(1j * X) * (gm[0] - 1j * gm[1] - gm[2])[0]
    remainder = float(abs(gp[3][0]) + abs(gm[3][0]))
    if remainder > tol:
        raise ContourTailError(f"contour_G: tail remainder {remainder:.3e} above tolerance", remainder)
    total = (core + tail_plus + tail_minus) / (2 * math.pi)
    return float(total.real)


def simplex_G(l: Sequence[int], A: Sequence[float], *, gamma0: bool = True,
              tol: float = 1e-12) -> float:
    """Simplex side of the contour lemma.

    Integral over the n-simplex of omega_l(u) exp(-(A_0(1-sum u) + sum A_j u_j)),
    divided by Gamma(l_0) when ``gamma0`` is set (the convention the contour
    oracle selects).
    """
    l = check_multiindex(l)
    A = np.asarray(A, dtype=float)
    n = len(l) - 1
    if A.shape != (n + 1,):
        raise ValueError("A must have one entry per entry of l")
    g0 = math.gamma(l[0]) if gamma0 else 1.0
    if n == 0:
        return math.exp(-A[0]) / g0

    def integrand(pts):
        u0 = 1.0 - pts.sum(axis=1)
        expo = A[0] * u0 + pts @ A[1:]
        return omega_weight(l, pts) * np.exp(-expo)

    return float(simplex_integrate(integrand, n, tol=tol).value) / g0


# ---------------------------------------------------------------------------
# Gaussian integrals of polynomials
# ---------------------------------------------------------------------------

Poly = Mapping[tuple[int, ...], float]


def _check_spd(B: np.ndarray) -> np.ndarray:
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != B.shape[1] or not np.allclose(B, B.T, atol=1e-13):
        raise ValueError("B must be a symmetric square matrix")
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise ValueError("B must be positive definite") from exc
    return B


def _apply_laplace_type(poly: dict, Binv: np.ndarray) -> dict:
    """One application of (1/4) sum_ij (B^-1)_ij d_i d_j to a polynomial dict."""
    m = Binv.shape[0]
    out: dict = {}
    for e, c in poly.items():
        for i in range(m):
            for j in range(m):
                if Binv[i, j] == 0:
                    continue
                e2 = list(e)
                coef = c * e2[i]
                if coef == 0:
                    continue
                e2[i] -= 1
                coef *= e2[j]
                if coef == 0:
                    continue
                e2[j] -= 1
                k = tuple(e2)
                out[k] = out.get(k, 0.0) + 0.25 * Binv[i, j] * coef
    return out


def _perfect_matching_sum(idx: list[int], cov: np.ndarray) -> float:
    if not idx:
        return 1.0
    first, rest = idx[0], idx[1:]
    total = 0.0
    for p in range(len(rest)):
        partner = rest[p]
        c = cov[first, partner]
        if c == 0:
            continue
        total += c * _perfect_matching_sum(rest[:p] + rest[p + 1:], cov)
    return total


def wick_moment(B, exponent: Sequence[int]) -> float:
    """Isserlis' formula for the integral of e^{-xi^T B xi} xi^exponent.

    The covariance of the normalized Gaussian is B^{-1}/2; the prefactor is
    pi^{m/2}/sqrt(det B).
    """
    B = _check_spd(B)
    m = B.shape[0]
    exponent = tuple(int(e) for e in exponent)
    if sum(exponent) % 2:
        return 0.0
    cov = np.linalg.inv(B) / 2.0
    idx = [i for i in range(m) for _ in range(exponent[i])]
    pre = math.pi ** (m / 2) / math.sqrt(np.linalg.det(B))
    return pre * _perfect_matching_sum(idx, cov)


def gaussian_moment(B, f: Poly, *, method: str = "both", rtol: float = 1e-12) -> float:
    """Integral over R^m of e^{-xi^T B xi} f(xi).

    ``f`` maps exponent tuples to coefficients.  ``method="series"`` applies
    pi^{m/2}/sqrt(det B) exp((1/4) sum (B^-1)_ij d_i d_j) f at 0,
    ``method="wick"`` uses Isserlis' theorem, and ``"both"`` computes the two
    and raises ``ArithmeticError`` if they disagree.
    """
    B = _check_spd(B)
    m = B.shape[0]
    poly = {tuple(int(x) for x in e): float(c) for e, c in f.items() if c != 0}
    for e in poly:
        if len(e) != m:
            raise ValueError("monomial length does not match the dimension of B")
    pre = math.pi ** (m / 2) / math.sqrt(np.linalg.det(B))

    def by_series():
        Binv = np.linalg.inv(B)
        cur = dict(poly)
        total, fact = 0.0, 1.0
        zero = (0,) * m
        N = 0
        while cur:
            total += cur.get(zero, 0.0) / fact
            cur = {k: v for k, v in _apply_laplace_type(cur, Binv).items() if v != 0}
            N += 1
            fact *= N
        return pre * total

    def by_wick():
        return sum(c * wick_moment(B, e) for e, c in poly.items())

    if method == "series":
        return by_series()
    if method == "wick":
        return by_wick()
    if method != "both":
        raise ValueError("method must be 'series', 'wick' or 'both'")
    a, b = by_series(), by_wick()
    scale = max(1.0, abs(a), abs(b))
    if abs(a - b) > rtol * scale:
        raise ArithmeticError(f"series {a!r} and Wick {b!r} disagree")
    return a


# ---------------------------------------------------------------------------
# spectral functions F_alpha, sfF and H_alpha
# ---------------------------------------------------------------------------


def _weight_fn(alpha, gamma0):
    const = 1.0 / _gamma_prod(alpha, gamma0)

    def w(pts):
        return const * _omega_raw(alpha, pts)

    return w


def F_component(alpha: Sequence[int], A: Sequence, pairs: Sequence[tuple[int, int]] = (),
                m: int | None = None, *, norm="2pi", gamma0: bool = True,
                tol: float = 1e-11) -> float:
    """Component F_alpha(A)_{(l1 l2)...(l_{2N-1} l_{2N})} for scalar-entry matrices.

    Indices in ``pairs`` are 1-based.  The integrand is
    omega(u) c(m)/sqrt(det B(u)) prod (B(u)^-1)_{pair} with
    B(u) = A_0 (1 - sum u) + sum A_l u_l, and the result carries 1/(4^N N!).
    """
    alpha = check_multiindex(alpha)
    n = len(alpha) - 1
    mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
    if len(mats) != n + 1:
        raise ValueError(f"need {n + 1} matrices for alpha {alpha}")
    mm = mats[0].shape[0]
    if m is not None and m != mm:
        raise ValueError("m does not match the matrix size")
    for a in mats:
        _check_spd(a)
    pairs = [(int(i) - 1, int(j) - 1) for i, j in pairs]
    for i, j in pairs:
        if not (0 <= i < mm and 0 <= j < mm):
            raise ValueError("pair index out of range")
    N = len(pairs)
    c = norm_constant(mm, norm)
    weight = _weight_fn(alpha, gamma0)
    stack = np.array(mats)

    def integrand(pts):
        coeffs = np.column_stack([1.0 - pts.sum(axis=1), pts])
        B = np.einsum("kj,jab->kab", coeffs, stack)
        det = np.linalg.det(B)
        if np.any(det <= 0):
            raise AssertionError("B_n(u) is singular at a cubature node")
        val = weight(pts) * c / np.sqrt(det)
        if pairs:
            Binv = np.linalg.inv(B)
            for i, j in pairs:
                val = val * Binv[:, i, j]
        return val

    if n == 0:
        return float(integrand(np.zeros((1, 0)))[0]) / (4**N * math.factorial(N))
    res = simplex_integrate(integrand, n, tol=tol)
    return float(res.value) / (4**N * math.factorial(N))


def _check_rows(z: np.ndarray):
    # the linear forms 1 - sum_l z_j^(l) u_l are smallest at a vertex
    for j in range(z.shape[0]):
        worst = 1.0 - max(0.0, float(np.max(z[j]))) if z.shape[1] else 1.0
        if worst <= 0:
            raise DomainError(f"row {j + 1} of z: 1 - sum z u vanishes on the simplex (z row {z[j].tolist()})")


def sfF(alpha: Sequence[int], z, s_list: Sequence[int] = (), m: int | None = None, *,
        norm="2pi", gamma0: bool = True, tol: float = 1e-12) -> float:
    """Diagonal spectral function sfF_alpha(z)_{s_1..s_N}.

    ``z`` is an m x n array with entries z_j^(l); ``s_list`` holds 1-based
    indices.  Integrand: c(m) omega(u) (det Z)^{-1/2} prod_l Z_{s_l s_l}^{-1}
    with Z = diag(1 - sum_l z_j^(l) u_l).
    """
    alpha = check_multiindex(alpha)
    n = len(alpha) - 1
    z = np.asarray(z, dtype=float).reshape(-1, n) if n else np.zeros((m or 1, 0))
    mm = z.shape[0]
    if m is not None and m != mm:
        raise ValueError("m does not match the number of rows of z")
    s_idx = [int(s) - 1 for s in s_list]
    if any(not 0 <= s < mm for s in s_idx):
        raise ValueError("s index out of range")
    _check_rows(z)
    c = norm_constant(mm, norm)
    weight = _weight_fn(alpha, gamma0)
    counts = np.bincount(np.array(s_idx, dtype=int), minlength=mm) if s_idx else np.zeros(mm)
    power = 0.5 + counts

    def integrand(pts):
        Z = 1.0 - pts @ z.T
        return c * weight(pts) * np.prod(Z ** (-power[None, :]), axis=1)

    if n == 0:
        return float(integrand(np.zeros((1, 0)))[0])
    return float(simplex_integrate(integrand, n, tol=tol).value)


def H_alpha(alpha: Sequence[int], zbar, m: float, j: float = 2, *, norm="2pi",
            gamma0: bool = True, tol: float = 1e-12):
    """Conformal spectral function sfH_alpha(zbar; m; j).

    c(m) times the integral of omega(u) (1 - sum z^(l) u_l)^{-m/2-|alpha|+j/2+1}.
    ``zbar`` may be a single point (length n) or an array (P, n); the second
    form integrates all points at once and returns an array.
    """
    alpha = check_multiindex(alpha)
    n = len(alpha) - 1
    zb = np.asarray(zbar, dtype=float)
    single = zb.ndim <= 1
    zb = zb.reshape(1, n) if single else zb.reshape(-1, n)
    if n and np.any(zb >= 1):
        bad = int(np.argwhere(np.any(zb >= 1, axis=1))[0][0])
        raise DomainError(f"z-point {zb[bad].tolist()} puts a singularity on the simplex")
    expo = -m / 2.0 - sum(alpha) + j / 2.0 + 1.0
    c = norm_constant(m, norm)
    weight = _weight_fn(alpha, gamma0)

    def integrand(pts):
        lin = 1.0 - pts @ zb.T  # (K, P)
        return c * weight(pts)[:, None] * lin**expo

    if n == 0:
        vals = integrand(np.zeros((1, 0)))[0]
    else:
        vals = np.atleast_1d(simplex_integrate(integrand, n, tol=tol).value)
    return float(vals[0]) if single else vals


def hnow_over_hbefore(alpha: Sequence[int], m: float, *, norm="2pi") -> float:
    """Ratio sfH_alpha / H_alpha between the two hypergeometric families."""
    d = sum(check_multiindex(alpha)) + m / 2.0 - 2.0
    return norm_constant(m, norm) / math.gamma(d)


def H_prior(alpha: Sequence[int], zbar, m: float, *, gamma0: bool = True, tol: float = 1e-12):
    """The earlier hypergeometric family H_alpha(z; m) = Gamma(d) * int omega (1-sum z u)^{-d}.

    d = |alpha| + m/2 - 2.  Related to ``H_alpha`` by ``hnow_over_hbefore``.
    """
    return H_alpha(alpha, zbar, m, 2, norm="one", gamma0=gamma0, tol=tol) * math.gamma(
        sum(check_multiindex(alpha)) + m / 2.0 - 2.0)
