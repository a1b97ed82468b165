"""Truncated Fourier model of the smooth noncommutative m-torus.

Elements are coefficient arrays over {l : |l|_inf <= L} in the ordered
basis U^l = U_1^{l_1} ... U_m^{l_m}, with U_s U_l = e^{2 pi i theta_{ls}} U_l U_s.
Operators act on the GNS space, where the U^l are orthonormal.  Modular
operators y = k^{-1}(.)k are realized through the spectral projections of
left multiplication by k, and heat traces through the symmetric matrix of
k^{1/2} Delta k^{1/2}.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from numpy.polynomial import chebyshev as cheb

from .rearrange import H_alpha

DEFAULT_THETA = 0.3


class TorusError(ValueError):
    pass


# ---------------------------------------------------------------- deformation matrix

@dataclass(frozen=True)
class Theta:
    matrix: tuple

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise TorusError("theta must be a square matrix")
        if not np.allclose(a, -a.T, atol=0, rtol=0):
            raise TorusError("theta must be skew-symmetric")

    @classmethod
    def from_array(cls, a) -> "Theta":
        a = np.asarray(a, dtype=float)
        return cls(tuple(tuple(float(x) for x in row) for row in a))

    @classmethod
    def two(cls, theta12: float = DEFAULT_THETA) -> "Theta":
        return cls.from_array([[0.0, theta12], [-theta12, 0.0]])

    @classmethod
    def zero(cls, m: int) -> "Theta":
        return cls.from_array(np.zeros((m, m)))

    @property
    def m(self) -> int:
        return len(self.matrix)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    @cached_property
    def lower(self) -> np.ndarray:
        """B[s, l] = theta_{ls} for s > l, zero otherwise."""
        t = self.array
        return np.tril(t.T, -1)

    def phase(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """U^a U^b = phase(a, b) U^{a+b}; broadcasts over leading axes."""
        q = np.einsum("...s,sl,...l->...", np.asarray(a, float), self.lower, np.asarray(b, float))
        return np.exp(2j * np.pi * q)


# ---------------------------------------------------------------- lattices

class Lattice:
    """Index set {l in Z^m : |l|_inf <= L}, in C order."""

    _cache: dict = {}

    def __new__(cls, m: int, L: int):
        key = (m, L)
        if key not in cls._cache:
            obj = super().__new__(cls)
            obj.m, obj.L = m, L
            obj.points = np.array(list(itertools.product(range(-L, L + 1), repeat=m)), dtype=np.int64).reshape(-1, m)
            obj.size = len(obj.points)
            obj.zero = obj.size // 2
            cls._cache[key] = obj
        return cls._cache[key]

    def flat(self, pts: np.ndarray) -> np.ndarray:
        """Flat positions of points (assumed inside the box)."""
        side = 2 * self.L + 1
        idx = np.zeros(pts.shape[:-1], dtype=np.int64)
        for s in range(self.m):
            idx = idx * side + (pts[..., s] + self.L)
        return idx

    def inside(self, pts: np.ndarray) -> np.ndarray:
        return np.all(np.abs(pts) <= self.L, axis=-1)


# ---------------------------------------------------------------- elements

class FourierElement:
    """Finitely supported element sum_l a_l U^l; immutable."""

    __slots__ = ("theta", "L", "coeffs", "spill")

    def __init__(self, theta: Theta, L: int, coeffs, spill: float = 0.0):
        lat = Lattice(theta.m, L)
        c = np.array(coeffs, dtype=complex).reshape(lat.size)
        c.flags.writeable = False
        self.theta, self.L, self.coeffs, self.spill = theta, int(L), c, float(spill)

    # constructors
    @classmethod
    def zero(cls, theta: Theta, L: int) -> "FourierElement":
        return cls(theta, L, np.zeros(Lattice(theta.m, L).size))

    @classmethod
    def one(cls, theta: Theta, L: int = 0) -> "FourierElement":
        return cls.monomial(theta, (0,) * theta.m, L)

    @classmethod
    def monomial(cls, theta: Theta, l: Sequence[int], L: int | None = None, coeff: complex = 1.0):
        l = tuple(int(x) for x in l)
        if len(l) != theta.m:
            raise TorusError("monomial index has the wrong length")
        L = max(map(abs, l), default=0) if L is None else L
        lat = Lattice(theta.m, L)
        c = np.zeros(lat.size, dtype=complex)
        c[int(lat.flat(np.array(l)))] = coeff
        return cls(theta, L, c)

    @classmethod
    def from_dict(cls, theta: Theta, terms: dict, L: int | None = None) -> "FourierElement":
        L = max((max(map(abs, l)) for l in terms), default=0) if L is None else L
        out = cls.zero(theta, L)
        for l, v in terms.items():
            out = out + cls.monomial(theta, l, L, v)
        return out

    @classmethod
    def random(cls, theta: Theta, L: int, rng: np.random.Generator, *, decay: float = 0.5,
               selfadjoint: bool = False) -> "FourierElement":
        lat = Lattice(theta.m, L)
        w = decay ** np.abs(lat.points).sum(axis=1)
        c = (rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size)) * w
        f = cls(theta, L, c)
        return (f + f.adjoint()) * 0.5 if selfadjoint else f

    # basic structure
    @property
    def m(self) -> int:
        return self.theta.m

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.m, self.L)

    def __getitem__(self, l) -> complex:
        l = np.array(tuple(l))
        if np.any(np.abs(l) > self.L):
            return 0j
        return complex(self.coeffs[int(self.lattice.flat(l))])

    def items(self):
        nz = np.nonzero(self.coeffs)[0]
        return [(tuple(int(x) for x in self.lattice.points[i]), complex(self.coeffs[i])) for i in nz]

    def resize(self, L: int) -> "FourierElement":
        """Zero-pad or truncate; spill records the dropped l2 mass."""
        if L == self.L:
            return self
        src, dst = self.lattice, Lattice(self.m, L)
        keep = dst.inside(src.points)
        c = np.zeros(dst.size, dtype=complex)
        c[dst.flat(src.points[keep])] = self.coeffs[keep]
        spill = float(np.linalg.norm(self.coeffs[~keep]))
        return FourierElement(self.theta, L, c, max(self.spill, spill))

    def _align(self, other: "FourierElement"):
        if other.theta != self.theta:
            raise TorusError("elements live on different tori")
        L = max(self.L, other.L)
        return self.resize(L), other.resize(L)

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FourierElement.one(self.theta, self.L) * other
        a, b = self._align(other)
        return FourierElement(self.theta, a.L, a.coeffs + b.coeffs, max(a.spill, b.spill))

    __radd__ = __add__

    def __neg__(self):
        return FourierElement(self.theta, self.L, -self.coeffs, self.spill)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierElement):
            return twisted_mul(self, other)
        return FourierElement(self.theta, self.L, self.coeffs * complex(other), self.spill)

    def __rmul__(self, other):
        return FourierElement(self.theta, self.L, self.coeffs * complex(other), self.spill)

    def adjoint(self) -> "FourierElement":
        pts = self.lattice.points
        ph = self.theta.phase(-pts, pts)  # U^{-l} U^{l} = ph * 1
        c = np.zeros_like(self.coeffs)
        c[self.lattice.flat(-pts)] = np.conj(self.coeffs) * np.conj(ph)
        return FourierElement(self.theta, self.L, c, self.spill)

    def is_selfadjoint(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.coeffs - self.adjoint().coeffs), initial=0.0) <= tol)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def distance(self, other: "FourierElement") -> float:
        a, b = self._align(other)
        return float(np.max(np.abs(a.coeffs - b.coeffs), initial=0.0))

    def __repr__(self):
        return f"FourierElement(m={self.m}, L={self.L}, nnz={np.count_nonzero(self.coeffs)})"


def twisted_mul(f: FourierElement, g: FourierElement, L: int | str | None = None) -> FourierElement:
    """Deformed product.  ``L`` None keeps max(L_f, L_g); "full" keeps every term."""
    if f.theta != g.theta:
        raise TorusError("elements live on different tori")
    ia, ib = np.nonzero(f.coeffs)[0], np.nonzero(g.coeffs)[0]
    pa, pb = f.lattice.points[ia], g.lattice.points[ib]
    full = Lattice(f.m, f.L + g.L)
    out = np.zeros(full.size, dtype=complex)
    if len(ia) and len(ib):
        ph = f.theta.phase(pa[:, None, :], pb[None, :, :])
        vals = f.coeffs[ia][:, None] * g.coeffs[ib][None, :] * ph
        np.add.at(out, full.flat(pa[:, None, :] + pb[None, :, :]).ravel(), vals.ravel())
    res = FourierElement(f.theta, full.L, out, max(f.spill, g.spill))
    if L == "full":
        return res
    return res.resize(max(f.L, g.L) if L is None else int(L))


def trace0(f: FourierElement) -> complex:
    """The canonical trace: the coefficient of U^0."""
    return complex(f.coeffs[f.lattice.zero])


def delta(axis: int, f: FourierElement) -> FourierElement:
    """Basic derivation delta_axis (1-based): U^l -> l_axis U^l."""
    if not 1 <= axis <= f.m:
        raise TorusError("axis out of range")
    return FourierElement(f.theta, f.L, f.coeffs * f.lattice.points[:, axis - 1], f.spill)


NABLA_PHASE = 1j


def nabla(axis: int, f: FourierElement) -> FourierElement:
    """The horizontal derivative of the symbol calculus, i * delta.

    With symbols sum_a c_a xi^a standing for sum_a c_a delta^a, the product
    rule a_j = ((-i)^j / j!) (D^j p)(nabla^j q) composes operators correctly
    only for nabla = +i delta.
    """
    return delta(axis, f) * NABLA_PHASE


def grading_degree(f: FourierElement) -> np.ndarray | None:
    """The Z^m degree of a homogeneous element, None otherwise."""
    nz = np.nonzero(np.abs(f.coeffs) > 0)[0]
    if len(nz) != 1:
        return None
    return f.lattice.points[nz[0]].copy()


# ---------------------------------------------------------------- GNS matrices

def gns_matrix(f: FourierElement, L: int) -> np.ndarray:
    """Left multiplication by f compressed to the basis of radius L."""
    lat = Lattice(f.m, L)
    ia = np.nonzero(f.coeffs)[0]
    pa = f.lattice.points[ia]
    mat = np.zeros((lat.size, lat.size), dtype=complex)
    cols = np.arange(lat.size)
    for a_pt, c in zip(pa, f.coeffs[ia]):
        tgt = lat.points + a_pt
        ok = lat.inside(tgt)
        ph = f.theta.phase(a_pt[None, :], lat.points[ok])
        mat[lat.flat(tgt[ok]), cols[ok]] += c * ph
    return mat


def gns_sparse(f: FourierElement, L: int) -> scipy.sparse.csr_matrix:
    """Sparse form of ``gns_matrix`` for elements with small support."""
    lat = Lattice(f.m, L)
    ia = np.nonzero(f.coeffs)[0]
    rows, cols, vals = [], [], []
    allc = np.arange(lat.size)
    for a_pt, c in zip(f.lattice.points[ia], f.coeffs[ia]):
        tgt = lat.points + a_pt
        ok = lat.inside(tgt)
        rows.append(lat.flat(tgt[ok]))
        cols.append(allc[ok])
        vals.append(c * f.theta.phase(a_pt[None, :], lat.points[ok]))
    if not rows:
        return scipy.sparse.csr_matrix((lat.size, lat.size), dtype=complex)
    return scipy.sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(lat.size, lat.size))


def vector_to_element(theta: Theta, L: int, v: np.ndarray) -> FourierElement:
    return FourierElement(theta, L, v)


def self_adjoint_function(f: FourierElement, fn: Callable[[np.ndarray], np.ndarray], L: int,
                          L_out: int | None = None) -> FourierElement:
    """fn(f) for self-adjoint f, via the spectral theorem on the radius-L basis."""
    if not f.is_selfadjoint(1e-10 * max(1.0, f.norm())):
        raise TorusError("functional calculus needs a self-adjoint element")
    A = gns_matrix(f, L)
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    lat = Lattice(f.m, L)
    vec = V @ (fn(w) * V[lat.zero].conj())
    return FourierElement(f.theta, L, vec).resize(L if L_out is None else L_out)


@dataclass
class WeylFactor:
    """k = e^h for self-adjoint h; powers are computed on a padded basis."""
    h: FourierElement
    L: int
    pad: int = 8

    def __post_init__(self):
        if not self.h.is_selfadjoint(1e-12):
            raise TorusError("the log of a Weyl factor must be self-adjoint")
        self._powers: dict = {}
        self._lam = None

    @property
    def theta(self) -> Theta:
        return self.h.theta

    @property
    def m(self) -> int:
        return self.h.m

    def power(self, p: float) -> FourierElement:
        """k^p on the radius-L basis."""
        if p not in self._powers:
            big = self.L + self.pad
            if self._lam is None:
                self._lam = gns_sparse(self.h, big)
            lat = Lattice(self.m, big)
            e0 = np.zeros(lat.size, dtype=complex)
            e0[lat.zero] = 1.0
            vec = scipy.sparse.linalg.expm_multiply(p * self._lam, e0)
            self._powers[p] = FourierElement(self.theta, big, vec).resize(self.L)
        return self._powers[p]

    @property
    def k(self) -> FourierElement:
        return self.power(1.0)


def cosine_weyl(theta: Theta, eps: Sequence[float], L: int, pad: int = 8) -> WeylFactor:
    """k = exp(sum_s eps_s (U_s + U_s^*)/2)."""
    h = FourierElement.zero(theta, 1)
    for s, e in enumerate(eps):
        if e:
            u = FourierElement.monomial(theta, tuple(int(i == s) for i in range(theta.m)), 1)
            h = h + (u + u.adjoint()) * (e / 2)
    return WeylFactor(h, L, pad)


# ---------------------------------------------------------------- modular functions

@dataclass
class ModularBasis:
    """Spectral data of left multiplication by k on the radius-L basis."""
    kappa: np.ndarray
    V: np.ndarray
    theta: Theta
    L: int

    @classmethod
    def of(cls, k: FourierElement, L: int) -> "ModularBasis":
        A = gns_matrix(k, L)
        herm = np.max(np.abs(A - A.conj().T), initial=0.0)
        if herm > 1e-10 * max(1.0, np.max(np.abs(A))):
            raise TorusError(f"k is not self-adjoint (defect {herm:.2e})")
        w, V = np.linalg.eigh((A + A.conj().T) / 2)
        if w[0] <= 0:
            raise TorusError(f"k is not positive on the truncated space (min eigenvalue {w[0]:.3e})")
        return cls(w, V, k.theta, L)

    @property
    def ratio_range(self) -> float:
        """Largest |log(kappa_j / kappa_i)|."""
        return float(math.log(self.kappa[-1] / self.kappa[0]))

    def rotate(self, a: FourierElement) -> np.ndarray:
        return self.V.conj().T @ gns_matrix(a, self.L) @ self.V


def modular_fn(F: Callable, k: FourierElement | ModularBasis, arg, *, rank: int = 1,
               L: int | None = None) -> FourierElement:
    """F(y^(1), ..., y^(rank)) applied to ``arg`` and multiplied out.

    ``arg`` is an element (rank 1), a list of elements to sum (rank 1), or a
    list of (a, b) pairs (rank 2).  F must accept numpy arrays.  On a tensor
    E_i a E_j b E_l the variables act by y^(1) = kappa_j/kappa_i and
    y^(2) = kappa_l/kappa_j.
    """
    mb = k if isinstance(k, ModularBasis) else ModularBasis.of(k, L if L is not None else k.L)
    lat = Lattice(mb.theta.m, mb.L)
    kap = mb.kappa
    d = mb.V[lat.zero].conj()
    if rank == 1:
        items = arg if isinstance(arg, (list, tuple)) else [arg]
        y = kap[None, :] / kap[:, None]
        Fm = np.asarray(F(y), dtype=complex) * np.ones_like(y)
        acc = np.zeros(len(kap), dtype=complex)
        for a in items:
            acc += (Fm * mb.rotate(a)) @ d
    elif rank == 2:
        items = list(arg)
        y1 = kap[None, :] / kap[:, None]  # [i, j]
        acc = np.zeros(len(kap), dtype=complex)
        rot = [(mb.rotate(a), mb.rotate(b)) for a, b in items]
        outer = getattr(F, "outer", None)
        for j in range(len(kap)):
            # F[i, l] at fixed middle index j
            if outer is not None:
                Fj = outer(y1[:, j], kap / kap[j])
            else:
                Fj = np.asarray(F(y1[:, j][:, None] * np.ones((1, len(kap))),
                                  (kap / kap[j])[None, :] * np.ones((len(kap), 1))), dtype=complex)
            for A, B in rot:
                acc += A[:, j] * (Fj @ (B[j, :] * d))
    else:
        raise TorusError("modular_fn supports rank 1 and 2")
    return FourierElement(mb.theta, mb.L, mb.V @ acc)


# ---------------------------------------------------------------- spectral interpolants

class ChebInterpolant:
    """Tensor Chebyshev interpolant of f(y_1, ..., y_n) in log y on [-w, w]^n."""

    def __init__(self, f: Callable, nvar: int, w: float, n: int = 16):
        self.nvar, self.w = nvar, max(float(w), 1e-6)
        x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
        self.vinv = np.linalg.inv(cheb.chebvander(x, n - 1))
        grids = np.meshgrid(*([x] * nvar), indexing="ij")
        ys = [np.exp(self.w * g.ravel()) for g in grids]
        vals = np.asarray(f(*ys), dtype=complex).reshape((n,) * nvar)
        c = vals
        for ax in range(nvar):
            c = np.moveaxis(np.tensordot(self.vinv, np.moveaxis(c, ax, 0), axes=1), 0, ax)
        self.c = c

    def _u(self, y):
        u = np.log(np.asarray(y, dtype=float)) / self.w
        if np.max(np.abs(u), initial=0.0) > 1 + 1e-9:
            raise TorusError("interpolant evaluated outside its box")
        return u

    def __call__(self, *ys):
        us = [self._u(y) for y in ys]
        if self.nvar == 1:
            return cheb.chebval(us[0], self.c)
        return cheb.chebval2d(us[0], us[1], self.c)

    def outer(self, y1, y2) -> np.ndarray:
        """Matrix f(y1[i], y2[l]) for two-variable interpolants."""
        n = self.c.shape[0]
        A = cheb.chebvander(self._u(y1), n - 1)
        B = cheb.chebvander(self._u(y2), n - 1)
        return A @ self.c @ B.T


def spectral_function(terms, m: int, *, norm="pi") -> Callable:
    """sum of coeff(m) y1^zpow sfH_alpha(1 - y1[, 1 - y1 y2]) over engine terms."""
    terms = list(terms)
    nvar = {len(t.alpha) - 1 for t in terms}
    if len(nvar) != 1:
        raise TorusError("terms mix different ranks")
    nvar = nvar.pop()

    def f(*ys):
        ys = [np.atleast_1d(np.asarray(y, dtype=float)) for y in ys]
        if nvar == 1:
            z = (1 - ys[0])[:, None]
        else:
            z = np.stack([1 - ys[0], 1 - ys[0] * ys[1]], axis=1)
        tot = np.zeros(len(z), dtype=complex)
        for t in terms:
            tot += complex(t.coeff(m)) * ys[0] ** t.zpow * np.atleast_1d(H_alpha(t.alpha, z, m, norm=norm))
        return tot

    return f


# ---------------------------------------------------------------- symbols of the operators

_TOKEN = re.compile(r"(?:∇_(?P<d>[a-z]+) )?(?P<base>k|p0|r_(?P<ri>[a-z]))")


def _parse_pattern(pattern: str) -> list[list[tuple[str, str, str | None]]]:
    slots = []
    for piece in pattern.split(" ⊗ "):
        toks = []
        pos = 0
        while pos < len(piece):
            mt = _TOKEN.match(piece, pos)
            if not mt:
                raise TorusError(f"cannot parse pattern piece {piece!r}")
            toks.append((mt.group("d") or "", "r" if mt.group("ri") else mt.group("base"), mt.group("ri")))
            pos = mt.end()
            while pos < len(piece) and piece[pos] == " ":
                pos += 1
        slots.append(toks)
    return slots


@dataclass
class ConformalSymbol:
    """Coefficient elements of k|xi|^2 (+ sum r_s xi_s + p0 for Delta_phi)."""
    weyl: WeylFactor
    op: str = "delta_k"

    def __post_init__(self):
        if self.op not in ("delta_k", "delta_phi"):
            raise TorusError(f"unknown operator {self.op!r}")
        self._cache: dict = {}

    def base(self, name: str, index: int | None) -> FourierElement:
        m, L = self.weyl.m, self.weyl.L
        if name == "k":
            return self.weyl.k
        # k^{1/2} Delta k^{1/2} = k delta^2 + 2 k^{1/2} delta(k^{1/2}) delta + k^{1/2} delta^2(k^{1/2})
        half = self.weyl.power(0.5)
        if name == "r":
            return (half * delta(index, half)) * 2
        if name == "p0":
            acc = FourierElement.zero(self.weyl.theta, L)
            for s in range(1, m + 1):
                acc = acc + half * delta(s, delta(s, half))
            return acc
        raise TorusError(f"unknown symbol {name!r}")

    def factor(self, deriv: tuple, name: str, index: int | None) -> FourierElement:
        key = (deriv, name, index)
        if key not in self._cache:
            x = self.base(name, index)
            for s in deriv:
                x = nabla(s, x)
            self._cache[key] = x
        return self._cache[key]

    def tensors(self, pattern: str) -> list:
        """All index assignments of a contraction pattern, as slot tuples."""
        slots = _parse_pattern(pattern)
        letters = sorted({c for sl in slots for d, _, ri in sl for c in d + (ri or "")})
        out = []
        for vals in itertools.product(range(1, self.weyl.m + 1), repeat=len(letters)):
            env = dict(zip(letters, vals))
            row = []
            for sl in slots:
                x = FourierElement.one(self.weyl.theta, self.weyl.L)
                for d, name, ri in sl:
                    x = x * self.factor(tuple(env[c] for c in d), name, env[ri] if ri else None)
                row.append(x)
            out.append(tuple(row))
        return out


def evaluate_terms(terms, symbol: ConformalSymbol, *, norm="pi", mb: ModularBasis | None = None,
                   cheb_nodes: int = 16) -> FourierElement:
    """sum over engine terms of coeff k^{-m/2+kshift} (1-z1)^zpow sfH_alpha(z)[pattern]."""
    weyl = symbol.weyl
    m = weyl.m
    mb = mb or ModularBasis.of(weyl.k, weyl.L)
    w = 2 * mb.ratio_range + 1e-3
    groups: dict = {}
    for t in terms:
        groups.setdefault((t.kshift, t.pattern, len(t.alpha) - 1), []).append(t)
    total = FourierElement.zero(weyl.theta, weyl.L)
    for (kshift, pattern, nvar), ts in groups.items():
        interp = ChebInterpolant(spectral_function(ts, m, norm=norm), nvar, w, cheb_nodes)
        tens = symbol.tensors(pattern)
        if nvar == 1:
            x = modular_fn(interp, mb, [t[0] for t in tens], rank=1)
        else:
            x = modular_fn(interp, mb, [(t[0], t[1]) for t in tens], rank=2)
        total = total + weyl.power(-m / 2 + kshift) * x
    return total


def v2_element(weyl: WeylFactor, op: str = "delta_k", *, norm="pi", route: str = "engine") -> FourierElement:
    """The density v_2 as an element of the truncated model.

    ``route`` "engine" uses the mechanically derived terms for ``op``;
    "conjugate" (Delta_phi only) returns y^{1/2}(v_2(Delta_k)) = k^{-1/2} v_2 k^{1/2}.
    """
    from .heat2 import v2_conformal

    if route == "conjugate":
        if op != "delta_phi":
            raise TorusError("the conjugation route applies to delta_phi")
        v = v2_element(weyl, "delta_k", norm=norm)
        return weyl.power(-0.5) * v * weyl.power(0.5)
    res = v2_conformal(op)
    terms = res.G_I + res.G_II + (res.J if op == "delta_phi" else [])
    return evaluate_terms(terms, ConformalSymbol(weyl, op), norm=norm)


def v2_formula_eval(weyl: WeylFactor, a: FourierElement | None = None, *, op: str = "delta_k",
                    norm="pi", route: str = "engine") -> complex:
    """phi_0(a v_2(P)) from the spectral-function formula."""
    v = v2_element(weyl, op, norm=norm, route=route)
    return trace0(v if a is None else a * v)


def v0_formula_eval(weyl: WeylFactor, a: FourierElement | None = None) -> complex:
    """phi_0(a v_0) with v_0 = pi^{m/2} k^{-m/2} (lattice normalization)."""
    v = weyl.power(-weyl.m / 2) * (math.pi ** (weyl.m / 2))
    return trace0(v if a is None else a * v)


# ---------------------------------------------------------------- heat traces

@dataclass
class HeatFit:
    t: np.ndarray
    trace: np.ndarray
    coeffs: np.ndarray
    residual: float
    condition: float
    spectrum_min: float

    @property
    def V0(self) -> complex:
        return self.coeffs[0]

    @property
    def V2(self) -> complex:
        return self.coeffs[1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["schema_version", 1])
        wr.writerow(["t", "t_trace", "fit", "fit_residual"])
        model = np.vander(self.t, len(self.coeffs), increasing=True) @ self.coeffs
        for t, tr, md in zip(self.t, self.trace, model):
            wr.writerow([t, repr((t * tr).real), repr(md.real), repr(abs(t * tr - md))])
        wr.writerow(["V0", repr(self.V0.real)])
        wr.writerow(["V2", repr(self.V2.real)])
        wr.writerow(["condition", repr(self.condition)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


DEFAULT_T = np.linspace(0.15, 0.4, 16)


def fit_window(L: int, n: int = 16) -> np.ndarray:
    """Time points for the fit at truncation L.

    The upper end keeps the e^{-pi^2/t} corrections of the lattice sum small;
    the lower end keeps e^{-t L^2} truncation losses small.
    """
    return np.linspace(max(0.15, 25.0 / (L + 1) ** 2), 0.4, n)


def laplacian_diag(m: int, L: int) -> np.ndarray:
    return (Lattice(m, L).points.astype(float) ** 2).sum(axis=1)


def heat_operator(weyl: WeylFactor | None, theta: Theta, L: int) -> np.ndarray:
    """Matrix of k^{1/2} Delta k^{1/2} on the radius-L basis (Delta alone if weyl is None)."""
    D = laplacian_diag(theta.m, L)
    if weyl is None:
        return np.diag(D).astype(complex)
    S = gns_matrix(weyl.power(0.5), L)
    S = (S + S.conj().T) / 2
    return S @ (D[:, None] * S)


def heat_traces(weyl: WeylFactor | None, theta: Theta, L: int, t_list, a: FourierElement | None = None):
    """Tr(a e^{-t Delta_k}) on the truncated space for each t."""
    P = heat_operator(weyl, theta, L)
    mu, V = np.linalg.eigh((P + P.conj().T) / 2)
    scale = max(1.0, float(np.max(np.abs(mu))))
    if mu[0] < -1e-8 * scale:
        raise TorusError(f"negative eigenvalue {mu[0]:.3e} in the heat operator")
    if a is None:
        diag = np.ones(len(mu))
    else:
        # e^{-t Delta_k} = k^{1/2} e^{-tP} k^{-1/2}, so weight by k^{-1/2} a k^{1/2}
        a2 = a if weyl is None else weyl.power(-0.5) * a * weyl.power(0.5)
        diag = np.einsum("ij,ik,kj->j", V.conj(), gns_matrix(a2, L), V)
    t = np.asarray(t_list, dtype=float)
    return np.array([np.sum(diag * np.exp(-ti * mu)) for ti in t]), float(mu[0])


def heat_trace_fit(weyl: WeylFactor | None, theta: Theta, L: int = 12, t_list=None, *, order: int = 4,
                   a: FourierElement | None = None) -> HeatFit:
    """Fit t Tr(a e^{-t Delta_k}) = V0 + V2 t + ... on the window ``t_list``."""
    t = fit_window(L) if t_list is None else np.asarray(t_list, dtype=float)
    if len(t) <= order:
        raise TorusError("need more time points than fit parameters")
    tr, mu0 = heat_traces(weyl, theta, L, t, a)
    A = np.vander(t, order, increasing=True)
    y = t * tr
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
    cond = float(np.linalg.cond(A))
    resid = float(np.max(np.abs(A @ coeffs - y)))
    if not np.all(np.isfinite(coeffs)):
        raise TorusError(f"heat-trace fit is unstable (condition {cond:.2e})")
    return HeatFit(t, tr, coeffs, resid, cond, mu0)


def flat_trace_exact(m: int, L: int, t_list) -> np.ndarray:
    """Sum of e^{-t|l|^2} over the truncated lattice."""
    D = laplacian_diag(m, L)
    return np.array([np.sum(np.exp(-t * D)) for t in np.asarray(t_list, dtype=float)])


# ---------------------------------------------------------------- files

def read_weyl_file(path, theta: Theta, L: int, pad: int = 8) -> WeylFactor:
    """Read h from lines 'l_1 ... l_m re im' and return k = e^h."""
    terms = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != theta.m + 2:
                raise TorusError(f"{path}:{ln}: expected {theta.m} indices and re im")
            l = tuple(int(x) for x in parts[: theta.m])
            terms[l] = terms.get(l, 0) + complex(float(parts[-2]), float(parts[-1]))
    h = FourierElement.from_dict(theta, terms)
    return WeylFactor(h, L, pad)


def write_weyl_file(path, h: FourierElement) -> None:
    with open(path, "w") as fh:
        for l, v in h.items():
            fh.write(" ".join(map(str, l)) + f" {v.real!r} {v.imag!r}\n")


__all__ = [
    "Theta", "Lattice", "FourierElement", "twisted_mul", "trace0", "delta", "nabla", "NABLA_PHASE", "grading_degree",
    "gns_matrix", "gns_sparse", "self_adjoint_function", "WeylFactor", "cosine_weyl", "ModularBasis", "modular_fn",
    "ChebInterpolant", "spectral_function", "ConformalSymbol", "evaluate_terms", "v2_element",
    "v2_formula_eval", "v0_formula_eval", "HeatFit", "heat_operator", "heat_traces", "heat_trace_fit", "flat_trace_exact",
    "read_weyl_file", "write_weyl_file", "TorusError", "DEFAULT_T", "fit_window", "DEFAULT_THETA",
]
