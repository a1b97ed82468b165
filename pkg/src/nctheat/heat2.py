"""Assembly of the second heat coefficient v2(P) from the resolvent term b2.

Layers, from coarse to fine:

* ``v2_general``: the alpha-grouped compact form, obtained by rerunning the
  resolvent recursion with p0, p1, p2 kept as opaque symbols and the
  contracted indices kept symbolic.
* ``v2_components``: every b0-word of the expanded b2 is contracted against
  the xi-derivatives of the Gaussian lemma, giving coefficients of the
  components F_alpha(A)_{(l1 l2)...}.
* ``v2_diagonal``: the components for p2 = sum_s k_s xi_s^2, rewritten with
  the reduced functions sF_alpha(z)_{s...} and the k-factors moved left.
* ``v2_conformal``: the diagonal terms with k_1 = ... = k_m = k, with the
  coefficients recovered as exact polynomials in the dimension m.

Goldens for the expanded and diagonal theorems are encoded as index
templates with explicit symmetrization sets and compared key by key.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple, Sequence

from .symcalc import (
    QI,
    CoeffSymbol,
    Expr,
    Operator,
    _normal_word,
    canonicalize,
    diagonal_operator,
    general_operator,
    resolvent_b,
    term_slots,
)

__all__ = [
    "PolyM",
    "FormalFactor",
    "formal_resolvent",
    "formal_to_expr",
    "CompactTerm",
    "v2_general",
    "LeibnizSplit",
    "leibniz_partition",
    "split_derivative",
    "V2Term",
    "contract",
    "v2_components",
    "GoldenTemplate",
    "COMPONENT_TEMPLATES",
    "golden_components",
    "orbit_counts",
    "symmetrization_split",
    "DiagonalTerm",
    "v2_diagonal",
    "golden_diagonal",
    "ConformalTerm",
    "ConformalResult",
    "v2_conformal",
    "format_terms",
    "terms_to_json",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# polynomials in the dimension m
# ---------------------------------------------------------------------------


class PolyM:
    """Polynomial in an indeterminate m with Gaussian-rational coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [QI.coerce(c) for c in coeffs]
        while cs and not cs[-1]:
            cs.pop()
        self.coeffs = tuple(cs)

    @classmethod
    def const(cls, c) -> "PolyM":
        return cls([c])

    @classmethod
    def interpolate(cls, points: Sequence[tuple[int, QI]]) -> "PolyM":
        """Exact Lagrange interpolation through (m, value) pairs."""
        out = [QI(0)] * len(points)
        for i, (xi_, yi) in enumerate(points):
            basis = [QI(1)]
            denom = Fraction(1)
            for j, (xj, _) in enumerate(points):
                if j == i:
                    continue
                nxt = [QI(0)] * (len(basis) + 1)
                for d, b in enumerate(basis):
                    nxt[d + 1] = nxt[d + 1] + b
                    nxt[d] = nxt[d] - b * xj
                basis = nxt
                denom *= xi_ - xj
            scale = QI.coerce(yi) / QI(denom)
            for d, b in enumerate(basis):
                out[d] = out[d] + b * scale
        return cls(out)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, m):
        val = QI(0) if isinstance(m, int) else 0.0
        for c in reversed(self.coeffs):
            val = val * m + (c if isinstance(m, int) else complex(c))
        return val

    def __add__(self, other):
        other = other if isinstance(other, PolyM) else PolyM.const(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (QI(0),) * (n - len(self.coeffs))
        b = other.coeffs + (QI(0),) * (n - len(other.coeffs))
        return PolyM(x + y for x, y in zip(a, b))

    __radd__ = __add__

    def __neg__(self):
        return PolyM(-c for c in self.coeffs)

    def __sub__(self, other):
        return self + (-(other if isinstance(other, PolyM) else PolyM.const(other)))

    def __mul__(self, other):
        if not isinstance(other, PolyM):
            return PolyM(c * QI.coerce(other) for c in self.coeffs)
        out = [QI(0)] * (len(self.coeffs) + len(other.coeffs))
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return PolyM(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyM):
            try:
                other = PolyM.const(other)
            except TypeError:
                return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __bool__(self):
        return bool(self.coeffs)

    def __repr__(self):
        return f"PolyM({self})"

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for d in range(len(self.coeffs) - 1, -1, -1):
            c = self.coeffs[d]
            if not c:
                continue
            mono = "" if d == 0 else ("m" if d == 1 else f"m^{d}")
            cs = str(c)
            if c.re and c.im:
                cs = f"({cs})"
            if mono:
                cs = "" if c == 1 else ("-" if c == -1 else cs + "*")
            parts.append(cs + mono)
        return " + ".join(parts).replace("+ -", "- ")


# ---------------------------------------------------------------------------
# formal calculus: p_l opaque, contracted indices symbolic
# ---------------------------------------------------------------------------


class FormalFactor(NamedTuple):
    """D^{dx} nabla^{dn} p_l with symbolic dummy labels."""

    l: int
    dx: tuple = ()
    dn: tuple = ()

    @property
    def commuting(self) -> bool:
        # xi-derivatives of p2 have commuting coefficients
        return self.l == 2 and not self.dn

    def __str__(self):
        lab = "stuvw"
        s = f"p{self.l}"
        if self.dn:
            s = f"∇_{''.join(lab[a - 1] for a in self.dn)} {s}"
        if self.dx:
            s = f"D_{''.join(lab[a - 1] for a in self.dx)} {s}"
        return s if not (self.dx or self.dn) else f"({s})"


class _FB(NamedTuple):
    """Formal resolvent power b0^n."""

    n: int


def _fconcat(a: tuple, b: tuple) -> tuple:
    if a and b and isinstance(a[-1], _FB) and isinstance(b[0], _FB):
        return a[:-1] + (_FB(a[-1].n + b[0].n),) + b[1:]
    return a + b


def _fnormal(w: tuple) -> tuple:
    out: list = []
    run_b = 0
    run_k: list = []

    def flush():
        nonlocal run_b, run_k
        if run_b:
            out.append(_FB(run_b))
        out.extend(sorted(run_k))
        run_b, run_k = 0, []

    for t in w:
        if isinstance(t, _FB):
            run_b += t.n
        elif t.commuting:
            run_k.append(t)
        else:
            flush()
            out.append(t)
    flush()
    return tuple(out)


def _labels(w: tuple) -> list:
    seen: list = []
    for t in w:
        if isinstance(t, FormalFactor):
            for a in t.dx + t.dn:
                if a not in seen:
                    seen.append(a)
    return seen


def _relabel(w: tuple, mp: dict) -> tuple:
    out = []
    for t in w:
        if isinstance(t, FormalFactor):
            t = FormalFactor(t.l, tuple(sorted(mp[a] for a in t.dx)), tuple(sorted(mp[a] for a in t.dn)))
        out.append(t)
    return tuple(out)


def _fkey(t):
    return (0, t.n) if isinstance(t, _FB) else (1, t.l, t.dx, t.dn)


def _fcanon_word(w: tuple) -> tuple:
    """Normal form up to renaming of the summed labels."""
    labs = sorted(_labels(w))
    best = None
    for perm in itertools.permutations(range(1, len(labs) + 1)):
        cand = _fnormal(_relabel(w, dict(zip(labs, perm))))
        key = tuple(_fkey(t) for t in cand)
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1] if best else _fnormal(w)


def _fcanon(x: dict) -> dict:
    acc: dict = defaultdict(lambda: QI(0))
    for w, c in x.items():
        acc[_fcanon_word(w)] = acc[_fcanon_word(w)] + c
    return {w: c for w, c in acc.items() if c}


def _fderiv(x: dict, label: int, vertical: bool) -> dict:
    out: dict = defaultdict(lambda: QI(0))
    for w, c in x.items():
        for pos, t in enumerate(w):
            left, right = w[:pos], w[pos + 1:]
            if isinstance(t, _FB):
                dp = FormalFactor(2, (label,), ()) if vertical else FormalFactor(2, (), (label,))
                for j in range(t.n):
                    mid = (_FB(j + 1), dp, _FB(t.n - j))
                    nw = _fconcat(_fconcat(left, mid), right)
                    out[nw] = out[nw] - c
            else:
                if vertical:
                    if len(t.dx) + 1 > t.l:
                        continue
                    nt = FormalFactor(t.l, tuple(sorted(t.dx + (label,))), t.dn)
                else:
                    nt = FormalFactor(t.l, t.dx, tuple(sorted(t.dn + (label,))))
                nw = left + (nt,) + right
                out[nw] = out[nw] + c
    return {w: c for w, c in out.items() if c}


def _fmul(a: dict, b: dict) -> dict:
    out: dict = defaultdict(lambda: QI(0))
    for wa, ca in a.items():
        for wb, cb in b.items():
            w = _fconcat(wa, wb)
            out[w] = out[w] + ca * cb
    return dict(out)


def _fmax_label(x: dict) -> int:
    return max((max(_labels(w), default=0) for w in x), default=0)


def _fstar(p: dict, q: dict, j: int) -> dict:
    """a_j(p, q) = ((-i)^j / j!) sum over j fresh summed labels."""
    base = max(_fmax_label(p), _fmax_label(q))
    labs = list(range(base + 1, base + j + 1))
    dp, nq = p, q
    for a in labs:
        dp = _fderiv(dp, a, True)
        nq = _fderiv(nq, a, False)
    pref = QI(Fraction(1, math.factorial(j)))
    for _ in range(j):
        pref = pref * QI(0, -1)
    prod = _fmul(dp, nq)
    return {w: c * pref for w, c in prod.items()}


@lru_cache(maxsize=None)
def _formal_b(N: int, with_p1: bool, with_p0: bool) -> tuple:
    if N == 0:
        return (((_FB(1),), QI(1)),)
    ps = {2: {(FormalFactor(2),): QI(1)}}
    if with_p1:
        ps[1] = {(FormalFactor(1),): QI(1)}
    if with_p0:
        ps[0] = {(FormalFactor(0),): QI(1)}
    acc: dict = defaultdict(lambda: QI(0))
    for l, pl in ps.items():
        for r in range(N):
            j = l - 2 - r + N
            if j < 0:
                continue
            br = dict(_formal_b(r, with_p1, with_p0))
            for w, c in _fstar(br, pl, j).items():
                acc[w] = acc[w] + c
    res = _fmul(dict(acc), {(_FB(1),): QI(-1)})
    return tuple(_fcanon(res).items())


def formal_resolvent(N: int, *, with_p1: bool = True, with_p0: bool = True) -> dict:
    """b_N with opaque p_l: {word: coefficient}, canonical up to label renaming."""
    return dict(_formal_b(N, with_p1, with_p0))


def formal_to_expr(fx: dict, op: Operator) -> Expr:
    """Substitute the operator's symbols and sum the labels over 1..m."""
    from .symcalc import b0, d_xi, nabla

    m = op.m
    out = Expr(m, None, op.p2)
    for w, c in fx.items():
        labs = sorted(_labels(w))
        for vals in itertools.product(range(1, m + 1), repeat=len(labs)):
            mp = dict(zip(labs, vals))
            term = Expr(m, {((0,) * m, ()): c}, op.p2)
            for t in w:
                if isinstance(t, _FB):
                    term = term * b0(op.p2, t.n)
                    continue
                f = op.p(t.l)
                for a in t.dx:
                    f = d_xi(mp[a], f)
                for a in t.dn:
                    f = nabla(mp[a], f)
                term = term * f
            out = out + term
    return canonicalize(out)


class CompactTerm(NamedTuple):
    alpha: tuple
    coeff: QI
    slots: tuple  # tuple of tuples of FormalFactor

    @property
    def part(self) -> str:
        return "I" if len(self.slots) == 1 else "II"

    def __str__(self):
        inner = " ⊗ ".join(" ".join(str(f) for f in s) for s in self.slots)
        a = ",".join(map(str, self.alpha))
        return f"{self.coeff} F_{{{a}}}[{inner}]"


def _fslots(w: tuple) -> tuple[tuple, tuple]:
    alpha: list = []
    slots: list = []
    cur: list = []
    for t in w:
        if isinstance(t, _FB):
            if alpha or cur:
                if not alpha:
                    alpha.append(0)
                if cur:
                    slots.append(tuple(cur))
            alpha.append(t.n)
            cur = []
        else:
            cur.append(t)
    if cur:
        slots.append(tuple(cur))
        alpha.append(0)
    return tuple(alpha), tuple(slots)


def v2_general(*, with_p1: bool = True, with_p0: bool = True) -> dict:
    """Compact form of v2 grouped by alpha: {alpha: [CompactTerm, ...]}.

    Each b0-word b0^{a0} rho_1 b0^{a1} ... contributes coeff * F_alpha(rho_1 ⊗ ...).
    """
    groups: dict = {}
    for w, c in formal_resolvent(2, with_p1=with_p1, with_p0=with_p0).items():
        alpha, slots = _fslots(w)
        groups.setdefault(alpha, []).append(CompactTerm(alpha, c, slots))
    order = sorted(groups, key=lambda a: (len(a), a))
    return {a: sorted(groups[a], key=lambda t: tuple(tuple(f) for s in t.slots for f in s)) for a in order}


# ---------------------------------------------------------------------------
# generalized Leibniz splitting
# ---------------------------------------------------------------------------


class LeibnizSplit(NamedTuple):
    beta: tuple
    prefactor: Fraction
    ranges: tuple  # half-open index ranges into (l_1 .. l_2N), one per factor


def _degree(rho) -> int:
    if isinstance(rho, int):
        return rho
    if isinstance(rho, dict):
        degs = {sum(e) for e in rho}
        if len(degs) != 1:
            raise ValueError("factor is not homogeneous")
        return degs.pop()
    degs = rho.degree_set()
    if len(degs) != 1:
        raise ValueError("factor is not homogeneous")
    return degs.pop()


def leibniz_partition(rho_list: Sequence, N: int) -> LeibnizSplit | None:
    """Split 2N xi-derivatives over homogeneous factors rho_1 ... rho_n.

    ``rho_list`` holds degrees, Expr factors or {exponent: coeff} polynomials.
    Returns None when the degrees do not add up to 2N (the term vanishes at
    xi = 0), in particular for any odd total degree.
    """
    beta = tuple(_degree(r) for r in rho_list)
    if sum(beta) != 2 * N:
        return None
    pref = Fraction(1, math.prod(math.factorial(b) for b in beta))
    ranges, start = [], 0
    for b in beta:
        ranges.append((start, start + b))
        start += b
    return LeibnizSplit(beta, pref, tuple(ranges))


def _poly_diff(p: dict, axes: Sequence[int]) -> dict:
    for a in axes:
        q: dict = {}
        for e, c in p.items():
            if e[a] == 0:
                continue
            e2 = list(e)
            e2[a] -= 1
            q[tuple(e2)] = q.get(tuple(e2), 0) + c * e[a]
        p = q
    return p


def split_derivative(polys: Sequence[dict], l: Sequence[int]) -> tuple:
    """Both sides of the generalized Leibniz rule for scalar polynomials.

    ``polys`` are {exponent tuple: coefficient} homogeneous polynomials and
    ``l`` the 0-based axes l_1 .. l_2N.  Returns (direct, split) where
    direct = d_{l_1}..d_{l_2N}(prod rho)|_0 and split uses the partition with
    the symmetrization over all orderings of l.
    """
    m = len(next(iter(polys[0])))
    prod = {(0,) * m: 1}
    for p in polys:
        nxt: dict = {}
        for e1, c1 in prod.items():
            for e2, c2 in p.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                nxt[e] = nxt.get(e, 0) + c1 * c2
        prod = nxt
    zero = (0,) * m
    direct = _poly_diff(prod, l).get(zero, 0)
    spl = leibniz_partition(polys, len(l) // 2) if len(l) % 2 == 0 else None
    if spl is None:
        return direct, 0
    total = 0
    for perm in itertools.permutations(l):
        val = spl.prefactor
        for p, (a, b) in zip(polys, spl.ranges):
            val *= _poly_diff(p, perm[a:b]).get(zero, 0)
            if not val:
                break
        total += val
    return direct, total


# ---------------------------------------------------------------------------
# contraction into components of F_alpha(A)
# ---------------------------------------------------------------------------


def _pairing(l: Sequence[int]) -> tuple:
    return tuple(sorted(tuple(sorted(l[i:i + 2])) for i in range(0, len(l), 2)))


@lru_cache(maxsize=None)
def _pairing_counts(e: tuple) -> tuple:
    """For xi^e, the number of index sequences with multiset e per pairing."""
    letters = [a + 1 for a, c in enumerate(e) for _ in range(c)]
    counts: dict = defaultdict(int)
    for seq in set(itertools.permutations(letters)):
        counts[_pairing(seq)] += 1
    return tuple(sorted(counts.items()))


class V2Term(NamedTuple):
    """coeff * F_alpha(A)_{pairs} (slot_1 ⊗ ... ⊗ slot_n); 1-based axes."""

    alpha: tuple
    pairs: tuple
    coeff: QI
    slots: tuple

    @property
    def key(self) -> tuple:
        return (self.alpha, self.pairs, self.slots)

    def __str__(self):
        a = ",".join(map(str, self.alpha))
        p = "".join(f"({i}{j})" for i, j in self.pairs) or "∅"
        inner = " ⊗ ".join(" ".join(str(s) for s in sl) for sl in self.slots)
        return f"{self.coeff} F_{{{a}}}{p}[{inner}]"


@dataclass
class Contraction:
    terms: dict = field(default_factory=dict)  # key -> QI
    dropped_odd: int = 0
    total: int = 0

    def as_list(self) -> list:
        out = [V2Term(a, p, c, s) for (a, p, s), c in self.terms.items()]
        return sorted(out, key=lambda t: (len(t.alpha), t.alpha, t.pairs, tuple(map(str, t.slots))))


def contract(bN: Expr) -> Contraction:
    """Contract every b0-word with the Gaussian xi-derivatives at xi = 0.

    A term c xi^e w with |e| = 2N contributes c e! #(sequences with pairing P)
    to the component F_alpha(A)_P.  Odd-degree terms are dropped and counted.
    """
    res = Contraction()
    acc: dict = defaultdict(lambda: QI(0))
    for (xe, w), c in canonicalize(bN).terms.items():
        res.total += 1
        deg = sum(xe)
        if deg % 2:
            res.dropped_odd += 1
            continue
        alpha, slots = term_slots(w)
        fact = math.prod(math.factorial(x) for x in xe)
        slots = tuple(tuple(s) for s in slots)
        for P, cnt in _pairing_counts(tuple(xe)):
            key = (alpha, P, slots)
            acc[key] = acc[key] + c * (fact * cnt)
    res.terms = {k: v for k, v in acc.items() if v}
    return res


def v2_components(m: int = 2, op: Operator | None = None) -> list:
    """Fully expanded v2 as a list of V2Term for the general operator."""
    op = op or general_operator(m)
    return contract(resolvent_b(2, op)).as_list()


# ---------------------------------------------------------------------------
# golden templates for the expanded theorems
# ---------------------------------------------------------------------------


def _k(i, j, deriv=()):
    return CoeffSymbol("K", min(i, j), max(i, j), tuple(sorted(deriv)))


def _r(i, deriv=()):
    return CoeffSymbol("R", i, 0, tuple(sorted(deriv)))


_P0 = CoeffSymbol("P0", 0, 0, ())


class GoldenTemplate(NamedTuple):
    """coeff * sum_{free, l} F_alpha(A)_{(l1 l2)...}[word(free, l)] with the
    l-positions in ``barred`` symmetrized (sum over their permutations)."""

    name: str
    alpha: tuple
    coeff: QI
    n_free: int
    N: int
    barred: tuple
    word: Callable


def _templates(literal: bool = True) -> list:
    i = QI(0, 1)
    all4 = (0, 1, 2, 3)
    all6 = (0, 1, 2, 3, 4, 5)
    T = GoldenTemplate
    return [
        T("I,1,1", (1, 1), QI(-1), 0, 0, (), lambda f, l: ((_P0,),)),
        T("I,2,1 k∇²k", (2, 1), QI(-2), 2, 1, (),
          lambda f, l: ((_k(f[0], f[1]), _k(l[0], l[1], (f[0], f[1]))),)),
        T("I,2,1 k∇r", (2, 1), QI(-2) * i, 1, 1, (0, 1),
          lambda f, l: ((_k(f[0], l[0]), _r(l[1], (f[0],))),)),
        T("I,3,1", (3, 1), QI(4), 2, 2, all4,
          lambda f, l: ((_k(f[0], l[0]), _k(f[1], l[1]), _k(l[2], l[3], (f[0], f[1]))),)),
        T("II,2,1,1 a", (2, 1, 1), QI(4), 2, 2, all4,
          lambda f, l: ((_k(f[0], l[0]), _k(f[1], l[1], (f[0],))), (_k(l[2], l[3], (f[1],)),))),
        T("II,2,1,1 b", (2, 1, 1), QI(2), 2, 2, all4,
          lambda f, l: ((_k(f[0], f[1]), _k(l[0], l[1], (f[0],))), (_k(l[2], l[3], (f[1],)),))),
        T("II,2,1,1 c", (2, 1, 1), QI(2) * i, 1, 2, all4,
          lambda f, l: ((_k(f[0], l[0]), _k(l[1], l[2], (f[0],))), (_r(l[3]),))),
        T("II,2,1,1 d", (2, 1, 1), QI(2) * i, 1, 2, all4,
          lambda f, l: ((_k(f[0], l[0]), _r(l[1])), (_k(l[2], l[3], (f[0],)),))),
        T("II,1,2,1", (1, 2, 1), QI(2) * i, 1, 2, (1, 2, 3) if literal else all4,
          lambda f, l: ((_r(l[0]),), (_k(f[0], l[1]), _k(l[2], l[3], (f[0],))))),
        T("II,3,1,1", (3, 1, 1), QI(-8), 2, 3, all6,
          lambda f, l: ((_k(f[0], l[0]), _k(f[1], l[1]), _k(l[2], l[3], (f[0],))), (_k(l[4], l[5], (f[1],)),))),
        T("II,2,2,1", (2, 2, 1), QI(-4), 2, 3, all6,
          lambda f, l: ((_k(f[0], l[0]), _k(l[1], l[2], (f[0],))), (_k(f[1], l[3]), _k(l[4], l[5], (f[1],))))),
        T("II,1,1,1 r∇k", (1, 1, 1), QI(-2) * i, 1, 1, (),
          lambda f, l: ((_r(f[0]),), (_k(l[0], l[1], (f[0],)),))),
        T("II,1,1,1 rr", (1, 1, 1), QI(2), 0, 1, (),
          lambda f, l: ((_r(l[0]),), (_r(l[1]),))),
    ]


COMPONENT_TEMPLATES = _templates(literal=True)


def _norm_slots(slots: tuple) -> tuple:
    return tuple(_normal_word(tuple(s)) for s in slots)


def _expand_template(t: GoldenTemplate, m: int, acc: dict) -> None:
    n = 2 * t.N
    bar = list(t.barred)
    unbar = [p for p in range(n) if p not in t.barred]
    perms = list(itertools.permutations(range(len(bar))))
    classes: dict = defaultdict(list)
    for l in itertools.product(range(1, m + 1), repeat=n):
        key = (tuple(l[p] for p in unbar), tuple(sorted(l[p] for p in bar)))
        classes[key].append(l)
    for key, members in classes.items():
        # sum of components over the class
        fsum: dict = defaultdict(int)
        for l in members:
            fsum[_pairing(l)] += 1
        rep = list(members[0])
        wsum: dict = defaultdict(int)
        for free in itertools.product(range(1, m + 1), repeat=t.n_free):
            for perm in perms:
                l2 = list(rep)
                for dst, src in zip(bar, perm):
                    l2[dst] = rep[bar[src]]
                wsum[_norm_slots(t.word(free, tuple(l2)))] += 1
        for P, fc in fsum.items():
            for slots, wc in wsum.items():
                k = (t.alpha, P, slots)
                acc[k] = acc[k] + t.coeff * (fc * wc)


def golden_components(m: int = 2, *, literal: bool = True, templates=None) -> dict:
    """Expanded-theorem golden as {(alpha, pairs, slots): coeff}."""
    acc: dict = defaultdict(lambda: QI(0))
    for t in templates or _templates(literal):
        _expand_template(t, m, acc)
    return {k: v for k, v in acc.items() if v}


def compare_terms(engine: dict, golden: dict) -> dict:
    """Keys where the two term dictionaries differ, with both coefficients."""
    out = {}
    for k in set(engine) | set(golden):
        a, b = engine.get(k, QI(0)), golden.get(k, QI(0))
        if a != b:
            out[k] = (a, b)
    return out


# ---------------------------------------------------------------------------
# symmetrization counts in the diagonal case (orbit enumeration)
# ---------------------------------------------------------------------------


def _set_partitions(items: list) -> list:
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for p in _set_partitions(rest):
        out.append([[first]] + p)
        for i in range(len(p)):
            out.append(p[:i] + [[first] + p[i]] + p[i + 1:])
    return out


def _is_diagonal(slots: tuple) -> bool:
    return all(s.kind != "K" or s.i == s.j for sl in slots for s in sl)


def orbit_counts(t: GoldenTemplate, block_of_pair: Sequence[int]) -> int:
    """Number of orderings of the barred positions for which the template word
    can be diagonal, given l = (v1 v1 v2 v2 ...) with v_i = block_of_pair[i]+1."""
    l = []
    for b in block_of_pair:
        l += [b + 1, b + 1]
    m = max(max(block_of_pair) + 1, t.n_free, 1) + t.n_free
    bar = list(t.barred)
    count = 0
    for perm in itertools.permutations(range(len(bar))):
        l2 = list(l)
        for dst, src in zip(bar, perm):
            l2[dst] = l[bar[src]]
        if any(_is_diagonal(t.word(free, tuple(l2))) for free in itertools.product(range(1, m + 1), repeat=t.n_free)):
            count += 1
    return count


def symmetrization_split(t: GoldenTemplate) -> dict:
    """Multiplicity of each coincidence pattern of the N diagonal pairs.

    Keys are set partitions of the pair positions (tuples of tuples); values
    are the counts left after removing all finer patterns, so the values add
    up to the count for the all-equal pattern.
    """
    parts = _set_partitions(list(range(t.N)))
    parts = [tuple(sorted(tuple(sorted(b)) for b in p)) for p in parts]

    def finer(a, b):  # a strictly finer than b
        return a != b and all(any(set(x) <= set(y) for y in b) for x in a)

    raw = {}
    for p in parts:
        block = [0] * t.N
        for bi, b in enumerate(p):
            for x in b:
                block[x] = bi
        raw[p] = orbit_counts(t, block)
    extra: dict = {}
    for p in sorted(parts, key=len, reverse=True):
        extra[p] = raw[p] - sum(extra[q] for q in extra if finer(q, p))
    return extra


# ---------------------------------------------------------------------------
# diagonal reduction
# ---------------------------------------------------------------------------


class DiagonalTerm(NamedTuple):
    """coeff * det(A)^{-1/2} * prod (k_s^{(j)})^{p} * sF_alpha(z)_{s_list}[nc words].

    ``kpow`` is a sorted tuple of ((s, j), power): left multiplication by
    k_s taken in tensor position j (j = 0 is the far left).
    """

    alpha: tuple
    s_list: tuple
    coeff: QI
    kpow: tuple
    nc: tuple

    @property
    def key(self) -> tuple:
        return (self.alpha, self.s_list, self.kpow, self.nc)

    def __str__(self):
        a = ",".join(map(str, self.alpha))
        s = ",".join(map(str, self.s_list)) or "∅"
        kp = " ".join(f"k{si}^({j})" + (f"^{p}" if p != 1 else "") for (si, j), p in self.kpow)
        inner = " ⊗ ".join(" ".join(str(x) for x in sl) or "1" for sl in self.nc)
        return f"{self.coeff} {kp} sF_{{{a}}}({s})[{inner}]".replace("  ", " ")


def _diag_reduce(ct: Contraction) -> dict:
    acc: dict = defaultdict(lambda: QI(0))
    for (alpha, P, slots), c in ct.terms.items():
        if any(a != b for a, b in P):
            continue
        N = len(P)
        s_list = tuple(sorted(a for a, _ in P))
        kp: dict = defaultdict(int)
        for s in s_list:
            kp[(s, 0)] -= 1
        nc = []
        for j, sl in enumerate(slots):
            rest = []
            for sym in sl:
                if sym.commuting:
                    if sym.i != sym.j:
                        raise ValueError("off-diagonal k in a diagonal operator")
                    kp[(sym.i, j)] += 1
                else:
                    rest.append(sym)
            nc.append(tuple(rest))
        kpow = tuple(sorted((k, v) for k, v in kp.items() if v))
        coeff = c * QI(Fraction(1, 4 ** N * math.factorial(N)))
        acc[(alpha, s_list, kpow, tuple(nc))] = acc[(alpha, s_list, kpow, tuple(nc))] + coeff
    return {k: v for k, v in acc.items() if v}


def v2_diagonal(m: int = 2, *, with_p1: bool = True, with_p0: bool = True) -> list:
    """v2 for p2 = sum k_s xi_s^2 as DiagonalTerm list (prefactor det^{-1/2})."""
    op = diagonal_operator(m, with_p1=with_p1, with_p0=with_p0)
    red = _diag_reduce(contract(resolvent_b(2, op)))
    out = [DiagonalTerm(a, s, c, kp, nc) for (a, s, kp, nc), c in red.items()]
    return sorted(out, key=lambda t: (len(t.alpha), t.alpha, t.s_list, t.kpow, tuple(map(str, t.nc))))


def _dk(s, t):
    """nabla_s k_t (diagonal entry)."""
    return _k(t, t, (s,))


def _golden_diag_spec() -> list:
    """Diagonal theorems as (alpha, coeff, n_free, fn(free) -> (s_list, kpow, nc)).

    kpow entries are ((s, j), p); a factor (1 - z_s^{(1)}) is k_s^{(1)}/k_s^{(0)}.
    """
    i = QI(0, 1)
    h = QI(Fraction(1, 2))
    z = lambda s: [((s, 1), 1), ((s, 0), -1)]  # noqa: E731
    S = []

    def add(alpha, coeff, n_free, fn):
        S.append((alpha, coeff, n_free, fn))

    # part I
    add((3, 1), QI(1), 2, lambda s, l: ((s, l), [((s, 0), 1), ((l, 0), -1)], ((_k(l, l, (s, s)),),)))
    add((2, 1), -h, 2, lambda s, l: ((l,), [((s, 0), 1), ((l, 0), -1)], ((_k(l, l, (s, s)),),)))
    add((3, 1), QI(2), 1, lambda s: ((s, s), [], ((_k(s, s, (s, s)),),)))
    add((2, 1), -i, 1, lambda s: ((s,), [], ((_r(s, (s,)),),)))
    add((1, 1), QI(-1), 0, lambda: ((), [], ((_P0,),)))
    # L1
    L1 = lambda s: ((_dk(s, s),), (_dk(s, s),))  # noqa: E731
    add((3, 1, 1), QI(-8), 1, lambda s: ((s, s, s), [((s, 0), -1)], L1(s)))
    add((2, 2, 1), QI(-4), 1, lambda s: ((s, s, s), [((s, 0), -1)] + z(s), L1(s)))
    add((2, 1, 1), QI(2), 1, lambda s: ((s, s), [((s, 0), -1)], L1(s)))
    # L2
    L2 = lambda s, t: ((_dk(s, t),), (_dk(s, t),))  # noqa: E731
    w2 = lambda s, t: [((s, 0), 1), ((t, 0), -2)]  # noqa: E731
    add((3, 1, 1), QI(-2), 2, lambda s, t: ((s, t, t), w2(s, t), L2(s, t)))
    add((2, 2, 1), QI(-1), 2, lambda s, t: ((s, t, t), w2(s, t) + z(s), L2(s, t)))
    add((2, 1, 1), QI(1), 2, lambda s, t: ((t, t), w2(s, t), L2(s, t)))
    # L3, L4
    L3 = lambda s, t: ((_dk(s, s),), (_dk(s, t),))  # noqa: E731
    L4 = lambda s, t: ((_dk(s, t),), (_dk(s, s),))  # noqa: E731
    w3 = lambda t: [((t, 0), -1)]  # noqa: E731
    add((3, 1, 1), QI(-2), 2, lambda s, t: ((s, s, t), w3(t), L3(s, t)))
    add((2, 2, 1), QI(-1), 2, lambda s, t: ((s, s, t), w3(t) + z(s), L3(s, t)))
    add((2, 1, 1), QI(1), 2, lambda s, t: ((s, t), w3(t), L3(s, t)))
    add((3, 1, 1), QI(-2), 2, lambda s, t: ((s, s, t), w3(t), L4(s, t)))
    add((2, 2, 1), QI(-1), 2, lambda s, t: ((s, s, t), w3(t) + z(s), L4(s, t)))
    # L5
    L5 = lambda s, l, t: ((_dk(s, l),), (_dk(s, t),))  # noqa: E731
    w5 = lambda s, t, l: [((s, 0), 1), ((t, 0), -1), ((l, 0), -1)]  # noqa: E731
    add((3, 1, 1), QI(-1), 3, lambda s, t, l: ((s, l, t), w5(s, t, l), L5(s, l, t)))
    add((2, 2, 1), -h, 3, lambda s, t, l: ((s, l, t), w5(s, t, l) + z(s), L5(s, l, t)))
    add((2, 1, 1), h, 3, lambda s, t, l: ((l, t), w5(s, t, l), L5(s, l, t)))
    # L6 .. L10
    add((2, 1, 1), i, 1, lambda s: ((s, s), [((s, 0), -1)], ((_dk(s, s),), (_r(s),))))
    add((2, 1, 1), i * h, 2, lambda s, l: ((s, s), [((l, 0), -1)], ((_dk(s, l),), (_r(s),))))
    add((1, 1, 1), h, 1, lambda s: ((s, s), [((s, 0), -1)], ((_r(s),), (_r(s),))))
    L8 = lambda s: ((_r(s),), (_dk(s, s),))  # noqa: E731
    add((2, 1, 1), i, 1, lambda s: ((s, s), [((s, 0), -1)], L8(s)))
    add((1, 2, 1), i, 1, lambda s: ((s, s), [((s, 0), -1)] + z(s), L8(s)))
    L9 = lambda s, l: ((_r(s),), (_dk(s, l),))  # noqa: E731
    add((2, 1, 1), i * h, 2, lambda s, l: ((s, l), [((l, 0), -1)], L9(s, l)))
    add((1, 2, 1), i * h, 2, lambda s, l: ((s, l), [((l, 0), -1)] + z(s), L9(s, l)))
    add((1, 1, 1), -i * h, 2, lambda s, l: ((l,), [((l, 0), -1)], L9(s, l)))
    return S


def golden_diagonal(m: int = 2, *, literal: bool = True) -> dict:
    """Diagonal-theorem golden as {(alpha, s_list, kpow, nc): coeff}.

    With ``literal=False`` the two index readings that disagree with the
    component expansion are replaced: sF_{1,1,1} carries a single index and
    the L7 bundle uses sF_{2,1,1}(z)_{s,l}.
    """
    acc: dict = defaultdict(lambda: QI(0))
    for alpha, coeff, n_free, fn in _golden_diag_spec():
        for free in itertools.product(range(1, m + 1), repeat=n_free):
            s_list, kp, nc = fn(*free)
            N = sum(alpha) - 2
            if not literal:
                if alpha == (1, 1, 1) and len(s_list) == 2:
                    s_list = s_list[:1]
                if alpha == (2, 1, 1) and n_free == 2 and nc and nc[1] and nc[1][0].kind == "R" \
                        and nc[0][0].i != nc[0][0].deriv[0]:
                    s_list = (free[0], free[1])
            kd: dict = defaultdict(int)
            for k, p in kp:
                kd[k] += p
            kpow = tuple(sorted((k, v) for k, v in kd.items() if v))
            key = (alpha, tuple(sorted(s_list)), kpow, tuple(_normal_word(tuple(x)) for x in nc))
            if len(s_list) != N:
                key = ("badN",) + key
            acc[key] = acc[key] + coeff
    return {k: v for k, v in acc.items() if v}


# ---------------------------------------------------------------------------
# conformal reduction
# ---------------------------------------------------------------------------


class ConformalTerm(NamedTuple):
    """coeff(m) * k^{-m/2 + kshift} (1 - z^{(1)})^{zpow} sH_alpha(z)[pattern]."""

    alpha: tuple
    coeff: PolyM
    zpow: int
    kshift: int
    pattern: str

    def __str__(self):
        a = ",".join(map(str, self.alpha))
        zf = "" if not self.zpow else ("(1-z1) " if self.zpow == 1 else f"(1-z1)^{self.zpow} ")
        return f"({self.coeff}) {zf}H_{{{a}}} [{self.pattern}]"


@dataclass
class ConformalResult:
    op: str
    G_I: list
    G_II: list
    J: list
    sample_m: tuple

    def spectral(self, part: str) -> Callable:
        """Numerical sum of a part as a function of (z-tuple, m)."""
        from .rearrange import H_alpha

        terms = {"I": self.G_I, "II": self.G_II}[part]

        def f(zbar, m, **kw):
            tot = 0.0
            for t in terms:
                val = H_alpha(t.alpha, zbar, m, **kw)
                tot += complex(t.coeff(m)).real * (1 - zbar[0]) ** t.zpow * val
            return tot

        return f


def _pattern(nc: tuple) -> tuple[str, dict] | None:
    """Index-contraction pattern of a slot tensor, or None if some index is unpaired."""
    labels: dict = {}
    order: list = []
    pieces = []
    for sl in nc:
        ps = []
        for sym in sl:
            idx = list(sym.deriv)
            if sym.kind == "R":
                idx = [sym.i] + idx
            for a in idx:
                if a not in labels:
                    labels[a] = "stuvw"[len(labels)]
                    order.append(a)
            dn = "".join(labels[a] for a in sym.deriv)
            if sym.kind == "K":
                base = "k"
            elif sym.kind == "R":
                base = f"r_{labels[sym.i]}"
            else:
                base = "p0"
            ps.append(f"∇_{dn} {base}" if dn else base)
        pieces.append(" ".join(ps) or "1")
    allidx = []
    for sl in nc:
        for sym in sl:
            allidx += list(sym.deriv) + ([sym.i] if sym.kind == "R" else [])
    counts = {a: allidx.count(a) for a in set(allidx)}
    if any(v != 2 for v in counts.values()):
        return None
    return " ⊗ ".join(pieces), counts


def _conformal_at(m: int, with_p1: bool, with_p0: bool) -> dict:
    """At fixed m: {(alpha, zpow, kshift, pattern): coeff}, with isotropy checks."""
    acc: dict = defaultdict(lambda: QI(0))
    per_word: dict = defaultdict(lambda: QI(0))
    for t in v2_diagonal(m, with_p1=with_p1, with_p0=with_p0):
        zpow = 0
        kshift = 0
        for (s, j), p in t.kpow:
            if j > 1:
                raise ValueError("k factor beyond the first tensor position")
            if j == 1:
                zpow += p
            kshift += p
        nc = tuple(tuple(CoeffSymbol("K", 0, 0, x.deriv) if x.kind == "K" else x for x in sl) for sl in t.nc)
        per_word[(t.alpha, zpow, kshift, nc)] += t.coeff
    # group concrete index words into contraction patterns; require isotropy
    by_pattern: dict = defaultdict(dict)
    for (alpha, zpow, kshift, nc), c in per_word.items():
        if not c:
            continue
        pat = _pattern(nc)
        if pat is None:
            raise ArithmeticError(f"non-isotropic term survives: {alpha} {nc} {c}")
        by_pattern[(alpha, zpow, kshift, pat[0])][nc] = c
    for key, words in by_pattern.items():
        vals = set(words.values())
        if len(vals) != 1:
            raise ArithmeticError(f"pattern {key} has unequal coefficients {vals}")
        acc[key] = vals.pop()
    return dict(acc)


def v2_conformal(op: str = "delta_k", *, sample_m: Sequence[int] = (2, 3, 4, 5, 6)) -> ConformalResult:
    """Conformal reduction with coefficients interpolated exactly in m.

    ``op`` is ``delta_k`` (symbol k|xi|^2) or ``delta_phi`` (adds symbolic
    first- and zeroth-order parts, whose contributions are the J-terms).
    Interpolation uses all sample points and the result is required to have
    degree at most len(sample_m) - 2, so one point is a genuine check.
    """
    if op not in ("delta_k", "delta_phi"):
        raise ValueError(f"unknown conformal operator {op!r}")
    g1, g2, rest = _v2_conformal_cached(op, tuple(sample_m))
    return ConformalResult(op, list(g1), list(g2), list(rest), tuple(sample_m))


@lru_cache(maxsize=None)
def _v2_conformal_cached(op: str, sample_m: tuple) -> tuple:
    lower = op == "delta_phi"
    data = {m: _conformal_at(m, lower, lower) for m in sample_m}
    keys = set().union(*data.values())
    terms = []
    for key in keys:
        pts = [(m, data[m].get(key, QI(0))) for m in sample_m]
        poly = PolyM.interpolate(pts)
        if poly.degree > len(sample_m) - 2:
            raise ArithmeticError(f"coefficient of {key} is not a low-degree polynomial in m")
        alpha, zpow, kshift, pat = key
        terms.append(ConformalTerm(alpha, poly, zpow, kshift, pat))
    terms.sort(key=lambda t: (len(t.alpha), t.pattern, [-a for a in t.alpha], t.zpow))
    g1 = [t for t in terms if t.pattern == "∇_ss k"]
    g2 = [t for t in terms if t.pattern == "∇_s k ⊗ ∇_s k"]
    rest = [t for t in terms if t not in g1 and t not in g2]
    return tuple(g1), tuple(g2), tuple(rest)


# ---------------------------------------------------------------------------
# printing and JSON
# ---------------------------------------------------------------------------


def format_terms(terms: Iterable) -> str:
    return "\n".join(str(t) for t in terms)


def _sym_dict(s: CoeffSymbol) -> dict:
    return {"kind": {"K": "k", "R": "r", "P0": "p0"}[s.kind], "i": s.i, "j": s.j, "deriv": list(s.deriv)}


def terms_to_json(form: str, terms: Sequence, *, m: int | None = None, indent: int | None = 1) -> str:
    rows = []
    for t in terms:
        if isinstance(t, V2Term):
            rows.append({"alpha": list(t.alpha), "pairs": [list(p) for p in t.pairs], "coeff": str(t.coeff),
                         "slots": [[_sym_dict(s) for s in sl] for sl in t.slots]})
        elif isinstance(t, DiagonalTerm):
            rows.append({"alpha": list(t.alpha), "s_list": list(t.s_list), "coeff": str(t.coeff),
                         "kpow": [[s, j, p] for (s, j), p in t.kpow],
                         "nc": [[_sym_dict(s) for s in sl] for sl in t.nc]})
        elif isinstance(t, ConformalTerm):
            rows.append({"alpha": list(t.alpha), "coeff_m": [str(c) for c in t.coeff.coeffs],
                         "coeff": str(t.coeff), "zpow": t.zpow, "kshift": t.kshift, "pattern": t.pattern})
        elif isinstance(t, CompactTerm):
            rows.append({"alpha": list(t.alpha), "coeff": str(t.coeff),
                         "slots": [[{"p": f.l, "D": list(f.dx), "nabla": list(f.dn)} for f in sl] for sl in t.slots]})
        else:
            raise TypeError(type(t))
    return json.dumps({"schema_version": SCHEMA_VERSION, "form": form, "m": m, "terms": rows},
                      indent=indent, ensure_ascii=False)
