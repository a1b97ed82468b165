"""Formal symbol calculus with noncommuting operator-valued coefficients.

Elements are finite sums ``c * xi^e * w`` where ``c`` is a Gaussian rational,
``xi^e`` a monomial in the (central) cotangent variables and ``w`` an ordered
word in coefficient symbols and powers of the resolvent b0 = (p2 - lambda)^{-1}.
Coefficient symbols are k_{ij}, r_s and p0 decorated with a derivative
multi-index.

Two layers are kept apart on purpose.  Derivations (``nabla``, ``d_xi``) act
on words as written.  ``canonicalize`` passes to the quotient in which the
undifferentiated k_{ij} commute with each other and with b0; it is used for
equality tests and for reading off the multi-index alpha.  The vertical
derivation ``d_xi`` is compatible with that quotient, the horizontal
``nabla`` is not (d[k, k'] = 0 does not follow), so ``nabla`` is only
applied to the representative that ``canonicalize`` returns.
"""

from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

__all__ = [
    "QI",
    "CoeffSymbol",
    "Expr",
    "Operator",
    "general_operator",
    "diagonal_operator",
    "conformal_operator",
    "K",
    "R",
    "P0",
    "k_conf",
    "xi",
    "one",
    "b0",
    "nabla",
    "d_xi",
    "star_aj",
    "resolvent_b",
    "golden_b2",
    "compare_b2",
    "canonicalize",
    "split_parts",
    "term_slots",
    "to_json",
    "from_json",
    "format_expr",
]


# ---------------------------------------------------------------------------
# Gaussian rationals
# ---------------------------------------------------------------------------


class QI:
    """Exact element a + b*i of Q(i)."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @staticmethod
    def coerce(x) -> "QI":
        if isinstance(x, QI):
            return x
        if not isinstance(x, (int, Fraction, complex, float)):
            raise TypeError(f"cannot coerce {type(x).__name__} to QI")
        if isinstance(x, complex):
            return QI(Fraction(x.real).limit_denominator(10**12), Fraction(x.imag).limit_denominator(10**12))
        return QI(x, 0)

    def __add__(self, other):
        if not isinstance(other, (QI, int, Fraction, complex, float)):
            return NotImplemented
        o = QI.coerce(other)
        return QI(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return QI(-self.re, -self.im)

    def __sub__(self, other):
        if not isinstance(other, (QI, int, Fraction, complex, float)):
            return NotImplemented
        return self + (-QI.coerce(other))

    def __rsub__(self, other):
        return QI.coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, (QI, int, Fraction, complex, float)):
            return NotImplemented
        o = QI.coerce(other)
        return QI(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (QI, int, Fraction, complex, float)):
            return NotImplemented
        o = QI.coerce(other)
        den = o.re * o.re + o.im * o.im
        return self * QI(o.re / den, -o.im / den)

    def __eq__(self, other):
        try:
            o = QI.coerce(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def conjugate(self):
        return QI(self.re, -self.im)

    def __repr__(self):
        return f"QI({self})"

    def __str__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return _fmt_imag(self.im)
        sign = "+" if self.im > 0 else "-"
        return f"{self.re}{sign}{_fmt_imag(abs(self.im))}"

    @staticmethod
    def parse(text: str) -> "QI":
        t = text.replace(" ", "")
        if not t.endswith("i"):
            return QI(Fraction(t))
        body = t[:-1]
        # split at the last sign that is not the leading one
        cut = max(body.rfind("+", 1), body.rfind("-", 1))
        if cut <= 0 or body[cut - 1] in "/":
            re_part, im_part = "0", body
        else:
            re_part, im_part = body[:cut], body[cut:]
        if im_part in ("", "+"):
            im_part = "1"
        elif im_part == "-":
            im_part = "-1"
        return QI(Fraction(re_part), Fraction(im_part))


def _fmt_imag(v: Fraction) -> str:
    if v == 1:
        return "i"
    if v == -1:
        return "-i"
    return f"{v}i"


I_UNIT = QI(0, 1)


# ---------------------------------------------------------------------------
# symbols and words
# ---------------------------------------------------------------------------


class CoeffSymbol(NamedTuple):
    """A coefficient symbol.

    kind is ``"K"`` (k_{ij}, i <= j; i = j = 0 is the conformal factor k),
    ``"R"`` (r_i), ``"P0"`` or ``"B"`` (a power b0^i of the resolvent).
    ``deriv`` is a sorted tuple of 1-based axes.
    """

    kind: str
    i: int
    j: int
    deriv: tuple = ()

    @property
    def commuting(self) -> bool:
        return self.kind == "K" and not self.deriv

    def with_deriv(self, s: int) -> "CoeffSymbol":
        return CoeffSymbol(self.kind, self.i, self.j, tuple(sorted(self.deriv + (s,))))

    def __str__(self):
        if self.kind == "B":
            return "b0" if self.i == 1 else f"b0^{self.i}"
        if self.kind == "K":
            base = "k" if self.i == 0 else f"k{self.i}{self.j}"
        elif self.kind == "R":
            base = f"r{self.i}"
        else:
            base = "p0"
        if not self.deriv:
            return base
        d = "".join(str(s) for s in self.deriv)
        return f"(∇{d} {base})" if len(self.deriv) == 1 else f"(∇^{len(self.deriv)}_{d} {base})"


def _bpow(a: int) -> CoeffSymbol:
    return CoeffSymbol("B", a, 0, ())


def _concat(left: tuple, right: tuple) -> tuple:
    if left and right and left[-1].kind == "B" and right[0].kind == "B":
        return left[:-1] + (_bpow(left[-1].i + right[0].i),) + right[1:]
    return left + right


def _add_xi(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


class Expr:
    """Finite sum of terms c * xi^e * word.

    ``m`` is the dimension, ``p2`` the leading symbol that defines b0 (needed
    only when b0 occurs and a derivation is applied).
    """

    __slots__ = ("m", "terms", "p2")

    def __init__(self, m: int, terms=None, p2: "Expr | None" = None):
        self.m = m
        self.terms: dict = {}
        self.p2 = p2
        if terms:
            for key, c in terms.items() if isinstance(terms, dict) else terms:
                self._acc(key, QI.coerce(c))

    def _acc(self, key, c: QI):
        if not c:
            return
        cur = self.terms.get(key)
        if cur is None:
            self.terms[key] = c
        else:
            s = cur + c
            if s:
                self.terms[key] = s
            else:
                del self.terms[key]

    def copy(self, terms=None) -> "Expr":
        e = Expr(self.m, None, self.p2)
        if terms is not None:
            e.terms = terms
        return e

    def _p2_of(self, other: "Expr | None" = None):
        if self.p2 is not None:
            return self.p2
        return other.p2 if other is not None else None

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        if not isinstance(other, Expr):
            other = one(self.m) * other
        out = Expr(self.m, dict(self.terms), self._p2_of(other))
        for k, c in other.terms.items():
            out._acc(k, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return self.copy({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Expr):
            c = QI.coerce(other)
            if not c:
                return self.copy({})
            return self.copy({k: v * c for k, v in self.terms.items()})
        if other.m != self.m:
            raise ValueError("dimension mismatch")
        out = Expr(self.m, None, self._p2_of(other))
        for (xa, wa), ca in self.terms.items():
            for (xb, wb), cb in other.terms.items():
                out._acc((_add_xi(xa, xb), _concat(wa, wb)), ca * cb)
        return out

    def __rmul__(self, other):
        return self * other

    def __pow__(self, n: int):
        out = one(self.m, self.p2)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return canonicalize(self).terms == canonicalize(other).terms

    def __hash__(self):
        return hash(frozenset(canonicalize(self).terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def degree_set(self) -> set:
        """Homogeneity degrees (deg xi = 1, deg b0 = -2) present in the sum."""
        out = set()
        for (x, w), _ in self.terms.items():
            out.add(sum(x) - 2 * sum(s.i for s in w if s.kind == "B"))
        return out

    def __repr__(self):
        return f"Expr(m={self.m}, {format_expr(self)})"


def one(m: int, p2=None) -> Expr:
    return Expr(m, {((0,) * m, ()): QI(1)}, p2)


def _symbol_expr(m: int, sym: CoeffSymbol) -> Expr:
    return Expr(m, {((0,) * m, (sym,)): QI(1)})


def K(m: int, i: int, j: int, deriv: Sequence[int] = ()) -> Expr:
    i, j = min(i, j), max(i, j)
    return _symbol_expr(m, CoeffSymbol("K", i, j, tuple(sorted(deriv))))


def k_conf(m: int, deriv: Sequence[int] = ()) -> Expr:
    """The single Weyl-type coefficient k of a conformal operator."""
    return _symbol_expr(m, CoeffSymbol("K", 0, 0, tuple(sorted(deriv))))


def R(m: int, s: int, deriv: Sequence[int] = ()) -> Expr:
    return _symbol_expr(m, CoeffSymbol("R", s, 0, tuple(sorted(deriv))))


def P0(m: int, deriv: Sequence[int] = ()) -> Expr:
    return _symbol_expr(m, CoeffSymbol("P0", 0, 0, tuple(sorted(deriv))))


def xi(m: int, exps: Sequence[int] | int) -> Expr:
    """xi_s (if an axis is given) or the monomial xi^exps."""
    if isinstance(exps, int):
        e = [0] * m
        e[exps - 1] = 1
        exps = e
    return Expr(m, {(tuple(exps), ()): QI(1)})


def b0(p2: Expr, power: int = 1) -> Expr:
    return Expr(p2.m, {((0,) * p2.m, (_bpow(power),)): QI(1)}, p2)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


class Operator(NamedTuple):
    m: int
    p2: Expr
    p1: Expr
    p0: Expr
    name: str = "custom"

    def p(self, l: int) -> Expr:
        return (self.p0, self.p1, self.p2)[l]


def _attach(op_parts, m, name):
    p2, p1, p0 = op_parts
    p2.p2 = p2
    p1 = Expr(m, dict(p1.terms), p2)
    p0 = Expr(m, dict(p0.terms), p2)
    return Operator(m, p2, p1, p0, name)


def general_operator(m: int, *, with_p1: bool = True, with_p0: bool = True) -> Operator:
    """p2 = sum k_{ij} xi_i xi_j, p1 = sum r_s xi_s, p0."""
    p2 = Expr(m)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            p2 = p2 + K(m, i, j) * xi(m, i) * xi(m, j)
    p1 = Expr(m)
    if with_p1:
        for s in range(1, m + 1):
            p1 = p1 + R(m, s) * xi(m, s)
    p0 = P0(m) if with_p0 else Expr(m)
    return _attach((p2, p1, p0), m, "general")


def diagonal_operator(m: int, *, with_p1: bool = True, with_p0: bool = True) -> Operator:
    """p2 = sum k_s xi_s^2 (k_s = k_{ss})."""
    p2 = Expr(m)
    for s in range(1, m + 1):
        p2 = p2 + K(m, s, s) * xi(m, s) * xi(m, s)
    p1 = Expr(m)
    if with_p1:
        for s in range(1, m + 1):
            p1 = p1 + R(m, s) * xi(m, s)
    p0 = P0(m) if with_p0 else Expr(m)
    return _attach((p2, p1, p0), m, "diagonal")


def conformal_operator(m: int, *, with_p1: bool = False, with_p0: bool = False) -> Operator:
    """p2 = k |xi|^2; with the default flags this is the symbol of k*Laplacian."""
    p2 = Expr(m)
    for s in range(1, m + 1):
        p2 = p2 + k_conf(m) * xi(m, s) * xi(m, s)
    p1 = Expr(m)
    if with_p1:
        for s in range(1, m + 1):
            p1 = p1 + R(m, s) * xi(m, s)
    p0 = P0(m) if with_p0 else Expr(m)
    return _attach((p2, p1, p0), m, "conformal")


# ---------------------------------------------------------------------------
# derivations
# ---------------------------------------------------------------------------


def _leibniz(x: Expr, item_derivative, xi_derivative=None) -> Expr:
    out = Expr(x.m, None, x.p2)
    for (xe, w), c in x.terms.items():
        if xi_derivative is not None:
            res = xi_derivative(xe)
            if res is not None:
                coef, xe2 = res
                out._acc((xe2, w), c * coef)
        for t, item in enumerate(w):
            mid = item_derivative(item)
            if mid is None:
                continue
            left, right = w[:t], w[t + 1:]
            for (me, mw), mc in mid.terms.items():
                out._acc((_add_xi(xe, me), _concat(_concat(left, mw), right)), c * mc)
    return out


def _b_insert(a: int, inner: Expr, p2: Expr) -> Expr:
    """Derivative of b0^a given the derivative ``inner`` of p2: -sum_j b0^{j+1} inner b0^{a-j}."""
    out = Expr(p2.m, None, p2)
    for j in range(a):
        out = out - b0(p2, j + 1) * inner * b0(p2, a - j)
    return out


def nabla(s: int, x: Expr) -> Expr:
    """Horizontal derivation nabla_s (formal; see nc_torus.nabla for its phase).

    Appends s to the derivative multi-index of every coefficient symbol and
    uses nabla_s(b0) = -b0 (nabla_s p2) b0.
    """
    if not 1 <= s <= x.m:
        raise ValueError("axis out of range")
    cache = {}
    p2 = x.p2

    def item_d(sym: CoeffSymbol):
        if sym.kind == "B":
            if p2 is None:
                raise ValueError("b0 present but no leading symbol attached")
            key = ("B", sym.i)
            if key not in cache:
                if "np2" not in cache:
                    cache["np2"] = nabla(s, p2)
                cache[key] = _b_insert(sym.i, cache["np2"], p2)
            return cache[key]
        return _symbol_expr(x.m, sym.with_deriv(s))

    return _leibniz(x, item_d)


def d_xi(s: int, x: Expr) -> Expr:
    """Vertical derivation D_s = d/d xi_s, with D_s(b0) = -b0 (D_s p2) b0."""
    if not 1 <= s <= x.m:
        raise ValueError("axis out of range")
    cache = {}
    p2 = x.p2

    def item_d(sym: CoeffSymbol):
        if sym.kind != "B":
            return None
        if p2 is None:
            raise ValueError("b0 present but no leading symbol attached")
        key = ("B", sym.i)
        if key not in cache:
            if "dp2" not in cache:
                cache["dp2"] = d_xi(s, p2)
            cache[key] = _b_insert(sym.i, cache["dp2"], p2)
        return cache[key]

    def xi_d(xe):
        e = xe[s - 1]
        if e == 0:
            return None
        xe2 = list(xe)
        xe2[s - 1] -= 1
        return QI(e), tuple(xe2)

    return _leibniz(x, item_d, xi_d)


def _multisets(m: int, j: int) -> Iterator[tuple[int, ...]]:
    """Exponent vectors mu with |mu| = j over m axes."""
    for combo in itertools.combinations_with_replacement(range(1, m + 1), j):
        mu = [0] * m
        for a in combo:
            mu[a - 1] += 1
        yield tuple(mu)


def _apply_mu(fn, mu, x):
    for axis, count in enumerate(mu, start=1):
        for _ in range(count):
            x = fn(axis, x)
    return x


def star_aj(p: Expr, q: Expr, j: int) -> Expr:
    """a_j(p, q) = ((-i)^j / j!) sum_{l_1..l_j} (D_{l_1..l_j} p)(nabla_{l_1..l_j} q)."""
    if j < 0:
        raise ValueError("j must be >= 0")
    m = p.m
    p2 = p._p2_of(q)
    if j == 0:
        return canonicalize(p * q)
    pref = QI(1)
    for _ in range(j):
        pref = pref * QI(0, -1)
    out = Expr(m, None, p2)
    for mu in _multisets(m, j):
        dp = _apply_mu(d_xi, mu, p)
        if dp.is_zero():
            continue
        nq = _apply_mu(nabla, mu, q)
        if nq.is_zero():
            continue
        # j!/mu! orderings of the multiset, divided by j!
        weight = Fraction(1, math.prod(math.factorial(c) for c in mu))
        out = out + (dp * nq) * (pref * weight)
    return canonicalize(out)


_B_CACHE: dict = {}


def resolvent_b(N: int, op: Operator) -> Expr:
    """b_N from the recursion b_N = [sum_{l,r} a_{l-2-r+N}(b_r, p_l)] (-b0), canonicalized."""
    if N < 0:
        raise ValueError("N must be >= 0")
    key = (id(op), N)
    if key in _B_CACHE and _B_CACHE[key][0] is op:
        return _B_CACHE[key][1]
    minus_b0 = -b0(op.p2)
    if N == 0:
        res = b0(op.p2)
    else:
        acc = Expr(op.m, None, op.p2)
        for l in range(3):
            pl = op.p(l)
            if pl.is_zero():
                continue
            for r in range(N):
                j = l - 2 - r + N
                if j < 0:
                    continue
                acc = acc + star_aj(resolvent_b(r, op), pl, j)
        res = canonicalize(acc * minus_b0)
    _B_CACHE[key] = (op, res)
    return res


# ---------------------------------------------------------------------------
# hand-entered b2
# ---------------------------------------------------------------------------


def golden_b2(op: Operator, *, with_extra: bool = False) -> tuple[Expr, Expr]:
    """Displayed b2 as (part I, part II), written as b0-words.

    Part I has 4 summands and part II has 8.  ``with_extra`` adds the summand
    i sum_s b0^2 (D_s p2) p1 b0 (nabla_s p2) b0 to part II; without it the
    display does not match ``resolvent_b(2, op)`` for p1 != 0.
    """
    m, p2, p1, p0 = op.m, op.p2, op.p1, op.p0
    i = QI(0, 1)
    ax = range(1, m + 1)

    def B(a=1):
        return b0(p2, a)

    def sum2(f):
        out = Expr(m, None, p2)
        for s in ax:
            for t in ax:
                out = out + f(s, t)
        return out

    def sum1(f):
        out = Expr(m, None, p2)
        for s in ax:
            out = out + f(s)
        return out

    D, N = d_xi, nabla
    part1 = (sum2(lambda s, t: B(2) * D(t, D(s, p2)) * N(t, N(s, p2)) * B() * QI(Fraction(-1, 2)))
             + sum2(lambda s, t: B(3) * D(s, p2) * D(t, p2) * N(t, N(s, p2)) * B())
             - sum1(lambda s: i * B(2) * D(s, p2) * N(s, p1) * B())
             - B() * p0 * B())
    part2 = (sum2(lambda s, t: B(2) * D(s, p2) * D(t, N(s, p2)) * B() * N(t, p2) * B())
             - sum2(lambda s, t: B(2) * D(s, p2) * N(s, p2) * B(2) * D(t, p2) * N(t, p2) * B())
             + sum2(lambda s, t: B(2) * D(t, D(s, p2)) * N(s, p2) * B() * N(t, p2) * B())
             - sum2(lambda s, t: B(3) * D(s, p2) * D(t, p2) * N(s, p2) * B() * N(t, p2) * B() * 2)
             + sum1(lambda s: i * B(2) * D(s, p2) * N(s, p2) * B() * p1 * B())
             - sum1(lambda s: i * B() * D(s, p1) * B() * N(s, p2) * B())
             + sum1(lambda s: i * B() * p1 * B(2) * D(s, p2) * N(s, p2) * B())
             + B() * p1 * B() * p1 * B())
    if with_extra:
        part2 = part2 + sum1(lambda s: i * B(2) * D(s, p2) * p1 * B() * N(s, p2) * B())
    return canonicalize(part1), canonicalize(part2)


def compare_b2(op: Operator, *, with_extra: bool = False) -> tuple[Expr, Expr]:
    """Engine b2 minus the hand-entered one, split into parts I and II."""
    parts = split_parts(resolvent_b(2, op))
    g1, g2 = golden_b2(op, with_extra=with_extra)
    zero = Expr(op.m, None, op.p2)
    return canonicalize(parts.get(1, zero) - g1), canonicalize(parts.get(2, zero) - g2)


# ---------------------------------------------------------------------------
# normal form
# ---------------------------------------------------------------------------


def _sym_sort_key(s: CoeffSymbol):
    return (s.kind, s.i, s.j, s.deriv)


def _normal_word(w: tuple) -> tuple:
    """Quotient normal form: inside each maximal run of b0's and undifferentiated
    k's, put the merged b0 power first and the sorted k's after it."""
    out = []
    run_b = 0
    run_k: list = []

    def flush():
        nonlocal run_b, run_k
        if run_b:
            out.append(_bpow(run_b))
        out.extend(sorted(run_k, key=_sym_sort_key))
        run_b, run_k = 0, []

    for s in w:
        if s.kind == "B":
            run_b += s.i
        elif s.commuting:
            run_k.append(s)
        else:
            flush()
            out.append(s)
    flush()
    return tuple(out)


def _term_sort_key(item):
    (x, w), _ = item
    return (
        sum(1 for s in w if s.kind == "B"),
        tuple(s.i for s in w if s.kind == "B"),
        tuple(-e for e in x),
        tuple(_sym_sort_key(s) for s in w),
    )


def canonicalize(x: Expr) -> Expr:
    """Normal form in the quotient where undifferentiated k's commute with b0
    and with each other; merges duplicates, drops zeros, sorts terms."""
    acc: dict = {}
    for (xe, w), c in x.terms.items():
        key = (xe, _normal_word(w))
        cur = acc.get(key)
        acc[key] = c if cur is None else cur + c
    items = sorted(((k, v) for k, v in acc.items() if v), key=_term_sort_key)
    return x.copy(dict(items))


def term_slots(word: tuple) -> tuple[tuple[int, ...], list[tuple]]:
    """Split a word into b0 powers alpha and the slot words between them."""
    alpha = []
    slots: list = []
    cur: list = []
    started = False
    for s in word:
        if s.kind == "B":
            if not started:
                alpha.append(s.i)
                started = True
            else:
                slots.append(tuple(cur))
                alpha.append(s.i)
            cur = []
        else:
            if not started:
                alpha.append(0)
                started = True
            cur.append(s)
    if not started:
        alpha.append(0)
    if cur:
        slots.append(tuple(cur))
        alpha.append(0)
    return tuple(alpha), slots


def split_parts(x: Expr) -> dict[int, Expr]:
    """Group terms by the number n of slots (so b2 splits into parts n = 1, 2)."""
    out: dict[int, Expr] = {}
    for key, c in canonicalize(x).terms.items():
        alpha, slots = term_slots(key[1])
        n = len(slots)
        out.setdefault(n, x.copy({}))._acc(key, c)
    return out


# ---------------------------------------------------------------------------
# serialization and printing
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def _sym_json(s: CoeffSymbol) -> dict:
    kind = {"K": "k", "R": "r", "P0": "p0"}[s.kind]
    return {"kind": kind, "i": s.i, "j": s.j, "deriv": list(s.deriv)}


def _sym_from_json(d: dict) -> CoeffSymbol:
    kind = {"k": "K", "r": "R", "p0": "P0"}[d["kind"]]
    return CoeffSymbol(kind, int(d["i"]), int(d["j"]), tuple(sorted(d.get("deriv", []))))


def to_json(x: Expr, *, indent: int | None = None) -> str:
    """Serialize a canonical sum as {schema_version, m, terms:[{coeff, alpha, rhos}]}.

    The central xi-monomial of a term is recorded on its first slot.
    """
    terms = []
    for (xe, w), c in canonicalize(x).terms.items():
        alpha, slots = term_slots(w)
        if not slots:
            slots = [()]
            alpha = (alpha[0], 0) if alpha[0] else (0, 0)
        rhos = []
        for t, sl in enumerate(slots):
            rhos.append([{"xi": list(xe) if t == 0 else [0] * x.m, "word": [_sym_json(s) for s in sl]}])
        terms.append({"coeff": str(c), "alpha": list(alpha), "rhos": rhos})
    return json.dumps({"schema_version": SCHEMA_VERSION, "m": x.m, "terms": terms}, indent=indent)


def from_json(text: str, p2: Expr | None = None) -> Expr:
    data = json.loads(text)
    m = int(data["m"])
    out = Expr(m, None, p2)
    for t in data["terms"]:
        alpha = t["alpha"]
        word: tuple = ()
        xe = (0,) * m
        if alpha[0]:
            word = (_bpow(alpha[0]),)
        for idx, rho in enumerate(t["rhos"]):
            for mono in rho:
                xe = _add_xi(xe, tuple(mono["xi"]))
                word = _concat(word, tuple(_sym_from_json(d) for d in mono["word"]))
            if alpha[idx + 1]:
                word = _concat(word, (_bpow(alpha[idx + 1]),))
        out._acc((xe, word), QI.parse(t["coeff"]))
    return canonicalize(out)


def _fmt_coeff(c: QI, first: bool) -> str:
    if c == 1:
        return "" if first else "+ "
    if c == -1:
        return "-" if first else "- "
    s = str(c)
    if c.re and c.im:
        s = f"({s})"
    if first:
        return s + " "
    if s.startswith("-"):
        return "- " + s[1:] + " "
    return "+ " + s + " "


def format_expr(x: Expr) -> str:
    parts = []
    for idx, ((xe, w), c) in enumerate(canonicalize(x).terms.items()):
        body = []
        monos = [f"ξ{s + 1}" + (f"^{e}" if e > 1 else "") for s, e in enumerate(xe) if e]
        body.extend(monos)
        body.extend(str(s) for s in w)
        parts.append(_fmt_coeff(c, idx == 0) + (" ".join(body) if body else "1"))
    return " ".join(parts) if parts else "0"
