"""Truncated Laurent series in q over an exact coefficient ring.

A ``QSeries`` lives on the exponent grid (1/d)*Z.  Internally every exponent
is an integer number of grid steps, so a series with ``d=2`` and stored
exponent 3 represents q^(3/2).  A series asserts exact knowledge of all
coefficients with exponent <= cap: coefficients below v0 are zero, those in
[v0, cap] are stored, and nothing is claimed above cap.

The distinguished *exact zero* marker represents the identically-zero series
(e.g. (1;q)_oo); it is not the same thing as a series whose retained window
happens to contain only zeros.
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

from gmpy2 import mpq

from .coeffring import (
    ONE,
    UPoly,
    ZERO,
    coeff_invert,
    coeff_is_zero,
    coeff_str,
)
from .errors import Divergent, GridMismatch, IndeterminateValuation, NotAUnit, Pole


class QMonomial(NamedTuple):
    """A unit monomial c*q^(e/d); e is in grid units of the ambient series."""

    c: object
    e: int


def _as_coeff(c):
    return c if isinstance(c, UPoly) else mpq(c)


class QSeries:
    __slots__ = ("d", "v0", "cap", "coeffs", "exact_zero")

    def __init__(self, d, v0, cap, coeffs, exact_zero=False):
        self.d = d
        self.exact_zero = exact_zero
        if exact_zero:
            self.v0 = 0
            self.cap = cap
            self.coeffs = ()
            return
        if v0 > cap + 1:
            raise ValueError("window lower end exceeds cap+1")
        if len(coeffs) != cap - v0 + 1:
            raise ValueError("coefficient count does not match window")
        # normalize: strip leading zeros so v0 is the retained valuation
        i = 0
        n = len(coeffs)
        while i < n and coeff_is_zero(coeffs[i]):
            i += 1
        self.v0 = v0 + i
        self.cap = cap
        self.coeffs = tuple(_as_coeff(c) for c in coeffs[i:])

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, d=1, cap=0):
        """The exact-zero series."""
        return cls(d, 0, cap, (), exact_zero=True)

    @classmethod
    def monomial(cls, c, e, cap, d=1):
        if coeff_is_zero(c):
            return cls.zero(d, cap)
        if e > cap:
            return cls(d, cap + 1, cap, ())
        return cls(d, e, cap, (c,) + (ZERO,) * (cap - e))

    @classmethod
    def one(cls, cap, d=1):
        return cls.monomial(ONE, 0, cap, d)

    @classmethod
    def from_pairs(cls, pairs, cap, d=1):
        """Build from (grid-exponent, coefficient) pairs; exponents > cap drop."""
        pairs = [(e, c) for e, c in pairs if e <= cap and not coeff_is_zero(c)]
        if not pairs:
            return cls(d, cap + 1, cap, ())
        v0 = min(e for e, _ in pairs)
        out = [ZERO] * (cap - v0 + 1)
        for e, c in pairs:
            out[e - v0] = out[e - v0] + c if not coeff_is_zero(out[e - v0]) else _as_coeff(c)
        return cls(d, v0, cap, out)

    # -- basic accessors ---------------------------------------------------

    def coeff(self, e):
        """Coefficient at grid exponent e; e must be <= cap."""
        if self.exact_zero:
            return ZERO
        if e > self.cap:
            raise ValueError(f"exponent {e} above cap {self.cap}")
        if e < self.v0:
            return ZERO
        return self.coeffs[e - self.v0]

    def valuation(self):
        """Lowest retained nonzero exponent, or None if no nonzero retained."""
        if self.exact_zero:
            return None
        for i, c in enumerate(self.coeffs):
            if not coeff_is_zero(c):
                return self.v0 + i
        return None

    def is_effectively_zero(self):
        return self.exact_zero or self.valuation() is None

    # -- arithmetic --------------------------------------------------------

    def _check_grid(self, other):
        if self.d != other.d:
            raise GridMismatch(f"grids 1/{self.d} vs 1/{other.d}")

    def __add__(self, other):
        self._check_grid(other)
        if self.exact_zero:
            return other
        if other.exact_zero:
            return self
        cap = min(self.cap, other.cap)
        v0 = min(self.v0, other.v0)
        if v0 > cap:
            v0 = cap + 1
        out = []
        for e in range(v0, cap + 1):
            a = self.coeffs[e - self.v0] if self.v0 <= e <= self.cap else ZERO
            b = other.coeffs[e - other.v0] if other.v0 <= e <= other.cap else ZERO
            out.append(a + b)
        return QSeries(self.d, v0, cap, out)

    def __neg__(self):
        if self.exact_zero:
            return self
        return QSeries(self.d, self.v0, self.cap, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        self._check_grid(other)
        if self.exact_zero or other.exact_zero:
            return QSeries.zero(self.d, min(self.cap, other.cap))
        cap = min(self.cap + other.v0, other.cap + self.v0)
        v0 = self.v0 + other.v0
        if v0 > cap:
            return QSeries(self.d, cap + 1, cap, ())
        n = cap - v0 + 1
        out = [ZERO] * n
        bc = other.coeffs
        blen = len(bc)
        for i, a in enumerate(self.coeffs):
            if coeff_is_zero(a):
                continue
            jmax = min(blen, n - i)
            for j in range(jmax):
                b = bc[j]
                if not coeff_is_zero(b):
                    out[i + j] = out[i + j] + a * b
        return QSeries(self.d, v0, cap, out)

    def scale(self, c, e=0):
        """Multiply by the monomial c*q^e (grid units); exact, no cap loss
        beyond the shift."""
        if self.exact_zero:
            return self
        if coeff_is_zero(c):
            return QSeries.zero(self.d, self.cap + e)
        return QSeries(
            self.d, self.v0 + e, self.cap + e, [c * a for a in self.coeffs]
        )

    def invert(self):
        """Multiplicative inverse on the largest provable window."""
        if self.exact_zero:
            raise IndeterminateValuation("cannot invert the exact zero series")
        w = self.valuation()
        if w is None:
            raise IndeterminateValuation(
                "all retained coefficients vanish; valuation unknown"
            )
        lead = self.coeff(w)
        try:
            lead_inv = coeff_invert(lead)
        except NotAUnit:
            raise NotAUnit(f"leading coefficient {coeff_str(lead)} is not a unit")
        K = self.cap - w
        t = [self.coeff(w + k) for k in range(K + 1)]
        s = [lead_inv] + [ZERO] * K
        for k in range(1, K + 1):
            acc = ZERO
            for j in range(1, k + 1):
                if not coeff_is_zero(t[j]):
                    acc = acc + t[j] * s[k - j]
            s[k] = -(lead_inv * acc)
        return QSeries(self.d, -w, self.cap - 2 * w, s)

    def truncate(self, cap):
        """Restrict knowledge to exponents <= cap (cap in grid units)."""
        if self.exact_zero:
            return QSeries.zero(self.d, cap)
        if cap >= self.cap:
            return self
        if cap < self.v0:
            return QSeries(self.d, cap + 1, cap, ())
        return QSeries(self.d, self.v0, cap, self.coeffs[: cap - self.v0 + 1])

    def rescale(self, d2):
        """Move to a finer grid d2 (d must divide d2)."""
        if d2 == self.d:
            return self
        if d2 % self.d != 0:
            raise GridMismatch(f"{self.d} does not divide {d2}")
        f = d2 // self.d
        if self.exact_zero:
            return QSeries.zero(d2, self.cap * f)
        v0 = self.v0 * f
        cap = self.cap * f + (f - 1)
        out = [ZERO] * (cap - v0 + 1)
        for i, c in enumerate(self.coeffs):
            out[i * f] = c
        return QSeries(d2, v0, cap, out)

    # -- comparison / display ----------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, QSeries):
            return NotImplemented
        if self.d != other.d:
            return False
        cap = min(self.cap, other.cap)
        a0 = cap + 1 if self.exact_zero else min(self.v0, cap + 1)
        b0 = cap + 1 if other.exact_zero else min(other.v0, cap + 1)
        for e in range(min(a0, b0), cap + 1):
            if self.coeff(e) != other.coeff(e):
                return False
        return True

    def __hash__(self):
        return hash((self.d, self.exact_zero, self.v0, self.cap, self.coeffs))

    def first_difference(self, other):
        """Lowest grid exponent where the two series disagree, or None."""
        cap = min(self.cap, other.cap)
        lo = []
        if not self.exact_zero:
            lo.append(self.v0)
        if not other.exact_zero:
            lo.append(other.v0)
        if not lo:
            return None
        for e in range(min(lo), cap + 1):
            if self.coeff(e) != other.coeff(e):
                return e
        return None

    def _exp_str(self, e):
        if self.d == 1:
            return str(e)
        fr = Fraction(e, self.d)
        return str(fr.numerator) if fr.denominator == 1 else f"{fr.numerator}/{fr.denominator}"

    def __str__(self):
        if self.exact_zero:
            return "0 (exact)"
        parts = []
        for i, c in enumerate(self.coeffs):
            if coeff_is_zero(c):
                continue
            e = self.v0 + i
            cs = coeff_str(c)
            if isinstance(c, UPoly) and ("+" in cs or "*" in cs or "u" in cs):
                cs = f"({cs})"
            if e == 0:
                parts.append(cs)
            elif cs == "1":
                parts.append(f"q^{self._exp_str(e)}" if e != self.d else "q")
            elif cs == "-1":
                parts.append(f"-q^{self._exp_str(e)}" if e != self.d else "-q")
            else:
                parts.append(f"{cs}*q^{self._exp_str(e)}" if e != self.d else f"{cs}*q")
        body = " + ".join(parts).replace("+ -", "- ") if parts else "0"
        return f"{body} + O(q^{self._exp_str(self.cap + 1)})"

    def __repr__(self):
        return f"QSeries({self})"


# -- elementary series operations (functional aliases) -----------------------

def qs_add(a: QSeries, b: QSeries) -> QSeries:
    return a + b


def qs_mul(a: QSeries, b: QSeries) -> QSeries:
    return a * b


def qs_invert(a: QSeries) -> QSeries:
    return a.invert()


# -- Pochhammer family -------------------------------------------------------

def poch_fin(c, e, n, cap, d=1, stride=None):
    """(a; q^m)_n with a = c*q^(e/d), for any integer n.

    ``e`` and ``stride`` are in grid units (stride defaults to d, i.e. base q).
    Negative n uses (a;q)_n = 1/(a q^n; q)_{-n}; a vanishing denominator
    factor raises Pole.
    """
    if stride is None:
        stride = d
    c = _as_coeff(c)
    if n == 0:
        return QSeries.one(cap, d)
    if n > 0:
        neg = sum(min(0, e + k * stride) for k in range(n))
        work_cap = cap - neg
        acc = QSeries.one(work_cap, d)
        for k in range(n):
            fe = e + k * stride
            if c == 1 and fe == 0:
                return QSeries.zero(d, cap)
            f = QSeries.from_pairs([(0, ONE), (fe, -c)], work_cap, d)
            acc = acc * f
        return acc.truncate(cap)
    # n < 0: build the denominator with enough cap for the final window
    m = -n
    den_val = 0
    for k in range(m):
        fe = e + (n + k) * stride
        if c == 1 and fe == 0:
            raise Pole(
                f"denominator factor 1 - q^0 vanishes in finite Pochhammer (n={n})"
            )
        den_val += min(0, fe)
    work_cap = cap + 2 * abs(den_val) + 1
    den = QSeries.one(work_cap, d)
    for k in range(m):
        fe = e + (n + k) * stride
        f = QSeries.from_pairs([(0, ONE), (fe, -c)], work_cap, d)
        den = den * f
    return den.invert().truncate(cap)


def poch_inf(c, e, cap, d=1, stride=None):
    """(a; q^m)_oo with a = c*q^(e/d); e, stride in grid units.

    Requires e >= 0 (else Divergent).  Returns the exact zero when the k=0
    factor is identically 1-1.
    """
    if stride is None:
        stride = d
    c = _as_coeff(c)
    if e < 0:
        raise Divergent(f"infinite product with negative base exponent {e}/{d}")
    if c == 1 and e == 0:
        return QSeries.zero(d, cap)
    acc = QSeries.one(cap, d)
    k = 0
    while e + k * stride <= cap:
        fe = e + k * stride
        if c == 1 and fe == 0:
            return QSeries.zero(d, cap)
        f = QSeries.from_pairs([(0, ONE), (fe, -c)], cap, d)
        acc = acc * f
        k += 1
    return acc


def inv_poch_q(n, cap, d=1, stride=None):
    """1/(q^m; q^m)_n, with the standard convention that it is 0 for n < 0."""
    if stride is None:
        stride = d
    if n < 0:
        return QSeries.zero(d, cap)
    if n == 0:
        return QSeries.one(cap, d)
    return poch_fin(ONE, stride, n, cap, d, stride).invert().truncate(cap)


def tau_p_mon(p, n):
    """tau_p(n) = (-1)^n q^(p*n*(n-1)/2) as a (coefficient, true-exponent) pair."""
    return QMonomial(mpq(-1) if n % 2 else ONE, p * (n * (n - 1) // 2))


def qbinom(n, k, cap, d=1, stride=None):
    """Gaussian binomial coefficient [n, k]_q as a series; 0 out of range."""
    if stride is None:
        stride = d
    if k < 0 or k > n:
        return QSeries.zero(d, cap)
    if k == 0 or k == n:
        return QSeries.one(cap, d)
    num = poch_fin(ONE, stride, n, cap, d, stride)
    res = num * inv_poch_q(k, cap, d, stride) * inv_poch_q(n - k, cap, d, stride)
    return res


def jtp_product(c_z, e_z, p, cap, d=1):
    """The triple product (z, q^(p+1)/z, q^(p+1); q^(p+1))_oo.

    ``e_z`` in grid units; both e_z >= 0 and (p+1)*d - e_z >= 0 must hold.
    """
    stride = (p + 1) * d
    c_z = _as_coeff(c_z)
    a = poch_inf(c_z, e_z, cap, d, stride)
    b = poch_inf(coeff_invert(c_z), stride - e_z, cap, d, stride)
    c = poch_inf(ONE, stride, cap, d, stride)
    return a * b * c
