"""Exact coefficient arithmetic.

Two coefficient rings are supported: arbitrary-precision rationals (gmpy2.mpq,
exposed as ``Rat``) and the truncated polynomial ring Q[u]/(u^(M+1)) used when
one parameter is kept symbolic (``UPoly``).  All values are immutable.
"""

from __future__ import annotations

from gmpy2 import mpq

from .errors import ModeMismatch, NotAUnit

Rat = mpq

ZERO = mpq(0)
ONE = mpq(1)

DEFAULT_POLY_CAP = 32


def rat(p, q=1) -> Rat:
    """Exact rational p/q in canonical form (positive denominator, gcd 1)."""
    return mpq(p, q)


def rat_from_str(s: str) -> Rat:
    """Parse "p/q" or "p" (decimal integers)."""
    return mpq(s.strip())


def rat_str(x) -> str:
    """Serialize as "p/q", or "p" when the denominator is 1."""
    x = mpq(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


class UPoly:
    """Dense polynomial in the auxiliary symbol u, truncated at u^(cap+1).

    Arithmetic silently drops degrees above ``cap``; two polynomials with
    different caps never mix.
    """

    __slots__ = ("coeffs", "cap")

    def __init__(self, coeffs, cap: int):
        if cap < 0:
            raise ValueError("cap must be nonnegative")
        cs = [mpq(c) for c in coeffs[: cap + 1]]
        cs.extend([ZERO] * (cap + 1 - len(cs)))
        self.coeffs = tuple(cs)
        self.cap = cap

    @classmethod
    def const(cls, value, cap: int) -> "UPoly":
        return cls([mpq(value)], cap)

    @classmethod
    def u(cls, cap: int) -> "UPoly":
        """The symbol u itself."""
        return cls([ZERO, ONE], cap)

    def _coerce(self, other) -> "UPoly":
        if isinstance(other, UPoly):
            if other.cap != self.cap:
                raise ModeMismatch(
                    f"polynomial caps differ: {self.cap} vs {other.cap}"
                )
            return other
        return UPoly.const(other, self.cap)

    def __add__(self, other):
        o = self._coerce(other)
        return UPoly([a + b for a, b in zip(self.coeffs, o.coeffs)], self.cap)

    __radd__ = __add__

    def __neg__(self):
        return UPoly([-a for a in self.coeffs], self.cap)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        n = self.cap + 1
        out = [ZERO] * n
        for i, a in enumerate(self.coeffs):
            if not a:
                continue
            for j in range(n - i):
                b = o.coeffs[j]
                if b:
                    out[i + j] += a * b
        return UPoly(out, self.cap)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "UPoly":
        if n < 0:
            return self.invert() ** (-n)
        acc = UPoly.const(ONE, self.cap)
        for _ in range(n):
            acc = acc * self
        return acc

    def __truediv__(self, other):
        return self * self._coerce(other).invert()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.invert()

    def invert(self) -> "UPoly":
        """Multiplicative inverse mod u^(cap+1); requires a unit constant term."""
        a0 = self.coeffs[0]
        if not a0:
            raise NotAUnit("constant term is zero")
        n = self.cap + 1
        inv0 = ONE / a0
        out = [inv0] + [ZERO] * (n - 1)
        for k in range(1, n):
            acc = ZERO
            for j in range(1, k + 1):
                if self.coeffs[j]:
                    acc += self.coeffs[j] * out[k - j]
            out[k] = -inv0 * acc
        return UPoly(out, self.cap)

    def shift(self, m: int) -> "UPoly":
        """Multiply by u^m (degrees above cap drop)."""
        if m == 0:
            return self
        return UPoly([ZERO] * m + list(self.coeffs), self.cap)

    def component(self, n: int) -> Rat:
        """The u^n coefficient."""
        if n > self.cap:
            raise ValueError(f"u-degree {n} exceeds cap {self.cap}")
        return self.coeffs[n]

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        if isinstance(other, UPoly):
            return self.cap == other.cap and self.coeffs == other.coeffs
        if self.is_zero():
            return mpq(other) == 0 if isinstance(other, (int, type(ONE))) else NotImplemented
        if isinstance(other, (int, type(ONE))):
            return self.coeffs[0] == other and not any(self.coeffs[1:])
        return NotImplemented

    def __hash__(self):
        return hash((self.cap, self.coeffs))

    def __str__(self):
        parts = []
        for i, c in enumerate(self.coeffs):
            if not c:
                continue
            if i == 0:
                parts.append(rat_str(c))
            elif i == 1:
                parts.append("u" if c == 1 else f"{rat_str(c)}*u")
            else:
                parts.append(f"u^{i}" if c == 1 else f"{rat_str(c)}*u^{i}")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"UPoly({self}, cap={self.cap})"


def coeff_add(a, b):
    """Ring sum of two coefficients (rationals, ints, or UPoly)."""
    if isinstance(a, UPoly) or isinstance(b, UPoly):
        if not isinstance(a, UPoly):
            a, b = b, a
        return a + b
    return mpq(a) + mpq(b)


def coeff_mul(a, b):
    """Ring product of two coefficients."""
    if isinstance(a, UPoly) or isinstance(b, UPoly):
        if not isinstance(a, UPoly):
            a, b = b, a
        return a * b
    return mpq(a) * mpq(b)


def coeff_invert(a):
    """Multiplicative inverse; raises NotAUnit for zero / non-unit input."""
    if isinstance(a, UPoly):
        return a.invert()
    a = mpq(a)
    if not a:
        raise NotAUnit("zero is not invertible")
    return ONE / a


def coeff_neg(a):
    return -a if isinstance(a, UPoly) else -mpq(a)


def coeff_is_zero(a) -> bool:
    if isinstance(a, UPoly):
        return a.is_zero()
    return mpq(a) == 0


def coeff_str(a) -> str:
    return str(a) if isinstance(a, UPoly) else rat_str(a)
