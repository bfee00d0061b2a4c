"""Basic hypergeometric series and Nahm-type sums.

Both evaluators work by desugaring to the expression IR and delegating to the
engine, so they share its valuation certificates and truncation guarantees.
"""

from __future__ import annotations

from fractions import Fraction

from gmpy2 import mpq

from .errors import NotPositiveDefinite
from .expr import (
    Div,
    Expr,
    InvPochQ,
    LinForm,
    Mon,
    Mul,
    Nahm,
    ParamMon,
    Phi,
    PochFin,
    Pow,
    QuadForm,
    Sum,
)

PHI_INDEX = "_n"


def phi_to_sum(p: Phi) -> Expr:
    """Desugar an r+1-phi-s node into an explicit one-index lattice sum.

    The summand is prod(upper; q^m)_n / prod(lower; q^m)_n *
    tau_m(n)^(s+1-r) * arg^n / (q^m; q^m)_n, with m the base power.
    """
    n = LinForm.var(PHI_INDEX)
    m = p.base_power
    num = [PochFin(b, n, m) for b in p.upper]
    den = [PochFin(b, n, m) for b in p.lower]
    j = len(p.lower) + 1 - len(p.upper)
    if j % 2:
        num.append(Pow(ParamMon.make(-1), n))
    if j:
        # q^(j*m*n*(n-1)/2)
        tri = QuadForm.make(0, {PHI_INDEX: mpq(-j * m, 2)},
                            {(PHI_INDEX, PHI_INDEX): mpq(j * m, 2)})
        num.append(Mon(ParamMon.make(1, None, tri)))
    num.append(Pow(p.arg, n))
    num.append(InvPochQ(n, m))
    body = Mul(tuple(num)) if len(num) > 1 else num[0]
    term = Div(body, Mul(tuple(den)) if len(den) > 1 else den[0]) if den else body
    return Sum((PHI_INDEX,), term)


def nahm_grid(node: Nahm) -> int:
    """Grid denominator d so that all exponents of the sum lie in (1/d)*Z."""
    return nahm_quadform(node).denominator_on_lattice()


def nahm_quadform(node: Nahm) -> QuadForm:
    r = len(node.a)
    names = [f"_n{i}" for i in range(r)]
    quad = {}
    lin = {}
    for i in range(r):
        for j in range(r):
            key = (names[i], names[j]) if names[i] <= names[j] else (names[j], names[i])
            quad[key] = quad.get(key, mpq(0)) + mpq(node.a[i][j], 2)
        lin[names[i]] = mpq(node.b[i])
    return QuadForm.make(mpq(node.c), lin, quad)


def check_positive_definite(node: Nahm):
    """Leading-principal-minor test; raises NotPositiveDefinite."""
    r = len(node.a)
    rows = [[Fraction(str(mpq(x))) for x in row] for row in node.a]
    for k in range(1, r + 1):
        if _det([row[:k] for row in rows[:k]]) <= 0:
            raise NotPositiveDefinite(f"leading {k}x{k} minor is not positive")


def _det(m):
    n = len(m)
    a = [row[:] for row in m]
    det = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if a[i][c]), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        inv = 1 / a[c][c]
        for i in range(c + 1, n):
            f = a[i][c] * inv
            if f:
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return det


def nahm_to_sum(node: Nahm) -> Expr:
    """Desugar a Nahm node to a lattice sum (exponents may be grid-fractional)."""
    check_positive_definite(node)
    r = len(node.a)
    names = [f"_n{i}" for i in range(r)]
    qf = nahm_quadform(node)
    factors = [Mon(ParamMon.make(1, None, qf))]
    factors.extend(InvPochQ(LinForm.var(nm)) for nm in names)
    return Sum(tuple(names), Mul(tuple(factors)))


def phi_eval(p: Phi, env, cap):
    """Expand a basic hypergeometric series under a substitution."""
    from .engine import eval_expr

    return eval_expr(phi_to_sum(p), env, cap)


def nahm_eval(node: Nahm, cap):
    """Expand a Nahm sum; the result lives on the grid returned by nahm_grid."""
    from .engine import eval_expr

    return eval_expr(nahm_to_sum(node), {}, cap, d=nahm_grid(node))
