"""Static q-valuation analysis for lattice sums.

Given a summed term and a concrete parameter substitution, this module
produces

* an exact piecewise valuation lower bound ``bound_at(indices)`` (exact for
  products of atoms; a true lower bound across additions), and
* a finite enumeration box guaranteed to contain every index tuple whose
  term valuation is <= a requested cap.

The box is certified by quadratic minorants of the valuation, built per
sign-region of any ambiguous linear forms (Pochhammer counts such as i-j),
combined with support constraints from factors that vanish outside a
half-space (1/(q;q)_n for n<0, delta factors, terminating Pochhammers).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct

from gmpy2 import mpq

from .errors import (
    Divergent,
    IndeterminateValuation,
    NonCoercive,
    Pole,
    UnresolvedSign,
)
from .expr import (
    Add,
    Delta,
    Div,
    Expr,
    InvPochQ,
    LinForm,
    Mon,
    Mul,
    Neg,
    ParamMon,
    PochFin,
    PochInf,
    Pow,
    QBinom,
    QuadForm,
    SeqRef,
    Sum,
    Tau,
    lin_mul,
    subst_indices,
    walk,
)

INF = float("inf")

_MAX_RADIUS = 10 ** 6
_MAX_SPLIT_DEPTH = 24
_MAX_REGIONS = 4096


class _NeedSplit(Exception):
    """Internal: analysis requires a sign case split on a linear form."""

    def __init__(self, form: LinForm):
        super().__init__(str(form))
        self.form = form


def mon_coeff(m: ParamMon, env):
    """Numeric coefficient of a parameter monomial under env: c * prod c_p^k."""
    c = m.c
    for p, k in m.powers:
        cp = env[p][0]
        c *= cp ** k if k >= 0 else 1 / (cp ** -k)
    return c


def mon_exponent(m: ParamMon, env) -> QuadForm:
    """q-exponent of a parameter monomial under env, as a QuadForm in indices."""
    e = m.qexp
    shift = mpq(0)
    for p, k in m.powers:
        shift += k * env[p][1]
    return e + shift


# --- exact piecewise valuation ----------------------------------------------


def node_val(e: Expr, env, asg):
    """Exact valuation of a product-of-atoms node at an index assignment.

    Returns an mpq, or INF when the node is exactly zero.  Across Add nodes
    the result is a lower bound (min of branches).  Raises Pole when a
    denominator vanishes identically.
    """
    if isinstance(e, Mon):
        return mon_exponent(e.mon, env).eval(asg)
    if isinstance(e, Tau):
        n = e.arg.eval(asg)
        return mpq(e.p * n * (n - 1), 2)
    if isinstance(e, Pow):
        n = e.exp.eval(asg)
        return n * mon_exponent(e.base, env).eval(asg)
    if isinstance(e, PochFin):
        return _poch_val(mon_coeff(e.base, env), mon_exponent(e.base, env).eval(asg),
                         e.count.eval(asg), e.step)
    if isinstance(e, PochInf):
        c = mon_coeff(e.base, env)
        ev = mon_exponent(e.base, env).eval(asg)
        if ev < 0:
            raise Divergent(f"infinite product base has exponent {ev}")
        if c == 1 and ev == 0:
            return INF
        return mpq(0)
    if isinstance(e, InvPochQ):
        return INF if e.count.eval(asg) < 0 else mpq(0)
    if isinstance(e, QBinom):
        n, k = e.n.eval(asg), e.k.eval(asg)
        return mpq(0) if 0 <= k <= n else INF
    if isinstance(e, Delta):
        return mpq(0) if e.arg.eval(asg) == 0 else INF
    if isinstance(e, Mul):
        acc = mpq(0)
        for f in e.factors:
            v = node_val(f, env, asg)
            if v == INF:
                return INF
            acc += v
        return acc
    if isinstance(e, Div):
        den = node_val(e.den, env, asg)
        if den == INF:
            raise Pole("denominator vanishes identically at an index point")
        num = node_val(e.num, env, asg)
        return INF if num == INF else num - den
    if isinstance(e, Add):
        return min(node_val(t, env, asg) for t in e.terms)
    if isinstance(e, Neg):
        return node_val(e.inner, env, asg)
    if isinstance(e, (Sum, SeqRef)):
        raise UnresolvedSign(f"{type(e).__name__} must be resolved before analysis")
    raise TypeError(type(e).__name__)


def _poch_val(c, ev, n, s):
    if n >= 0:
        acc = mpq(0)
        for k in range(n):
            g = ev + s * k
            if g == 0 and c == 1:
                return INF
            acc += min(mpq(0), g)
        return acc
    acc = mpq(0)
    for k in range(n, 0):
        g = ev + s * k
        if g == 0 and c == 1:
            raise Pole("reciprocal Pochhammer factor vanishes")
        acc += max(mpq(0), -g)
    return acc


# --- affine helpers ----------------------------------------------------------


def _affine_parts(qf: QuadForm):
    """(const, {var: coeff}) of an affine QuadForm; None if quadratic."""
    if qf.quad:
        return None
    return qf.const, qf.lin_map


def _neg_part_affine(qf: QuadForm) -> QuadForm:
    """Affine lower bound of min(0, qf) on the nonnegative lattice."""
    parts = _affine_parts(qf)
    if parts is None:
        raise UnresolvedSign(f"non-affine exponent {qf}")
    c0, lin = parts
    return QuadForm.make(min(mpq(0), c0), {v: min(mpq(0), a) for v, a in lin.items()})


def _pos_part_affine_neg(qf: QuadForm) -> QuadForm:
    """Affine upper bound of max(0, -qf) on the nonnegative lattice."""
    parts = _affine_parts(qf)
    if parts is None:
        raise UnresolvedSign(f"non-affine exponent {qf}")
    c0, lin = parts
    return QuadForm.make(max(mpq(0), -c0), {v: max(mpq(0), -a) for v, a in lin.items()})


def _qf_mul_affine(a: QuadForm, b: QuadForm) -> QuadForm:
    """Exact product of two affine QuadForms (rational coefficients)."""
    pa, pb = _affine_parts(a), _affine_parts(b)
    if pa is None or pb is None:
        raise UnresolvedSign("product would exceed quadratic degree")
    (ca, la), (cb, lb) = pa, pb
    out = QuadForm.make(ca * cb,
                        {v: k * cb for v, k in la.items()})
    out = out + QuadForm.make(0, {v: k * ca for v, k in lb.items()})
    qm = {}
    for v, kv in la.items():
        for w, kw in lb.items():
            key = (v, w) if v <= w else (w, v)
            qm[key] = qm.get(key, mpq(0)) + kv * kw
    return out + QuadForm.make(0, None, qm)


def _neg_count_poch_minorant(cnt: LinForm, ev: QuadForm, s: int) -> QuadForm:
    """Lower bound for (base; q^s)_L with L <= 0 on the region lattice.

    With m = -L the value is sum_{j=1..m} max(0, js - E).  When E has a
    constant upper bound U (no positive variable coefficients) this is at
    least (s/2)(m^2+m) - U*m + (U*j0 - s*j0(j0+1)/2) with j0 = max(0,
    floor(U/s)); otherwise fall back to the trivial bound 0.
    """
    parts = _affine_parts(ev)
    if parts is None or any(a > 0 for a in parts[1].values()):
        return QuadForm.make(0)
    u = parts[0]
    j0 = max(0, _floor(u / s))
    m = _lin_to_qf(-cnt)
    out = _qf_mul_affine(m, m + 1).scale(mpq(s, 2))
    out = out + m.scale(-u)
    return out + (u * j0 - mpq(s * j0 * (j0 + 1), 2))


def _sign_on_lattice(lf: LinForm):
    """'nonneg', 'nonpos', or 'mixed' over the nonnegative lattice."""
    cs = [c for _, c in lf.coeffs]
    if lf.const >= 0 and all(c >= 0 for c in cs):
        return "nonneg"
    if lf.const <= 0 and all(c <= 0 for c in cs):
        return "nonpos"
    return "mixed"


def _sign_affine(parts):
    """Sign of an affine (const, lin) pair over the nonnegative lattice."""
    c0, lin = parts
    if c0 >= 0 and all(a >= 0 for a in lin.values()):
        return "nonneg"
    if c0 <= 0 and all(a <= 0 for a in lin.values()):
        return "nonpos"
    return "mixed"


def _integer_affine(parts) -> bool:
    c0, lin = parts
    return (mpq(c0).denominator == 1
            and all(mpq(a).denominator == 1 for a in lin.values()))


def _qf_to_lin(qf: QuadForm) -> LinForm:
    """Affine integer-coefficient QuadForm back to a LinForm."""
    parts = _affine_parts(qf)
    if parts is None or not _integer_affine(parts):
        raise UnresolvedSign(f"{qf} is not an integer linear form")
    c0, lin = parts
    return LinForm.make(int(c0), {v: int(a) for v, a in lin.items()})


def _lin_to_qf(lf: LinForm) -> QuadForm:
    return QuadForm.from_lin(lf)


def _poch_min_maj(cnt: LinForm, ev: QuadForm, step: int):
    """(minorant, majorant) of the valuation of (base*q^E; q^step)_cnt.

    Both bounds are exact whenever the signs of the count and of E (and, when
    both matter, of E + cnt - 1) are resolved on the region lattice; raises
    _NeedSplit carrying the ambiguous form otherwise.
    """
    csign = _sign_on_lattice(cnt)
    if csign == "mixed":
        raise _NeedSplit(cnt)
    if csign == "nonpos":
        minor = _neg_count_poch_minorant(cnt, ev, step)
        m = _lin_to_qf(-cnt)
        major = (_qf_mul_affine(m, _pos_part_affine_neg(ev))
                 + _qf_mul_affine(m, m + 1).scale(mpq(step, 2)))
        return minor, major
    parts = _affine_parts(ev)
    if parts is None:
        raise UnresolvedSign(f"non-affine pochhammer exponent {ev}")
    esign = _sign_affine(parts)
    zero = QuadForm.make(0)
    if esign == "nonneg":
        return zero, zero
    if step == 1 and _integer_affine(parts):
        if esign == "nonpos":
            last = ev + _lin_to_qf(cnt) - 1  # exponent of the final factor
            lsign = _sign_affine(_affine_parts(last))
            if lsign == "nonpos":
                # every factor exponent is <= 0: sum_{k<n} (E+k)
                exact = (_qf_mul_affine(_lin_to_qf(cnt), ev)
                         + (lin_mul(cnt, cnt) - _lin_to_qf(cnt)).scale(mpq(1, 2)))
                return exact, exact
            if lsign == "nonneg":
                # the negative factor exponents saturate at E..-1
                exact = (ev - _qf_mul_affine(ev, ev)).scale(mpq(1, 2))
                return exact, exact
            raise _NeedSplit(_qf_to_lin(last))
        raise _NeedSplit(_qf_to_lin(ev))
    # sound fallback: each of the cnt factors contributes at least min(0, E)
    return _qf_mul_affine(_lin_to_qf(cnt), _neg_part_affine(ev)), zero


# --- region-space minorants / majorants --------------------------------------


def _minorants(e: Expr, env, sub) -> list:
    """Lower bounds (list = disjunction, true bound is their min)."""
    if isinstance(e, Mon):
        return [mon_exponent(e.mon, env).subst(sub)]
    if isinstance(e, Tau):
        lf = e.arg.subst(sub)
        sq = lin_mul(lf, lf)
        return [(sq - _lin_to_qf(lf)).scale(mpq(e.p, 2))]
    if isinstance(e, Pow):
        ev = mon_exponent(e.base, env).subst(sub)
        lf = _lin_to_qf(e.exp.subst(sub))
        return [_qf_mul_affine(lf, ev)]
    if isinstance(e, PochFin):
        minor, _ = _poch_min_maj(e.count.subst(sub),
                                 mon_exponent(e.base, env).subst(sub), e.step)
        return [minor]
    if isinstance(e, PochInf):
        ev = mon_exponent(e.base, env).subst(sub)
        parts = _affine_parts(ev)
        if parts is None or parts[0] < 0 or any(a < 0 for a in parts[1].values()):
            raise UnresolvedSign(f"infinite product exponent {ev} not provably >= 0")
        return [QuadForm.make(0)]
    if isinstance(e, (InvPochQ, QBinom, Delta)):
        return [QuadForm.make(0)]
    if isinstance(e, Mul):
        lists = [_minorants(f, env, sub) for f in e.factors]
        return [sum(combo, QuadForm.make(0)) for combo in iproduct(*lists)]
    if isinstance(e, Div):
        num = _minorants(e.num, env, sub)
        den = _majorant(e.den, env, sub)
        return [n - den for n in num]
    if isinstance(e, Add):
        out = []
        for t in e.terms:
            out.extend(_minorants(t, env, sub))
        return out
    if isinstance(e, Neg):
        return _minorants(e.inner, env, sub)
    raise UnresolvedSign(f"cannot bound {type(e).__name__}")


def _majorant(e: Expr, env, sub) -> QuadForm:
    """Upper bound of the valuation (needed for denominators)."""
    if isinstance(e, Mon):
        return mon_exponent(e.mon, env).subst(sub)
    if isinstance(e, Tau):
        lf = e.arg.subst(sub)
        return (lin_mul(lf, lf) - _lin_to_qf(lf)).scale(mpq(e.p, 2))
    if isinstance(e, Pow):
        ev = mon_exponent(e.base, env).subst(sub)
        return _qf_mul_affine(_lin_to_qf(e.exp.subst(sub)), ev)
    if isinstance(e, PochFin):
        _, major = _poch_min_maj(e.count.subst(sub),
                                 mon_exponent(e.base, env).subst(sub), e.step)
        return major
    if isinstance(e, (PochInf, InvPochQ, QBinom, Delta)):
        return QuadForm.make(0)
    if isinstance(e, Mul):
        acc = QuadForm.make(0)
        for f in e.factors:
            acc = acc + _majorant(f, env, sub)
        return acc
    if isinstance(e, Div):
        minors = _minorants(e.den, env, sub)
        if len(minors) != 1:
            raise UnresolvedSign("cannot majorize a branching denominator")
        return _majorant(e.num, env, sub) - minors[0]
    if isinstance(e, Add):
        # sound absent cancellation at the minimal exponent: the valuation of
        # a sum is then the min over branches, so any single branch's exact
        # majorant is an upper bound.  Cancelling assignments make some
        # denominator vanish and are rejected as poles at evaluation time.
        got = []
        for t in e.terms:
            try:
                got.append(_majorant(t, env, sub))
            except UnresolvedSign:
                continue
        for m in got:
            if m.is_const():
                return m
        if got:
            return got[0]
        raise UnresolvedSign("cannot majorize any branch of an addition")
    if isinstance(e, Neg):
        return _majorant(e.inner, env, sub)
    raise UnresolvedSign(f"cannot majorize {type(e).__name__}")


# --- support constraints ------------------------------------------------------


def _support_constraints(e: Expr, env, sub, out, numerator=True):
    """Collect affine QuadForms that must be >= 0 wherever the term is nonzero."""
    if isinstance(e, Mul):
        for f in e.factors:
            _support_constraints(f, env, sub, out, numerator)
    elif isinstance(e, Div):
        _support_constraints(e.num, env, sub, out, numerator)
    elif isinstance(e, Neg):
        _support_constraints(e.inner, env, sub, out, numerator)
    elif not numerator:
        return
    elif isinstance(e, InvPochQ):
        out.append(_lin_to_qf(e.count.subst(sub)))
    elif isinstance(e, QBinom):
        n, k = e.n.subst(sub), e.k.subst(sub)
        out.extend([_lin_to_qf(k), _lin_to_qf(n - k), _lin_to_qf(n)])
    elif isinstance(e, Delta):
        lf = e.arg.subst(sub)
        out.extend([_lin_to_qf(lf), _lin_to_qf(-lf)])
    elif isinstance(e, PochFin):
        # (q^E; q^s)_L vanishes for s*L > -E when E is a nonpositive
        # integer multiple of s; then support requires s*L + E <= 0.
        if mon_coeff(e.base, env) == 1:
            ev = mon_exponent(e.base, env).subst(sub)
            if ev.is_const():
                g = ev.const
                if g <= 0 and g.denominator == 1 and int(g) % e.step == 0:
                    cnt = e.count.subst(sub)
                    out.append(_lin_to_qf(-cnt).scale(e.step) - g)
            elif e.step == 1:
                parts = _affine_parts(ev)
                if (parts is not None and _integer_affine(parts)
                        and _sign_affine(parts) == "nonpos"):
                    cnt = e.count.subst(sub)
                    out.append(_lin_to_qf(-cnt) - ev)


# --- regions ------------------------------------------------------------------


def _split_region(sub, rvars, form: LinForm, fresh: str):
    """Split a region on the sign of an integer linear form over its variables.

    Returns charts whose union is the original orthant, partitioned into a
    part where ``form >= 0`` and a part where ``form <= -1``.  Every
    substitution introduced maps an old variable to a *nonnegative* affine
    expression of the new chart variables (an enumerated constant, or
    ``positive affine + fresh``), so any previously sign-resolved form stays
    resolved after the split and the overall case analysis terminates.
    """
    charts = []
    serial = 0

    def rewrite(ops, mapping):
        out = []
        for op in ops:
            if op[0] == "ge":
                out.append(("ge", op[1].subst(mapping)))
            else:
                out.append(("pivot", op[1], op[2].subst(mapping)))
        return out

    work = [(dict(sub), list(rvars), [("ge", form)]),
            (dict(sub), list(rvars), [("ge", -form - 1)])]
    while work:
        s, rv, ops = work.pop()
        if not ops:
            charts.append((s, rv))
            continue
        op, rest_ops = ops[0], ops[1:]
        if op[0] == "pivot":
            # v = -rest + fresh; -rest is nonnegative here because the chart
            # already enforced rest <= -1
            _, v, rest = op
            neg = -rest
            serial += 1
            name = f"{fresh}_{serial}"
            repl = LinForm.make(neg.const, {**dict(neg.coeffs), name: 1})
            work.append((_compose(s, v, repl),
                         [x for x in rv if x != v] + [name],
                         rewrite(rest_ops, {v: repl})))
            continue
        g = op[1]
        cm = {w: c for w, c in g.coeff_map.items() if c != 0}
        if not cm:
            if g.const >= 0:
                work.append((s, rv, rest_ops))
            continue  # constant negative: empty chart
        if g.const >= 0 and all(c > 0 for c in cm.values()):
            work.append((s, rv, rest_ops))  # resolved nonnegative
            continue
        if all(c < 0 for c in cm.values()):
            if g.const < 0:
                continue  # empty chart
            w = sorted(cm)[0]
            for k in range(g.const // (-cm[w]) + 1):
                klf = LinForm.make(k, {})
                work.append((_compose(s, w, klf),
                             [x for x in rv if x != w],
                             rewrite(ops, {w: klf})))
            continue
        pivot = next((v for v in sorted(cm) if cm[v] == 1), None)
        if pivot is None:
            raise UnresolvedSign(f"cannot split on linear form {form}")
        rest = LinForm.make(g.const, {w: c for w, c in cm.items() if w != pivot})
        # either the remainder is itself nonnegative (g follows), or it is
        # <= -1 and the pivot variable can be solved for exactly
        work.append((s, rv, [("ge", rest)] + rest_ops))
        work.append((s, rv,
                     [("ge", -rest - 1), ("pivot", pivot, rest)] + rest_ops))
    return charts


def _cross_split_candidate(ps, rvars):
    """A variable-difference form whose sign split may diagonalize a minorant.

    Picks the most negative off-diagonal quadratic coefficient between two
    region variables; returns None when every cross term is nonnegative.
    """
    best = None
    for p in ps:
        for (v, w), c in p.quad_map.items():
            if v == w or c >= 0 or v not in rvars or w not in rvars:
                continue
            key = (c, v, w)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    _, v, w = best
    return LinForm.make(0, {v: 1, w: -1})


def _compose(sub, var, repl):
    out = {k: lf.subst({var: repl}) for k, lf in sub.items()}
    out[var] = repl
    return out


# --- radii ---------------------------------------------------------------------


def _int_min_quadratic(q, l, hi):
    """Exact min of q*t^2 + l*t over integers t in [0, hi] (hi may be None = inf)."""
    if q == 0:
        if l >= 0:
            return mpq(0)
        if hi is None:
            return None  # unbounded below
        return l * hi
    if q < 0:
        if hi is None:
            return None
        return min(mpq(0), q * hi * hi + l * hi)
    # q > 0: vertex at -l/(2q)
    vert = -l / (2 * q)
    cands = [0]
    t0 = int(vert)
    for t in (t0 - 1, t0, t0 + 1):
        if t >= 0 and (hi is None or t <= hi):
            cands.append(t)
    if hi is not None:
        cands.append(hi)
    return min(q * t * t + l * t for t in cands)


def _radius_1d(q, l, c, cap):
    """Smallest R >= -1 with q*t^2 + l*t + c > cap for every integer t > R."""
    if q < 0:
        return None
    if q == 0:
        if l <= 0:
            return None
        r = (cap - c) / l
        return max(-1, _floor(r))
    vert = max(0, int(-l / (2 * q)) + 1)
    r = -1
    t = 0
    while t <= max(vert, r + 1) and t < _MAX_RADIUS:
        if q * t * t + l * t + c <= cap:
            r = t
        t += 1
    # past the vertex the quadratic is increasing; extend while still <= cap
    while q * t * t + l * t + c <= cap:
        r = t
        t += 1
        if t > _MAX_RADIUS:
            return None
    return r


def _floor(x) -> int:
    f = Fraction(x.numerator, x.denominator) if isinstance(x, type(mpq(0))) else Fraction(x)
    return f.numerator // f.denominator


def _simplex_min(quad, xs):
    """Exact min of the quadratic form over the standard simplex on xs."""
    def qc(u, v):
        key = (u, v) if u <= v else (v, u)
        return quad.get(key, mpq(0))

    cands = [qc(v, v) for v in xs]
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            u, v = xs[i], xs[j]
            a, b, m = qc(u, u), qc(v, v), qc(u, v)
            den = 2 * (a + b - m)
            if den != 0:
                t = (2 * b - m) / den
                if 0 < t < 1:
                    cands.append(a * t * t + b * (1 - t) * (1 - t) + m * t * (1 - t))
    if len(xs) == 3:
        sol = _solve_simplex_interior(quad, xs, qc)
        if sol is not None:
            cands.append(sol)
    elif len(xs) > 3:
        return None
    return min(cands)


def _solve_simplex_interior(quad, xs, qc):
    # KKT system: 2*Q*t = lam, sum t = 1, all t > 0
    n = len(xs)
    rows = []
    for i in range(n):
        row = [Fraction(str(2 * qc(xs[i], xs[j]) if i == j else qc(xs[i], xs[j])))
               for j in range(n)]
        row.append(Fraction(-1))  # -lam
        row.append(Fraction(0))
        rows.append(row)
    rows.append([Fraction(1)] * n + [Fraction(0), Fraction(1)])
    sol = _gauss(rows)
    if sol is None:
        return None
    ts = sol[:n]
    if any(t <= 0 for t in ts):
        return None
    val = Fraction(0)
    for i in range(n):
        for j in range(n):
            val += Fraction(str(qc(xs[i], xs[j]) if i <= j else 0)) * ts[i] * ts[j]
    return mpq(val.numerator, val.denominator)


def _gauss(rows):
    n = len(rows)
    m = len(rows[0]) - 1
    a = [r[:] for r in rows]
    piv = []
    r = 0
    for c in range(m):
        p = next((i for i in range(r, n) if a[i][c]), None)
        if p is None:
            continue
        a[r], a[p] = a[p], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(n):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        piv.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if a[i][m]:
            return None  # inconsistent
    if len(piv) < m:
        return None  # underdetermined
    sol = [Fraction(0)] * m
    for i, c in enumerate(piv):
        sol[c] = a[i][m]
    return sol


def _region_radii(ps, constraints, rvars, cap):
    """Per-variable radii for {min(ps) <= cap} intersected with constraints.

    Returns dict var -> radius (inclusive; -1 means the region is empty),
    or raises NonCoercive.
    """
    radii = {}
    cap = mpq(cap)

    for cons in constraints:
        if cons.is_const() and cons.const < 0:
            return {v: -1 for v in rvars}

    def constraint_pass():
        progress = False
        for cons in constraints:
            c0, lin = cons.const, cons.lin_map
            for v, gv in lin.items():
                if gv >= 0 or v in radii:
                    continue
                total = c0
                ok = True
                for u, gu in lin.items():
                    if u == v:
                        continue
                    if gu > 0:
                        if u not in radii:
                            ok = False
                            break
                        total += gu * radii[u]
                if not ok:
                    continue
                radii[v] = max(-1, _floor(total / (-gv)))
                progress = True
        return progress

    pending = [dict() for _ in ps]

    # alternate constraint completion and minorant radii until a fixpoint;
    # a variable is certified only when EVERY minorant bounds it (the true
    # bound is the min over ps)
    for _ in range(2 * len(rvars) + 2):
        moved = constraint_pass()
        for p, pend in zip(ps, pending):
            got = _quadform_radii(p, rvars, radii, cap)
            if got:
                for v, r in got.items():
                    pend[v] = max(pend.get(v, -1), r)
        newly = False
        for v in rvars:
            if v in radii:
                continue
            if all(v in pend for pend in pending):
                radii[v] = max(pend[v] for pend in pending)
                newly = True
        if all(v in radii for v in rvars):
            break
        if not (moved or newly):
            break

    missing = [v for v in rvars if v not in radii]
    if missing:
        raise NonCoercive(
            f"no certified growth of the term valuation in direction(s) {missing}"
        )
    return radii


def _quadform_radii(p: QuadForm, rvars, fixed, cap):
    """Radii for the free variables of {p <= cap}, given already-bounded vars.

    Returns {var: radius} for every variable in rvars not in ``fixed``, or
    None when p is not coercive enough on its own.
    """
    free = [v for v in rvars if v not in fixed]
    if not free:
        return {}
    quad = p.quad_map
    lin = p.lin_map
    const = p.const

    # fold bounded variables in conservatively (their exact worst case)
    for u in rvars:
        if u not in fixed:
            continue
        hi = fixed[u]
        if hi < 0:
            return {v: -1 for v in free}
        quu = quad.pop((u, u), mpq(0))
        lu = lin.pop(u, mpq(0))
        worst = _int_min_quadratic(quu, lu, hi)
        const += worst
        for w in list(quad):
            if u in w:
                other = w[0] if w[1] == u else w[1]
                c = quad.pop(w)
                if other == u:
                    continue
                if other in fixed:
                    const += min(mpq(0), c * hi * fixed[other])
                else:
                    lin[other] = lin.get(other, mpq(0)) + min(mpq(0), c * hi)

    diag = {v: quad.get((v, v), mpq(0)) for v in free}
    lfree = {v: lin.get(v, mpq(0)) for v in free}
    offdiag = {k: c for k, c in quad.items() if k[0] != k[1]}

    # separable route: all cross terms and all per-variable parts nonnegative;
    # flat directions are simply omitted (constraints may still bound them)
    if all(c >= 0 for c in offdiag.values()):
        mins = {v: _int_min_quadratic(diag[v], lfree[v], None) for v in free}
        if all(m is not None for m in mins.values()):
            out = {}
            base = const + sum(mins.values())
            for v in free:
                r = _radius_1d(diag[v], lfree[v], base - mins[v], cap)
                if r is not None:
                    out[v] = r
            if out:
                return out

    # global route: positive definite direction minimum over the simplex
    mu = _simplex_min({k: c for k, c in quad.items()}, free)
    if mu is not None and mu > 0:
        lneg = max([mpq(0)] + [-c for c in lfree.values()])
        r = _radius_1d(mu, -lneg, const, cap)
        if r is not None:
            return {v: r for v in free}
    return None


# --- public surface -------------------------------------------------------------


@dataclass
class ValBound:
    """Valuation analysis of one summed term under one substitution."""

    indices: tuple
    term: Expr
    env: dict
    regions: tuple      # ((subst-map, region-vars, [minorants], [constraints]), ...)
    constraints: tuple  # original-space affine QuadForms required >= 0
    coercive: dict = None

    def bound_at(self, asg):
        """Exact piecewise valuation lower bound at one index assignment."""
        return node_val(self.term, self.env, asg)

    def box(self, cap):
        """Per-index inclusive radii covering every term with valuation <= cap."""
        out = {v: -1 for v in self.indices}
        for sub, rvars, ps, cons in self.regions:
            radii = _region_radii(ps, cons, rvars, cap)
            if any(r < 0 for r in radii.values()):
                continue  # empty region
            for v in self.indices:
                lf = sub.get(v, LinForm.var(v))
                # worst case over the box: negative coefficients sit at 0
                val = lf.const + sum(c * radii[w] for w, c in lf.coeffs if c > 0)
                out[v] = max(out[v], val)
        return out

    def admissible(self, asg):
        """False when a support constraint proves the term is zero."""
        return all(c.eval(asg) >= 0 for c in self.constraints)


def val_lower_bound(term: Expr, env, indices, hint: QuadForm = None) -> ValBound:
    """Analyze the body of a Sum over ``indices`` under substitution ``env``.

    ``env`` maps parameter name -> (c, e).  ``hint`` optionally replaces the
    automatic minorant with a hand-written one (still validated by the
    soundness test suite).
    """
    indices = tuple(indices)
    cons0 = []
    _support_constraints(term, env, {}, cons0)
    cons0 = [c for c in cons0 if not (c.is_const() and c.const >= 0)]
    for c in cons0:
        if c.is_const() and c.const < 0:
            # the whole sum is identically zero
            region = ({}, list(indices), [QuadForm.make(0)], [QuadForm.make(-1)])
            return ValBound(indices, term, env, (region,), tuple(cons0))

    if hint is not None:
        region = ({}, list(indices), [hint], list(cons0))
        return ValBound(indices, term, env, (region,), tuple(cons0))

    delta_sub, reduced, empty = _delta_substitution(term, indices)
    if empty:
        region = ({}, list(indices), [QuadForm.make(0)], [QuadForm.make(-1)])
        return ValBound(indices, term, env, (region,), tuple(cons0))
    analyzed = subst_indices(term, delta_sub) if delta_sub else term

    # adaptive region construction: start from the whole orthant and split on
    # sign-ambiguous forms, either demanded by the bound rules (_NeedSplit) or
    # suggested by a non-coercive probe with a negative cross term
    regions = []
    stack = [({}, list(reduced), 0)]
    counter = 0
    visited = 0
    while stack:
        visited += 1
        if visited > _MAX_REGIONS:
            raise UnresolvedSign(
                f"sign case analysis exceeded {_MAX_REGIONS} regions")
        sub, rvars, depth = stack.pop()
        try:
            ps = _minorants(analyzed, env, sub)
        except _NeedSplit as ns:
            if depth >= _MAX_SPLIT_DEPTH:
                raise UnresolvedSign(
                    f"sign case analysis exceeded depth {_MAX_SPLIT_DEPTH}")
            stack.extend((s, rv, depth + 1) for s, rv in
                         _split_region(sub, rvars, ns.form, f"_m{counter}"))
            counter += 1
            continue
        rcons = []
        _support_constraints(analyzed, env, sub, rcons)
        if any(c.is_const() and c.const < 0 for c in rcons):
            continue  # region lies outside the support of the term
        rcons = [c for c in rcons if not c.is_const()]
        try:
            _region_radii(ps, rcons, rvars, mpq(0))
        except NonCoercive:
            form = _cross_split_candidate(ps, rvars)
            if form is not None and depth < _MAX_SPLIT_DEPTH:
                stack.extend((s, rv, depth + 1) for s, rv in
                             _split_region(sub, rvars, form, f"_m{counter}"))
                counter += 1
                continue
            # keep the region; box() reports NonCoercive if it stays so
        full_sub = dict(sub)
        for u, lf in delta_sub.items():
            full_sub[u] = lf.subst(sub)
        regions.append((full_sub, rvars, ps, rcons))
    return ValBound(indices, term, env, tuple(regions), tuple(cons0))


def _delta_substitution(term, indices):
    """Equality substitutions implied by delta factors.

    Returns (mapping var -> LinForm over remaining vars, remaining vars,
    empty) where empty means some delta can never be satisfied.
    """
    sub = {}
    reduced = list(indices)
    for node in walk(term):
        if not isinstance(node, Delta):
            continue
        lf = node.arg.subst(sub)
        cm = lf.coeff_map
        if not cm:
            if lf.const != 0:
                return {}, reduced, True
            continue
        if len(cm) == 2 and sorted(cm.values()) == [-1, 1]:
            u = next(v for v, c in cm.items() if c == 1)
            v = next(v for v, c in cm.items() if c == -1)
            c = lf.const
            if c <= 0:
                repl, gone = LinForm.make(-c, {v: 1}), u
            else:
                repl, gone = LinForm.make(c, {u: 1}), v
        elif len(cm) == 1:
            (u, a), = cm.items()
            if lf.const % a != 0 or -lf.const // a < 0:
                return {}, reduced, True
            repl, gone = LinForm.make(-lf.const // a, {}), u
        else:
            continue  # left to support constraints
        if gone not in reduced:
            continue
        reduced.remove(gone)
        sub = {k: f.subst({gone: repl}) for k, f in sub.items()}
        sub[gone] = repl
    return sub, reduced, False


def enumeration_domain(b: ValBound, cap):
    """All index tuples (in declared order) with certified bound <= cap."""
    radii = b.box(cap)
    ranges = [range(radii[v] + 1) for v in b.indices]
    out = []
    for tup in iproduct(*ranges):
        asg = dict(zip(b.indices, tup))
        if not b.admissible(asg):
            continue
        if b.bound_at(asg) <= cap:
            out.append(tup)
    return out
