"""Expression evaluation, identity verification, and randomized trials.

Evaluation is exact: every node expands to a QSeries whose full retained
window is certified.  Lattice sums enumerate the finite domain produced by
the valuation analysis.  Inside a product (or quotient), factors are first
expanded at the requested order, then re-expanded wider whenever another
factor's measured valuation is negative, so the combined window always
reaches the requested order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

from gmpy2 import mpq

from .coeffring import DEFAULT_POLY_CAP, UPoly, rat_str
from .errors import (
    IndeterminateValuation,
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
    Nahm,
    Neg,
    Phi,
    PochFin,
    PochInf,
    Pow,
    QBinom,
    SeqRef,
    Sum,
    Tau,
    subst_indices,
)
from .hyper import nahm_grid, nahm_to_sum, phi_to_sum
from .qseries import QSeries, inv_poch_q, poch_fin, poch_inf, qbinom
from .valcert import enumeration_domain, mon_coeff, mon_exponent, val_lower_bound


# --- cached series kernels ----------------------------------------------------


@lru_cache(maxsize=200000)
def _poch_fin_c(c, e, n, cap, d, stride):
    return poch_fin(c, e, n, cap, d, stride)


@lru_cache(maxsize=50000)
def _poch_inf_c(c, e, cap, d, stride):
    return poch_inf(c, e, cap, d, stride)


@lru_cache(maxsize=50000)
def _inv_poch_q_c(n, cap, d, stride):
    return inv_poch_q(n, cap, d, stride)


@lru_cache(maxsize=50000)
def _qbinom_c(n, k, cap, d):
    return qbinom(n, k, cap, d)


def clear_caches():
    for f in (_poch_fin_c, _poch_inf_c, _inv_poch_q_c, _qbinom_c):
        f.cache_clear()


# --- sum flattening -----------------------------------------------------------


_FRESH = 0


def _fresh_index():
    global _FRESH
    _FRESH += 1
    return f"_f{_FRESH}"


def flatten_sum(s: Sum) -> Sum:
    """Merge directly nested sums into one multi-index sum.

    Handles a Sum body that is itself a Sum, a product with Sum factors, or a
    quotient whose numerator is a Sum.  Inner indices are renamed to fresh
    variables so no capture can occur.
    """
    indices = list(s.indices)
    term = s.term
    changed = True
    while changed:
        changed = False
        if isinstance(term, Phi):
            term = phi_to_sum(term)
            changed = True
        elif isinstance(term, Sum):
            inner = _rename_indices(term)
            indices.extend(inner.indices)
            term = inner.term
            changed = True
        elif isinstance(term, Mul):
            out = []
            for f in term.factors:
                if isinstance(f, Phi):
                    f = phi_to_sum(f)
                if isinstance(f, Sum):
                    inner = _rename_indices(flatten_sum(f))
                    indices.extend(inner.indices)
                    out.append(inner.term)
                    changed = True
                else:
                    out.append(f)
            if changed:
                term = Mul(tuple(out))
        elif isinstance(term, Div):
            num = term.num
            if isinstance(num, Phi):
                num = phi_to_sum(num)
            if isinstance(num, Sum):
                inner = _rename_indices(flatten_sum(num))
                indices.extend(inner.indices)
                term = Div(inner.term, term.den)
                changed = True
            elif (isinstance(num, Mul)
                  and any(isinstance(f, (Sum, Phi)) for f in num.factors)):
                inner = flatten_sum(Sum((), num))
                indices.extend(inner.indices)
                term = Div(inner.term, term.den)
                changed = True
    return Sum(tuple(indices), term)


def _rename_indices(s: Sum) -> Sum:
    mapping = {}
    new = []
    for v in s.indices:
        nv = _fresh_index()
        mapping[v] = LinForm.var(nv)
        new.append(nv)
    return Sum(tuple(new), subst_indices(s.term, mapping))


# --- evaluation ---------------------------------------------------------------


def _grid_int(x, d):
    """Exact q-exponent to grid units; must land on the 1/d grid."""
    g = mpq(x) * d
    if g.denominator != 1:
        raise IndeterminateValuation(f"exponent {x} is off the 1/{d} grid")
    return int(g)


def _const(lf: LinForm) -> int:
    if not lf.is_const():
        raise UnresolvedSign(f"free index variable in {lf} at evaluation time")
    return lf.const


def eval_expr(e: Expr, env, cap, d=1, hints=None):
    """Expand e to a QSeries on grid 1/d, certified through q^cap.

    ``cap`` is in plain q units; the result window extends to cap*d grid
    units.  ``env`` maps each parameter to a pair (c, e) meaning c*q^e (c may
    be a UPoly in polynomial mode).  ``hints`` optionally maps id(sum node)
    to a hand-written valuation minorant QuadForm.
    """
    if hasattr(env, "assignments"):
        env = env.assignments
    return _eval(e, env, cap * d, d, hints or {})


def _eval(e: Expr, env, gcap, d, hints):
    if isinstance(e, Mon):
        c = mon_coeff(e.mon, env)
        ex = mon_exponent(e.mon, env)
        if not ex.is_const():
            raise UnresolvedSign(f"free index variable in exponent {ex}")
        return QSeries.monomial(c, _grid_int(ex.const, d), gcap, d)
    if isinstance(e, Pow):
        n = _const(e.exp)
        c = mon_coeff(e.base, env) ** n
        ex = mon_exponent(e.base, env)
        if not ex.is_const():
            raise UnresolvedSign(f"free index variable in exponent {ex}")
        return QSeries.monomial(c, _grid_int(ex.const * n, d), gcap, d)
    if isinstance(e, Tau):
        n = _const(e.arg)
        return QSeries.monomial(mpq(-1) if n % 2 else mpq(1),
                                _grid_int(mpq(e.p * n * (n - 1), 2), d), gcap, d)
    if isinstance(e, PochFin):
        c = mon_coeff(e.base, env)
        ev = mon_exponent(e.base, env)
        if not ev.is_const():
            raise UnresolvedSign(f"free index variable in exponent {ev}")
        ge = _grid_int(ev.const, d)
        return _poch_fin_c(c, ge, _const(e.count), gcap, d, e.step * d)
    if isinstance(e, PochInf):
        c = mon_coeff(e.base, env)
        ev = mon_exponent(e.base, env)
        if not ev.is_const():
            raise UnresolvedSign(f"free index variable in exponent {ev}")
        return _poch_inf_c(c, _grid_int(ev.const, d), gcap, d, e.step * d)
    if isinstance(e, InvPochQ):
        return _inv_poch_q_c(_const(e.count), gcap, d, e.step * d)
    if isinstance(e, QBinom):
        return _qbinom_c(_const(e.n), _const(e.k), gcap, d)
    if isinstance(e, Delta):
        if _const(e.arg) == 0:
            return QSeries.one(gcap, d)
        return QSeries.zero(d, gcap)
    if isinstance(e, Neg):
        return -_eval(e.inner, env, gcap, d, hints)
    if isinstance(e, Add):
        acc = QSeries.zero(d, gcap)
        for t in e.terms:
            acc = acc + _eval(t, env, gcap, d, hints)
        return acc
    if isinstance(e, Mul):
        return _eval_product(e.factors, env, gcap, d, hints)
    if isinstance(e, Div):
        return _eval_div(e, env, gcap, d, hints)
    if isinstance(e, Sum):
        return _eval_sum(e, env, gcap, d, hints)
    if isinstance(e, Phi):
        return _eval(phi_to_sum(e), env, gcap, d, hints)
    if isinstance(e, Nahm):
        dn = nahm_grid(e)
        if d % dn != 0:
            raise IndeterminateValuation(
                f"this sum lives on the 1/{dn} grid; evaluate with d={dn}")
        return _eval(nahm_to_sum(e), env, gcap, d, hints)
    if isinstance(e, SeqRef):
        raise UnresolvedSign("general-sequence placeholder was not instantiated")
    raise TypeError(type(e).__name__)


def _val_lb(s: QSeries):
    """Certified valuation lower bound of an evaluated series, in grid units."""
    v = s.valuation()
    return s.cap + 1 if v is None else v


def _eval_product(factors, env, gcap, d, hints):
    series = [_eval(f, env, gcap, d, hints) for f in factors]
    for _ in range(len(factors) + 3):
        if any(s.exact_zero for s in series):
            return QSeries.zero(d, gcap)
        lbs = [_val_lb(s) for s in series]
        total = sum(lbs)
        if total > gcap:
            return QSeries(d, gcap + 1, gcap, ())
        widened = False
        for i, (f, s, v) in enumerate(zip(factors, series, lbs)):
            need = gcap - (total - v)
            if need > s.cap:
                series[i] = _eval(f, env, need, d, hints)
                widened = True
        if not widened:
            break
    else:
        raise IndeterminateValuation("product valuations did not stabilize")
    acc = series[0]
    for s in series[1:]:
        acc = acc * s
    return acc.truncate(gcap)


def _eval_div(e: Div, env, gcap, d, hints):
    den = _eval(e.den, env, gcap, d, hints)
    if den.exact_zero:
        raise Pole("division by the exact zero series")
    if den.is_effectively_zero():
        # valuation beyond the window; one deeper look before giving up
        den = _eval(e.den, env, 2 * gcap + 8, d, hints)
        if den.is_effectively_zero():
            raise IndeterminateValuation("denominator valuation exceeds window")
    vd = den.valuation()
    num = _eval(e.num, env, gcap + vd, d, hints)
    if num.exact_zero:
        return QSeries.zero(d, gcap)
    vn = num.valuation()
    if vn is None:
        # numerator vanishes through the widened window: quotient does too
        return QSeries(d, gcap + 1, gcap, ())
    need_d = gcap + 2 * vd - vn
    if need_d > den.cap:
        den = _eval(e.den, env, need_d, d, hints)
    return (num * den.invert()).truncate(gcap)


def _eval_sum(e: Sum, env, gcap, d, hints):
    s = flatten_sum(e)
    bound = val_lower_bound(s.term, env, s.indices, hint=hints.get(id(e)))
    acc = QSeries.zero(d, gcap)
    for tup in enumeration_domain(bound, mpq(gcap, d)):
        mapping = {v: LinForm.make(t, {}) for v, t in zip(s.indices, tup)}
        acc = acc + _eval(subst_indices(s.term, mapping), env, gcap, d, hints)
    return acc


def coeff_extract(s: QSeries, n: int) -> QSeries:
    """The q-series of u^n components of a polynomial-mode series."""
    if s.exact_zero:
        return s
    out = []
    for c in s.coeffs:
        if isinstance(c, UPoly):
            out.append(c.component(n))
        else:
            out.append(c if n == 0 else mpq(0))
    return QSeries(s.d, s.v0, s.cap, out)


# --- substitution environments --------------------------------------------------


@dataclass
class SubstEnv:
    """Total assignment of parameters to exact monomials c*q^e.

    ``assignments`` maps name -> (c, e) with c a nonzero rational (or a
    truncated polynomial in the auxiliary symbol u) and e an integer.
    ``symbolic`` names the parameter carrying u, if any.
    """

    assignments: dict
    symbolic: str = None
    poly_cap: int = DEFAULT_POLY_CAP

    @classmethod
    def of(cls, **kw):
        return cls({k: (mpq(c), e) for k, (c, e) in kw.items()})

    @classmethod
    def with_symbol(cls, symbolic, poly_cap=DEFAULT_POLY_CAP, **kw):
        asg = {k: (mpq(c), e) for k, (c, e) in kw.items()}
        asg[symbolic] = (UPoly.u(poly_cap), 0)
        return cls(asg, symbolic, poly_cap)

    def __getitem__(self, name):
        return self.assignments[name]

    def __contains__(self, name):
        return name in self.assignments

    def json_obj(self):
        out = {}
        for k, (c, e) in sorted(self.assignments.items()):
            out[k] = {"c": "u" if isinstance(c, UPoly) else rat_str(c), "e": e}
        return out


# --- verification ----------------------------------------------------------------


@dataclass
class TrialResult:
    env: SubstEnv
    window: tuple
    status: str               # "pass" | "fail" | "error"
    mismatch: dict = None
    error: str = None

    def json_obj(self):
        obj = {"env": self.env.json_obj(), "window": list(self.window),
               "status": self.status}
        if self.mismatch is not None:
            obj["mismatch"] = self.mismatch
        if self.error is not None:
            obj["error"] = self.error
        return obj


@dataclass
class VerificationReport:
    id: str
    cap: int
    seed: int
    trials: list = field(default_factory=list)
    elapsed_ms: int = 0

    @property
    def passed(self):
        return bool(self.trials) and all(t.status == "pass" for t in self.trials)

    def json_obj(self):
        return {"id": self.id, "cap": self.cap, "seed": self.seed,
                "trials": [t.json_obj() for t in self.trials],
                "elapsed_ms": self.elapsed_ms}

    def to_json(self):
        return json.dumps(self.json_obj(), indent=2, sort_keys=True)


def _coeff_repr(s, e):
    c = s.coeff(e)
    return str(c) if isinstance(c, UPoly) else rat_str(c)


def verify(record, env: SubstEnv, cap: int) -> TrialResult:
    """One verification trial: expand both sides, compare every coefficient.

    A record may provide evaluate_sides(env, cap) yielding already-expanded
    (member, lhs, rhs) series triples; otherwise both sides of every
    instantiation are expanded here.
    """
    if hasattr(record, "evaluate_sides"):
        pairs = record.evaluate_sides(env, cap)
    else:
        pairs = ((member, eval_expr(lhs, env, cap, record.grid),
                  eval_expr(rhs, env, cap, record.grid))
                 for member, lhs, rhs in record.instantiations(env))
    lo, hi = None, None
    for member, L, R in pairs:
        w_lo = min([x.v0 for x in (L, R) if not x.exact_zero] or [0])
        w_hi = min(L.cap, R.cap)
        lo = w_lo if lo is None else min(lo, w_lo)
        hi = w_hi if hi is None else min(hi, w_hi)
        diff = L.first_difference(R)
        if diff is not None:
            mism = {"exponent": diff,
                    "lhs": _coeff_repr(L, diff),
                    "rhs": _coeff_repr(R, diff)}
            if member is not None:
                mism["member"] = member
            return TrialResult(env, (w_lo, w_hi), "fail", mismatch=mism)
    return TrialResult(env, (lo if lo is not None else 0,
                             hi if hi is not None else cap * record.grid), "pass")


def verify_trials(record, cap: int, trials: int, seed: int) -> VerificationReport:
    """Run seeded randomized trials; deterministic for fixed arguments.

    Substitutions that hit a pole, a divergent product, or a sum without a
    certified finite domain are rejected and redrawn (bounded retries).
    """
    import random

    from .errors import (
        ConstraintViolation,
        Divergent,
        ExhaustedSampler,
        NonCoercive,
        NotPositiveDefinite,
    )

    rejectable = (Pole, NonCoercive, Divergent, IndeterminateValuation,
                  NotPositiveDefinite)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = random.Random(seed)
    t0 = time.monotonic()
    report = VerificationReport(record.id, cap, seed)
    for _ in range(trials):
        done = False
        last_err = None
        for _attempt in range(100):
            cand = record.sample_env(rng)
            try:
                record.check_constraints(cand)
            except ConstraintViolation:
                continue
            try:
                result = verify(record, cand, cap)
            except rejectable as exc:
                last_err = f"{type(exc).__name__}: {exc}"
                continue
            report.trials.append(result)
            done = True
            break
        if not done:
            raise ExhaustedSampler(
                f"{record.id}: no admissible substitution in 100 attempts"
                + (f" (last: {last_err})" if last_err else "")
            )
    report.elapsed_ms = int((time.monotonic() - t0) * 1000)
    return report
