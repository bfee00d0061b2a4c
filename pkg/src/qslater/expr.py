"""Expression IR for multi-indexed q-sums.

The atoms are integer linear forms (``LinForm``) and rational quadratic forms
(``QuadForm``) over index variables, and parameter monomials (``ParamMon``)
c * prod(p_i^m_i) * q^E.  Expression nodes are immutable dataclasses; index
substitution returns new trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

from gmpy2 import mpq

from .coeffring import Rat, rat


def _freeze_map(m):
    return tuple(sorted(m.items()))


@dataclass(frozen=True)
class LinForm:
    """Integer linear form  const + sum(coeff_v * v)  over index variables."""

    const: int = 0
    coeffs: tuple = ()  # sorted ((name, int), ...)

    @classmethod
    def of(cls, const=0, **coeffs) -> "LinForm":
        return cls.make(const, coeffs)

    @classmethod
    def make(cls, const, coeffs) -> "LinForm":
        return cls(int(const), _freeze_map({v: int(c) for v, c in coeffs.items() if c}))

    @classmethod
    def var(cls, name) -> "LinForm":
        return cls(0, ((name, 1),))

    @property
    def coeff_map(self):
        return dict(self.coeffs)

    def variables(self):
        return {v for v, _ in self.coeffs}

    def is_const(self):
        return not self.coeffs

    def __add__(self, other):
        if isinstance(other, int):
            return LinForm(self.const + other, self.coeffs)
        m = self.coeff_map
        for v, c in other.coeffs:
            m[v] = m.get(v, 0) + c
        return LinForm.make(self.const + other.const, m)

    def __neg__(self):
        return LinForm(-self.const, tuple((v, -c) for v, c in self.coeffs))

    def __sub__(self, other):
        if isinstance(other, int):
            return self + (-other)
        return self + (-other)

    def scale(self, k: int) -> "LinForm":
        if k == 0:
            return LinForm(0)
        return LinForm(self.const * k, tuple((v, c * k) for v, c in self.coeffs))

    def eval(self, env) -> int:
        return self.const + sum(c * env[v] for v, c in self.coeffs)

    def subst(self, mapping) -> "LinForm":
        """Replace each variable by a LinForm (identity if unmapped)."""
        out = LinForm(self.const)
        for v, c in self.coeffs:
            repl = mapping.get(v, LinForm.var(v))
            out = out + repl.scale(c)
        return out

    def __str__(self):
        parts = []
        for v, c in self.coeffs:
            if c == 1:
                parts.append(v if not parts else f"+ {v}")
            elif c == -1:
                parts.append(f"-{v}" if not parts else f"- {v}")
            elif c > 0:
                parts.append(f"{c}*{v}" if not parts else f"+ {c}*{v}")
            else:
                parts.append(f"-{-c}*{v}" if not parts else f"- {-c}*{v}")
        if self.const or not parts:
            c = self.const
            if not parts:
                parts.append(str(c))
            elif c > 0:
                parts.append(f"+ {c}")
            else:
                parts.append(f"- {-c}")
        return " ".join(parts)


def _q(x) -> Rat:
    return mpq(x)


@dataclass(frozen=True)
class QuadForm:
    """Rational quadratic polynomial over index variables.

    ``quad`` holds coefficients of v*w keyed by the sorted pair (v, w); the
    diagonal key (v, v) is the coefficient of v^2.
    """

    const: Rat = field(default_factory=lambda: mpq(0))
    lin: tuple = ()   # sorted ((name, Rat), ...)
    quad: tuple = ()  # sorted (((v, w), Rat), ...) with v <= w

    @classmethod
    def make(cls, const=0, lin=None, quad=None) -> "QuadForm":
        lm = {v: _q(c) for v, c in (lin or {}).items() if _q(c)}
        qm = {}
        for (v, w), c in (quad or {}).items():
            key = (v, w) if v <= w else (w, v)
            c = _q(c)
            if c:
                qm[key] = qm.get(key, mpq(0)) + c
        qm = {k: c for k, c in qm.items() if c}
        return cls(_q(const), _freeze_map(lm), _freeze_map(qm))

    @classmethod
    def from_lin(cls, lf: LinForm) -> "QuadForm":
        return cls.make(lf.const, dict(lf.coeffs))

    @classmethod
    def constant(cls, c) -> "QuadForm":
        return cls.make(c)

    @property
    def lin_map(self):
        return dict(self.lin)

    @property
    def quad_map(self):
        return dict(self.quad)

    def variables(self):
        vs = {v for v, _ in self.lin}
        for (v, w), _ in self.quad:
            vs.add(v)
            vs.add(w)
        return vs

    def is_const(self):
        return not self.lin and not self.quad

    def is_linear(self):
        return not self.quad

    def as_lin(self) -> LinForm:
        """Exact conversion to an integer LinForm; raises if not possible."""
        if self.quad:
            raise ValueError("quadratic form is not linear")
        if self.const.denominator != 1 or any(c.denominator != 1 for _, c in self.lin):
            raise ValueError("non-integer coefficients")
        return LinForm.make(int(self.const), {v: int(c) for v, c in self.lin})

    def __add__(self, other):
        if isinstance(other, (int, type(mpq(0)))):
            return QuadForm.make(self.const + other, self.lin_map, self.quad_map)
        lm = self.lin_map
        for v, c in other.lin:
            lm[v] = lm.get(v, mpq(0)) + c
        qm = self.quad_map
        for k, c in other.quad:
            qm[k] = qm.get(k, mpq(0)) + c
        return QuadForm.make(self.const + other.const, lm, qm)

    def __neg__(self):
        return QuadForm(
            -self.const,
            tuple((v, -c) for v, c in self.lin),
            tuple((k, -c) for k, c in self.quad),
        )

    def __sub__(self, other):
        if isinstance(other, (int, type(mpq(0)))):
            return self + (-mpq(other))
        return self + (-other)

    def scale(self, k) -> "QuadForm":
        k = _q(k)
        if not k:
            return QuadForm.make(0)
        return QuadForm(
            self.const * k,
            tuple((v, c * k) for v, c in self.lin),
            tuple((kk, c * k) for kk, c in self.quad),
        )

    def eval(self, env) -> Rat:
        acc = self.const
        for v, c in self.lin:
            acc += c * env[v]
        for (v, w), c in self.quad:
            acc += c * env[v] * env[w]
        return acc

    def subst(self, mapping) -> "QuadForm":
        """Replace variables by LinForms; stays quadratic."""

        def get(v):
            return mapping.get(v, LinForm.var(v))

        out = QuadForm.make(self.const)
        for v, c in self.lin:
            out = out + QuadForm.from_lin(get(v)).scale(c)
        for (v, w), c in self.quad:
            out = out + lin_mul(get(v), get(w)).scale(c)
        return out

    def denominator_on_lattice(self) -> int:
        """Smallest D >= 1 such that D * self takes integer values on Z^r.

        Uses the binomial-basis criterion: f is integer-valued iff
        2*q_vv, q_vv + l_v, q_vw (v != w) and the constant are all integers.
        """
        checks = [Fraction(self.const.numerator, self.const.denominator)]
        lm = self.lin_map
        for (v, w), c in self.quad:
            cf = Fraction(c.numerator, c.denominator)
            if v == w:
                checks.append(2 * cf)
                lv = lm.get(v, mpq(0))
                checks.append(cf + Fraction(lv.numerator, lv.denominator))
            else:
                checks.append(cf)
        for v, c in self.lin:
            if (v, v) not in self.quad_map:
                checks.append(Fraction(c.numerator, c.denominator))
        return lcm(*(f.denominator for f in checks)) if checks else 1

    def is_integer_valued(self) -> bool:
        return self.denominator_on_lattice() == 1

    def __str__(self):
        parts = []

        def fmt(c, body):
            s = "-" if c < 0 else "+"
            a = abs(c)
            head = body if a == 1 and body else (f"{a}" if not body else f"{a}*{body}")
            return (s, head)

        for (v, w), c in self.quad:
            parts.append(fmt(c, f"{v}^2" if v == w else f"{v}*{w}"))
        for v, c in self.lin:
            parts.append(fmt(c, v))
        if self.const or not parts:
            parts.append(fmt(self.const, ""))
        out = []
        for i, (s, head) in enumerate(parts):
            if i == 0:
                out.append(head if s == "+" else f"-{head}")
            else:
                out.append(f"{s} {head}")
        return " ".join(out)


def lin_mul(a: LinForm, b: LinForm) -> QuadForm:
    """Product of two linear forms as a QuadForm."""
    qm = {}
    for v, cv in a.coeffs:
        for w, cw in b.coeffs:
            key = (v, w) if v <= w else (w, v)
            qm[key] = qm.get(key, 0) + cv * cw
    lm = {}
    for v, c in a.coeffs:
        lm[v] = lm.get(v, 0) + c * b.const
    for w, c in b.coeffs:
        lm[w] = lm.get(w, 0) + c * a.const
    return QuadForm.make(a.const * b.const, lm, qm)


@dataclass(frozen=True)
class ParamMon:
    """Monomial  c * prod(p^m_p) * q^qexp  with c a nonzero rational."""

    c: Rat = field(default_factory=lambda: mpq(1))
    powers: tuple = ()  # sorted ((param, int), ...)
    qexp: QuadForm = field(default_factory=lambda: QuadForm.make(0))

    @classmethod
    def make(cls, c=1, powers=None, qexp=None) -> "ParamMon":
        c = _q(c)
        if not c:
            raise ValueError("monomial coefficient must be nonzero")
        if qexp is None:
            qexp = QuadForm.make(0)
        elif isinstance(qexp, LinForm):
            qexp = QuadForm.from_lin(qexp)
        elif not isinstance(qexp, QuadForm):
            qexp = QuadForm.make(qexp)
        return cls(c, _freeze_map({p: int(m) for p, m in (powers or {}).items() if m}), qexp)

    @property
    def power_map(self):
        return dict(self.powers)

    def mul(self, other: "ParamMon") -> "ParamMon":
        pm = self.power_map
        for p, m in other.powers:
            pm[p] = pm.get(p, 0) + m
        return ParamMon.make(self.c * other.c, pm, self.qexp + other.qexp)

    def inv(self) -> "ParamMon":
        return ParamMon.make(1 / self.c, {p: -m for p, m in self.powers}, -self.qexp)

    def params(self):
        return {p for p, _ in self.powers}

    def indices(self):
        return self.qexp.variables()

    def subst_indices(self, mapping) -> "ParamMon":
        return ParamMon(self.c, self.powers, self.qexp.subst(mapping))


# --- Expression nodes ------------------------------------------------------


class Expr:
    """Base class; concrete nodes are the dataclasses below."""

    __slots__ = ()


@dataclass(frozen=True)
class Mon(Expr):
    mon: ParamMon


@dataclass(frozen=True)
class PochFin(Expr):
    base: ParamMon
    count: LinForm
    step: int = 1


@dataclass(frozen=True)
class PochInf(Expr):
    base: ParamMon
    step: int = 1


@dataclass(frozen=True)
class InvPochQ(Expr):
    count: LinForm
    step: int = 1


@dataclass(frozen=True)
class Tau(Expr):
    p: int
    arg: LinForm


@dataclass(frozen=True)
class QBinom(Expr):
    n: LinForm
    k: LinForm


@dataclass(frozen=True)
class Pow(Expr):
    base: ParamMon
    exp: LinForm


@dataclass(frozen=True)
class Mul(Expr):
    factors: tuple


@dataclass(frozen=True)
class Div(Expr):
    num: Expr
    den: Expr


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple


@dataclass(frozen=True)
class Neg(Expr):
    inner: Expr


@dataclass(frozen=True)
class Sum(Expr):
    indices: tuple
    term: Expr


@dataclass(frozen=True)
class Phi(Expr):
    upper: tuple
    lower: tuple
    base_power: int
    arg: ParamMon


@dataclass(frozen=True)
class Nahm(Expr):
    a: tuple  # rows of Rats
    b: tuple
    c: Rat


@dataclass(frozen=True)
class SeqRef(Expr):
    offset: LinForm


@dataclass(frozen=True)
class Delta(Expr):
    """1 when the linear form evaluates to 0, else 0."""

    arg: LinForm


def children(e: Expr):
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Div):
        return (e.num, e.den)
    if isinstance(e, (Neg,)):
        return (e.inner,)
    if isinstance(e, Sum):
        return (e.term,)
    return ()


def walk(e: Expr):
    yield e
    for c in children(e):
        yield from walk(c)


def free_indices(e: Expr):
    """Index variables used in e that are not bound by an enclosing Sum."""
    if isinstance(e, Sum):
        inner = free_indices(e.term)
        return inner - set(e.indices)
    out = set()
    for c in children(e):
        out |= free_indices(c)
    if isinstance(e, Mon):
        out |= e.mon.indices()
    elif isinstance(e, PochFin):
        out |= e.base.indices() | e.count.variables()
    elif isinstance(e, PochInf):
        out |= e.base.indices()
    elif isinstance(e, InvPochQ):
        out |= e.count.variables()
    elif isinstance(e, Tau):
        out |= e.arg.variables()
    elif isinstance(e, QBinom):
        out |= e.n.variables() | e.k.variables()
    elif isinstance(e, Pow):
        out |= e.base.indices() | e.exp.variables()
    elif isinstance(e, Phi):
        for m in (*e.upper, *e.lower, e.arg):
            out |= m.indices()
    elif isinstance(e, SeqRef):
        out |= e.offset.variables()
    elif isinstance(e, Delta):
        out |= e.arg.variables()
    return out


def used_params(e: Expr):
    out = set()
    for node in walk(e):
        if isinstance(node, Mon):
            out |= node.mon.params()
        elif isinstance(node, PochFin):
            out |= node.base.params()
        elif isinstance(node, PochInf):
            out |= node.base.params()
        elif isinstance(node, Pow):
            out |= node.base.params()
        elif isinstance(node, Phi):
            for m in (*node.upper, *node.lower, node.arg):
                out |= m.params()
    return out


def subst_indices(e: Expr, mapping) -> Expr:
    """Replace index variables by LinForms throughout the tree.

    Variables bound by an inner Sum shadow the mapping.
    """
    if isinstance(e, Sum):
        inner = {v: f for v, f in mapping.items() if v not in e.indices}
        return Sum(e.indices, subst_indices(e.term, inner)) if inner else e
    if isinstance(e, Mul):
        return Mul(tuple(subst_indices(f, mapping) for f in e.factors))
    if isinstance(e, Add):
        return Add(tuple(subst_indices(t, mapping) for t in e.terms))
    if isinstance(e, Div):
        return Div(subst_indices(e.num, mapping), subst_indices(e.den, mapping))
    if isinstance(e, Neg):
        return Neg(subst_indices(e.inner, mapping))
    if isinstance(e, Mon):
        return Mon(e.mon.subst_indices(mapping))
    if isinstance(e, PochFin):
        return PochFin(e.base.subst_indices(mapping), e.count.subst(mapping), e.step)
    if isinstance(e, PochInf):
        return PochInf(e.base.subst_indices(mapping), e.step)
    if isinstance(e, InvPochQ):
        return InvPochQ(e.count.subst(mapping), e.step)
    if isinstance(e, Tau):
        return Tau(e.p, e.arg.subst(mapping))
    if isinstance(e, QBinom):
        return QBinom(e.n.subst(mapping), e.k.subst(mapping))
    if isinstance(e, Pow):
        return Pow(e.base.subst_indices(mapping), e.exp.subst(mapping))
    if isinstance(e, Phi):
        return Phi(
            tuple(m.subst_indices(mapping) for m in e.upper),
            tuple(m.subst_indices(mapping) for m in e.lower),
            e.base_power,
            e.arg.subst_indices(mapping),
        )
    if isinstance(e, SeqRef):
        return SeqRef(e.offset.subst(mapping))
    if isinstance(e, Delta):
        return Delta(e.arg.subst(mapping))
    return e


def has_seqref(e: Expr) -> bool:
    return any(isinstance(n, SeqRef) for n in walk(e))
