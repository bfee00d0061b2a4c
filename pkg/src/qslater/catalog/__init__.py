"""Identity catalog: named verification records loaded from .idn files.

Each entry is a text file in ``data/`` whose stem is the entry id.  A record
carries both sides of the identity as DSL expressions, sampling ranges for
its parameters, admissibility constraints, and (optionally) a family of
general-sequence instances substituted for A(...) placeholders.

File format (line oriented; a line ``KEY:`` starts a section, everything
else belongs to the current section)::

    ANCHOR: one-line description of the identity
    CAP: 30
    GRID: 1
    LHS:
      sum(n>=0) q^(n^2) * invpochq(n)
    RHS:
      1 / (poch_inf(q; 5) * poch_inf(q^4; 5))
    PARAMS:
      x: 1..3
      t: fixed 1*q^0
    INTPARAMS:
      nn: 0..8
    CONSTRAINTS:
      e_x - e_fc >= 1
      c_b != 1
    FAMILY: tau-y, geom, poch-z, poch-ratio, delta
    NOTES: free text

PARAMS entries either give the exponent range of a parameter (the
coefficient is drawn from a fixed pool of nonzero rationals) or pin it to an
exact monomial with ``fixed c*q^e``.  CONSTRAINTS are integer linear
inequalities over the sampled exponents ``e_<name>`` plus coefficient
exclusions ``c_<name> != r``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import product as iproduct
from pathlib import Path

from gmpy2 import mpq

from ..coeffring import UPoly
from ..dsl import parse
from ..engine import SubstEnv, coeff_extract, eval_expr
from ..errors import ConstraintViolation, DslSyntaxError, UnknownId
from ..expr import (
    Add,
    Div,
    Expr,
    LinForm,
    Mul,
    Neg,
    SeqRef,
    Sum,
    subst_indices,
)

DATA_DIR = Path(__file__).parent / "data"

COEFF_POOL = tuple(
    mpq(n, d) * s
    for n, d in ((1, 1), (2, 1), (3, 1), (1, 2), (2, 3), (3, 5))
    for s in (1, -1)
)


# --- general-sequence families --------------------------------------------------


@dataclass(frozen=True)
class FamilyMember:
    """A concrete sequence A(n) substituted for SeqRef placeholders."""

    name: str
    text: str               # DSL term in the free variable n
    params: dict            # extra parameter name -> exponent range (lo, hi)

    @property
    def expr(self) -> Expr:
        return parse(self.text)


FAMILY_MEMBERS = {
    m.name: m
    for m in (
        FamilyMember("tau-y", "tau(n) * fy^(n)", {"fy": (0, 2)}),
        FamilyMember("geom", "fc^(n)", {"fc": (1, 2)}),
        FamilyMember("poch-z", "poch(fa; n) * fz^(n)", {"fa": (0, 2), "fz": (1, 3)}),
        FamilyMember(
            "poch-ratio",
            "poch(fa1; n) * poch(fa2; n) * fy2^(n) / poch(fb1; n)",
            {"fa1": (0, 2), "fa2": (0, 2), "fb1": (1, 3), "fy2": (1, 3)},
        ),
        FamilyMember("delta", "delta(n)", {}),
    )
}


def replace_seqref(e: Expr, template: Expr) -> Expr:
    """Substitute A(offset) -> template[n := offset] throughout a tree."""
    if isinstance(e, SeqRef):
        return subst_indices(template, {"n": e.offset})
    if isinstance(e, Mul):
        return Mul(tuple(replace_seqref(f, template) for f in e.factors))
    if isinstance(e, Add):
        return Add(tuple(replace_seqref(t, template) for t in e.terms))
    if isinstance(e, Div):
        return Div(replace_seqref(e.num, template), replace_seqref(e.den, template))
    if isinstance(e, Neg):
        return Neg(replace_seqref(e.inner, template))
    if isinstance(e, Sum):
        return Sum(e.indices, replace_seqref(e.term, template))
    return e


# --- records ---------------------------------------------------------------------


@dataclass
class IdentityRecord:
    """One catalog entry: both sides, sampling spec, and instantiation rules."""

    id: str
    anchor: str
    lhs: Expr
    rhs: Expr
    params: dict                 # name -> ("range", lo, hi) | ("fixed", c, e)
    intparams: dict              # name -> (lo, hi), substituted structurally
    constraints: tuple           # parsed constraint tuples
    family: tuple                # family member names, or ()
    cap: int = 30
    grid: int = 1
    notes: str = ""

    def param_specs(self) -> dict:
        """Entry parameters plus those of every family member (entry wins)."""
        specs = {}
        for name in self.family:
            for p, (lo, hi) in FAMILY_MEMBERS[name].params.items():
                specs[p] = ("range", lo, hi)
        specs.update(self.params)
        return specs

    def sample_env(self, rng) -> SubstEnv:
        asg = {}
        for name, spec in sorted(self.param_specs().items()):
            if spec[0] == "fixed":
                asg[name] = (spec[1], spec[2])
            else:
                asg[name] = (rng.choice(COEFF_POOL), rng.randint(spec[1], spec[2]))
        return SubstEnv(asg)

    def check_constraints(self, env):
        for cons in self.constraints:
            if cons[0] == "lin":
                _, terms, low = cons
                total = sum(k * env[name][1] for k, name in terms)
                if total < low:
                    raise ConstraintViolation(
                        f"{self.id}: {_lin_text(terms)} = {total} < {low}")
            else:
                _, name, bad = cons
                if env[name][0] == bad:
                    raise ConstraintViolation(f"{self.id}: c_{name} == {bad}")

    def instantiations(self, env):
        combos = [(None, self.lhs, self.rhs)]
        if self.intparams:
            names = sorted(self.intparams)
            ranges = [range(self.intparams[n][0], self.intparams[n][1] + 1)
                      for n in names]
            combos = []
            for vals in iproduct(*ranges):
                mapping = {n: LinForm.make(v, {}) for n, v in zip(names, vals)}
                label = ",".join(f"{n}={v}" for n, v in zip(names, vals))
                combos.append((label,
                               subst_indices(self.lhs, mapping),
                               subst_indices(self.rhs, mapping)))
        if not self.family:
            yield from combos
            return
        for name in self.family:
            tmpl = FAMILY_MEMBERS[name].expr
            for label, lhs, rhs in combos:
                member = name if label is None else f"{name};{label}"
                yield member, replace_seqref(lhs, tmpl), replace_seqref(rhs, tmpl)


@dataclass
class ConvolutionRecord(IdentityRecord):
    """Entry whose sides are sums over coefficients of an auxiliary symbol t.

    ``lhs``/``rhs`` are expressions in the parameters plus the symbol ``t``;
    ``lhs_weight``/``rhs_weight`` are expressions in the extraction order n.
    Each side evaluates to  sum_n weight(n) * [t^n] inner.  Terms beyond
    n = cap are dropped, which is exact as long as every admissible
    environment gives the n-th term q-valuation at least n (the constraints
    of the entry must enforce that).
    """

    lhs_weight: Expr = None
    rhs_weight: Expr = None

    def evaluate_sides(self, env, cap):
        for member, inner_l, inner_r in self.instantiations(env):
            sides = []
            for inner, weight in ((inner_l, self.lhs_weight),
                                  (inner_r, self.rhs_weight)):
                env_t = SubstEnv({**env.assignments, "t": (UPoly.u(cap), 0)},
                                 "t", cap)
                series = eval_expr(inner, env_t, cap, self.grid)
                acc = None
                for n in range(cap + 1):
                    wn = subst_indices(weight, {"n": LinForm.make(n, {})})
                    term = coeff_extract(series, n) * eval_expr(
                        wn, env, cap, self.grid)
                    acc = term if acc is None else acc + term
                sides.append(acc)
            yield member, sides[0], sides[1]


# --- file format -------------------------------------------------------------------


_SECTION = re.compile(r"^([A-Z]+):\s*(.*)$")
_FIXED = re.compile(r"^fixed\s+(-?\d+(?:/\d+)?)\*q\^(-?\d+)$")
_RANGE = re.compile(r"^(-?\d+)\.\.(-?\d+)$")
_LIN_TERM = re.compile(r"([+-]?)\s*(?:(\d+)\s*\*\s*)?e_([A-Za-z][A-Za-z0-9]*)")
_COEFF_NE = re.compile(r"^c_([A-Za-z][A-Za-z0-9]*)\s*!=\s*(-?\d+(?:/\d+)?)$")


def _lin_text(terms):
    return " + ".join(f"{k}*e_{n}" for k, n in terms)


def parse_record(text: str, id: str) -> IdentityRecord:
    sections = {}
    current = None
    for raw in text.splitlines():
        m = _SECTION.match(raw)
        if m:
            current = m.group(1)
            sections[current] = [m.group(2)] if m.group(2) else []
        elif current is not None and raw.strip():
            sections[current].append(raw.strip())
        elif raw.strip():
            raise DslSyntaxError(f"{id}: content before the first section: {raw!r}")

    def sect(name, default=None):
        if name not in sections:
            if default is None:
                raise DslSyntaxError(f"{id}: missing required section {name}")
            return default
        return sections[name]

    lhs = parse(" ".join(sect("LHS")))
    rhs = parse(" ".join(sect("RHS")))
    params = {}
    for line in sect("PARAMS", []):
        name, _, spec = line.partition(":")
        name, spec = name.strip(), spec.strip()
        fm = _FIXED.match(spec)
        rm = _RANGE.match(spec)
        if fm:
            params[name] = ("fixed", mpq(fm.group(1)), int(fm.group(2)))
        elif rm:
            params[name] = ("range", int(rm.group(1)), int(rm.group(2)))
        else:
            raise DslSyntaxError(f"{id}: bad parameter spec {line!r}")
    intparams = {}
    for line in sect("INTPARAMS", []):
        name, _, spec = line.partition(":")
        rm = _RANGE.match(spec.strip())
        if not rm:
            raise DslSyntaxError(f"{id}: bad integer parameter spec {line!r}")
        intparams[name.strip()] = (int(rm.group(1)), int(rm.group(2)))
    constraints = []
    for line in sect("CONSTRAINTS", []):
        cm = _COEFF_NE.match(line)
        if cm:
            constraints.append(("cne", cm.group(1), mpq(cm.group(2))))
            continue
        lhs_txt, sep, rhs_txt = line.partition(">=")
        if not sep:
            raise DslSyntaxError(f"{id}: bad constraint {line!r}")
        terms = []
        for sign, coeff, name in _LIN_TERM.findall(lhs_txt):
            k = int(coeff) if coeff else 1
            terms.append((-k if sign == "-" else k, name))
        if not terms or lhs_txt.count("e_") != len(terms):
            raise DslSyntaxError(f"{id}: bad constraint {line!r}")
        constraints.append(("lin", tuple(terms), int(rhs_txt.strip())))
    family = []
    for chunk in " ".join(sect("FAMILY", [""])).split(","):
        chunk = chunk.strip()
        if chunk:
            if chunk not in FAMILY_MEMBERS:
                raise DslSyntaxError(f"{id}: unknown family member {chunk!r}")
            family.append(chunk)
    common = dict(
        id=id,
        anchor=" ".join(sect("ANCHOR")),
        lhs=lhs,
        rhs=rhs,
        params=params,
        intparams=intparams,
        constraints=tuple(constraints),
        family=tuple(family),
        cap=int(sect("CAP", ["30"])[0]),
        grid=int(sect("GRID", ["1"])[0]),
        notes=" ".join(sect("NOTES", [""])),
    )
    mode = sect("MODE", [""])[0].strip()
    if mode == "conv":
        return ConvolutionRecord(
            lhs_weight=parse(" ".join(sect("LHSWEIGHT"))),
            rhs_weight=parse(" ".join(sect("RHSWEIGHT"))),
            **common,
        )
    if mode:
        raise DslSyntaxError(f"{id}: unknown mode {mode!r}")
    return IdentityRecord(**common)


def load_file(path) -> IdentityRecord:
    p = Path(path)
    return parse_record(p.read_text(), p.stem)


_CACHE = None


def _all() -> dict:
    global _CACHE
    if _CACHE is None:
        _CACHE = {}
        for p in sorted(DATA_DIR.glob("*.idn")):
            _CACHE[p.stem] = load_file(p)
    return _CACHE


def list_identities():
    """Stable-ordered (id, anchor, params) for every catalog entry."""
    out = []
    for id in sorted(_all()):
        rec = _all()[id]
        out.append((id, rec.anchor, dict(rec.param_specs())))
    return out


def get(id: str) -> IdentityRecord:
    try:
        return _all()[id]
    except KeyError:
        raise UnknownId(f"no catalog entry named {id!r}") from None
