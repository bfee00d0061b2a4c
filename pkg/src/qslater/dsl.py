"""Text DSL for q-sum expressions: parser, canonical printer, validator.

Grammar sketch (see README for the full reference)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := rational | rational '^' '(' linform ')'
            | param | param '^' '(' linform ')'
            | 'q' | 'q' '^' '(' quadform ')'
            | 'poch' '(' basemons ';' linform (';' int)? ')'
            | 'poch_inf' '(' basemons (';' int)? ')'
            | 'invpochq' '(' linform (';' int)? ')'
            | 'tau' '(' linform ')' | 'tau_p' '(' int ';' linform ')'
            | 'qbinom' '(' linform ',' linform ')'
            | 'delta' '(' linform ')'
            | 'sum' '(' index '>=0' (',' index '>=0')* ')' rest-of-term
            | 'phi' '(' monlist ';' monlist ';' int ';' basemon ')'
            | 'nahm' '(' matrix ';' vector ';' rational ')'
            | 'A' '(' linform ')'
            | '(' expr ')'

A ``sum`` prefix binds the remainder of the current term.  ``basemons`` is a
comma-separated list (multi-base Pochhammer sugar); ``monlist`` may be ``-``
for an empty list.  Exponent positions take polynomial arithmetic in index
variables (integer-linear where a linform is required, rational-quadratic for
``q^(...)``).
"""

from __future__ import annotations

import re

from gmpy2 import mpq

from .coeffring import rat_str
from .errors import DslSyntaxError
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
    ParamMon,
    Phi,
    PochFin,
    PochInf,
    Pow,
    QBinom,
    QuadForm,
    SeqRef,
    Sum,
    Tau,
    free_indices,
    used_params,
    walk,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<name>[a-zA-Z_][a-zA-Z_0-9]*)
  | (?P<op>>=|\*|/|\+|-|\^|\(|\)|\[|\]|;|,)
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "poch", "poch_inf", "invpochq", "tau", "tau_p", "qbinom",
    "delta", "sum", "phi", "nahm", "q", "A",
}


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text):
    toks = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DslSyntaxError(f"bad character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - start + 1))
        else:
            nl = m.group().count("\n")
            if nl:
                line += nl
                start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    # -- token helpers --

    def peek(self, ahead=0):
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise DslSyntaxError(f"expected {text!r}, got {t.text or 'end of input'!r}",
                                 t.line, t.col)
        return t

    def fail(self, msg):
        t = self.peek()
        raise DslSyntaxError(msg, t.line, t.col)

    # -- entry points --

    def parse_expr(self) -> Expr:
        lead = 1
        if self.peek().text == "-" and self.peek(1).kind != "int":
            self.next()
            lead = -1
        terms = [self.parse_term() if lead > 0 else Neg(self.parse_term())]
        signs = [1]
        while self.peek().text in ("+", "-"):
            signs.append(1 if self.next().text == "+" else -1)
            terms.append(self.parse_term())
        if len(terms) == 1:
            return terms[0]
        out = []
        for s, t in zip(signs, terms):
            out.append(t if s > 0 else Neg(t))
        return Add(tuple(out))

    def parse_term(self) -> Expr:
        factors = [(self.parse_factor(), False)]
        while self.peek().text in ("*", "/"):
            op = self.next().text
            factors.append((self.parse_factor(), op == "/"))
        return _assemble_term(factors)

    def parse_factor(self) -> Expr:
        t = self.peek()
        if t.text == "(":
            self.next()
            e = self.parse_expr()
            self.expect(")")
            if self.peek().text == "^":
                if not isinstance(e, Mon):
                    self.fail("only a monomial can be raised to a symbolic power")
                self.next()
                self.expect("(")
                exp = self.parse_linform()
                self.expect(")")
                if exp.is_const():
                    k = exp.const
                    m = e.mon
                    c = m.c ** k if k >= 0 else 1 / (m.c ** -k)
                    return Mon(ParamMon.make(c, {p: kk * k for p, kk in m.powers},
                                             m.qexp.scale(k)))
                return Pow(e.mon, exp)
            return e
        if t.kind == "int" or (t.text == "-" and self.peek(1).kind == "int"):
            c = self.parse_rational()
            if self.peek().text == "^":
                self.next()
                self.expect("(")
                exp = self.parse_linform()
                self.expect(")")
                if exp.is_const():
                    k = exp.const
                    return Mon(ParamMon.make(c ** k if k >= 0 else 1 / (c ** -k)))
                return Pow(ParamMon.make(c), exp)
            return Mon(ParamMon.make(c))
        if t.kind != "name":
            self.fail(f"unexpected token {t.text!r}")
        name = t.text
        if name == "q":
            return self.parse_q_factor()
        if name == "poch":
            return self.parse_poch()
        if name == "poch_inf":
            return self.parse_poch_inf()
        if name == "invpochq":
            return self.parse_invpochq()
        if name in ("tau", "tau_p"):
            return self.parse_tau()
        if name == "qbinom":
            self.next()
            self.expect("(")
            n = self.parse_linform()
            self.expect(",")
            k = self.parse_linform()
            self.expect(")")
            return QBinom(n, k)
        if name == "delta":
            self.next()
            self.expect("(")
            arg = self.parse_linform()
            self.expect(")")
            return Delta(arg)
        if name == "sum":
            return self.parse_sum()
        if name == "phi":
            return self.parse_phi()
        if name == "nahm":
            return self.parse_nahm()
        if name == "A" and self.peek(1).text == "(":
            self.next()
            self.expect("(")
            off = self.parse_linform()
            self.expect(")")
            return SeqRef(off)
        # bare parameter, optionally with a linform power
        self.next()
        if self.peek().text == "^":
            self.next()
            self.expect("(")
            exp = self.parse_linform()
            self.expect(")")
            if exp.is_const():
                return Mon(ParamMon.make(1, {name: exp.const}))
            return Pow(ParamMon.make(1, {name: 1}), exp)
        return Mon(ParamMon.make(1, {name: 1}))

    def parse_q_factor(self) -> Expr:
        self.next()  # 'q'
        if self.peek().text == "^":
            self.next()
            if self.peek().text != "(":
                # bare integer exponent: q^2, q^-1
                return Mon(ParamMon.make(1, None, QuadForm.make(self.parse_int())))
            self.expect("(")
            e = self.parse_quadform()
            self.expect(")")
            return Mon(ParamMon.make(1, None, e))
        return Mon(ParamMon.make(1, None, QuadForm.make(1)))

    def parse_sum(self) -> Expr:
        self.next()
        self.expect("(")
        indices = []
        while True:
            t = self.next()
            if t.kind != "name":
                raise DslSyntaxError("expected index name", t.line, t.col)
            indices.append(t.text)
            self.expect(">=")
            z = self.next()
            if z.text != "0":
                raise DslSyntaxError("sum indices range over >=0", z.line, z.col)
            if self.peek().text == ",":
                self.next()
                continue
            break
        self.expect(")")
        # the sum binds the remainder of the current term
        factors = [(self.parse_factor(), False)]
        while self.peek().text in ("*", "/"):
            op = self.next().text
            factors.append((self.parse_factor(), op == "/"))
        return Sum(tuple(indices), _assemble_term(factors))

    def parse_poch(self) -> Expr:
        self.next()
        self.expect("(")
        bases = [self.parse_basemon()]
        while self.peek().text == ",":
            self.next()
            bases.append(self.parse_basemon())
        self.expect(";")
        count = self.parse_linform()
        step = 1
        if self.peek().text == ";":
            self.next()
            step = self.parse_int()
        self.expect(")")
        nodes = tuple(PochFin(b, count, step) for b in bases)
        return nodes[0] if len(nodes) == 1 else Mul(nodes)

    def parse_poch_inf(self) -> Expr:
        self.next()
        self.expect("(")
        bases = [self.parse_basemon()]
        while self.peek().text == ",":
            self.next()
            bases.append(self.parse_basemon())
        step = 1
        if self.peek().text == ";":
            self.next()
            step = self.parse_int()
        self.expect(")")
        nodes = tuple(PochInf(b, step) for b in bases)
        return nodes[0] if len(nodes) == 1 else Mul(nodes)

    def parse_invpochq(self) -> Expr:
        self.next()
        self.expect("(")
        count = self.parse_linform()
        step = 1
        if self.peek().text == ";":
            self.next()
            step = self.parse_int()
        self.expect(")")
        return InvPochQ(count, step)

    def parse_tau(self) -> Expr:
        kw = self.next().text
        self.expect("(")
        if kw == "tau_p":
            p = self.parse_int()
            if p <= 0:
                self.fail("tau_p subscript must be positive")
            self.expect(";")
        else:
            p = 1
        arg = self.parse_linform()
        self.expect(")")
        return Tau(p, arg)

    def parse_phi(self) -> Expr:
        self.next()
        self.expect("(")
        upper = self.parse_monlist()
        self.expect(";")
        lower = self.parse_monlist()
        self.expect(";")
        m = self.parse_int()
        if m <= 0:
            self.fail("phi base power must be positive")
        self.expect(";")
        arg = self.parse_basemon()
        self.expect(")")
        return Phi(tuple(upper), tuple(lower), m, arg)

    def parse_monlist(self):
        if self.peek().text == "-" and self.peek(1).text in (";",):
            self.next()
            return []
        mons = [self.parse_basemon()]
        while self.peek().text == ",":
            self.next()
            mons.append(self.parse_basemon())
        return mons

    def parse_nahm(self) -> Expr:
        self.next()
        self.expect("(")
        rows = self.parse_matrix()
        self.expect(";")
        vec = self.parse_vector()
        self.expect(";")
        c = self.parse_rational()
        self.expect(")")
        return Nahm(rows, vec, c)

    def parse_matrix(self):
        self.expect("[")
        rows = []
        while True:
            rows.append(self.parse_vector())
            if self.peek().text == ",":
                self.next()
                continue
            break
        self.expect("]")
        return tuple(rows)

    def parse_vector(self):
        self.expect("[")
        vals = [self.parse_rational()]
        while self.peek().text == ",":
            self.next()
            vals.append(self.parse_rational())
        self.expect("]")
        return tuple(vals)

    def parse_int(self) -> int:
        sign = 1
        if self.peek().text == "-":
            self.next()
            sign = -1
        t = self.next()
        if t.kind != "int":
            raise DslSyntaxError("expected integer", t.line, t.col)
        return sign * int(t.text)

    def parse_rational(self):
        n = self.parse_int()
        if self.peek().text == "/" and self.peek(1).kind == "int":
            self.next()
            d = self.parse_int()
            return mpq(n, d)
        return mpq(n)

    # -- basemon: c * params^int * q^exponent, '*'/'/'-joined atoms --

    def parse_basemon(self) -> ParamMon:
        mon = self.parse_base_atom()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            nxt = self.parse_base_atom()
            mon = mon.mul(nxt if op == "*" else nxt.inv())
        return mon

    def parse_base_atom(self) -> ParamMon:
        t = self.peek()
        if t.text == "(":
            self.next()
            mon = self.parse_basemon()
            self.expect(")")
            return mon
        if t.text == "-":
            self.next()
            return self.parse_base_atom().mul(ParamMon.make(-1))
        if t.kind == "int":
            return ParamMon.make(self.parse_rational())
        if t.kind != "name":
            self.fail(f"expected monomial atom, got {t.text!r}")
        name = self.next().text
        if name == "q":
            if self.peek().text == "^":
                self.next()
                if self.peek().text == "(":
                    self.next()
                    e = self.parse_quadform()
                    self.expect(")")
                else:
                    e = QuadForm.make(self.parse_int())
                return ParamMon.make(1, None, e)
            return ParamMon.make(1, None, QuadForm.make(1))
        power = 1
        if self.peek().text == "^":
            self.next()
            if self.peek().text == "(":
                self.next()
                power = self.parse_int()
                self.expect(")")
            else:
                power = self.parse_int()
        return ParamMon.make(1, {name: power})

    # -- polynomial exponent arithmetic --

    def parse_linform(self) -> LinForm:
        qf = self.parse_quadform()
        try:
            return qf.as_lin()
        except ValueError as exc:
            self.fail(f"expected integer linear form: {exc}")

    def parse_quadform(self) -> QuadForm:
        qf = self.parse_poly_expr()
        if qf.denominator_on_lattice() != 1:
            self.fail(f"exponent {qf} is not integer-valued on the index lattice")
        return qf

    def parse_poly_expr(self) -> QuadForm:
        acc = self.parse_poly_term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            t = self.parse_poly_term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def parse_poly_term(self) -> QuadForm:
        acc = self.parse_poly_atom()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            nxt = self.parse_poly_atom()
            if op == "/":
                if not nxt.is_const() or not nxt.const:
                    self.fail("can only divide by a nonzero constant")
                acc = acc.scale(1 / nxt.const)
            else:
                acc = self._poly_mul(acc, nxt)
        return acc

    def _poly_mul(self, a: QuadForm, b: QuadForm) -> QuadForm:
        if a.is_const():
            return b.scale(a.const)
        if b.is_const():
            return a.scale(b.const)
        if a.is_linear() and b.is_linear():
            out = QuadForm.make(a.const * b.const)
            out = out + QuadForm.make(0, {v: c * b.const for v, c in a.lin})
            out = out + QuadForm.make(0, {v: c * a.const for v, c in b.lin})
            qm = {}
            for v, cv in a.lin:
                for w, cw in b.lin:
                    key = (v, w) if v <= w else (w, v)
                    qm[key] = qm.get(key, mpq(0)) + cv * cw
            return out + QuadForm.make(0, None, qm)
        self.fail("exponent degree exceeds 2")

    def parse_poly_atom(self) -> QuadForm:
        t = self.peek()
        if t.text == "-":
            self.next()
            return -self.parse_poly_atom()
        if t.text == "(":
            self.next()
            e = self.parse_poly_expr()
            self.expect(")")
            return self._poly_pow(e)
        if t.kind == "int":
            return self._poly_pow(QuadForm.make(self.parse_rational()))
        if t.kind == "name":
            name = self.next().text
            return self._poly_pow(QuadForm.make(0, {name: 1}))
        self.fail(f"unexpected token {t.text!r} in exponent")

    def _poly_pow(self, base: QuadForm) -> QuadForm:
        if self.peek().text != "^":
            return base
        self.next()
        t = self.next()
        if t.kind != "int":
            raise DslSyntaxError("exponent power must be a literal integer", t.line, t.col)
        n = int(t.text)
        acc = QuadForm.make(1)
        for _ in range(n):
            acc = self._poly_mul(acc, base)
        return acc


def _assemble_term(factors) -> Expr:
    """Fold a list of (expr, is_division) into Mul/Div nodes.

    Adjacent bare monomials are merged into one (a normalization that makes
    the printer/parser round-trip structural); monomial divisors fold into
    the numerator with negated exponents.
    """
    mon = ParamMon.make(1)
    have_mon = False
    num, den = [], []
    for e, is_div in factors:
        if isinstance(e, Mon):
            mon = mon.mul(e.mon.inv() if is_div else e.mon)
            have_mon = True
        elif is_div:
            den.append(e)
        else:
            num.append(e)
    if have_mon and (mon != ParamMon.make(1) or not num):
        num.insert(0, Mon(mon))
    if not num:
        num.append(Mon(ParamMon.make(1)))
    top = num[0] if len(num) == 1 else Mul(tuple(num))
    if not den:
        return top
    bot = den[0] if len(den) == 1 else Mul(tuple(den))
    return Div(top, bot)


def parse(text: str) -> Expr:
    """Parse a full expression; raises DslSyntaxError on malformed input."""
    p = _Parser(text)
    e = p.parse_expr()
    t = p.peek()
    if t.kind != "eof":
        raise DslSyntaxError(f"trailing input {t.text!r}", t.line, t.col)
    return e


# --- canonical printer -----------------------------------------------------


def _mon_str(m: ParamMon, for_exponent_ctx=False) -> str:
    parts = []
    if m.c != 1 or (not m.powers and m.qexp.is_const() and not m.qexp.const):
        parts.append(rat_str(m.c))
    for p, k in m.powers:
        parts.append(p if k == 1 else f"{p}^({k})")
    if not m.qexp.is_const() or m.qexp.const:
        if m.qexp.is_const() and m.qexp.const == 1:
            parts.append("q")
        else:
            parts.append(f"q^({m.qexp})")
    if not parts:
        parts.append("1")
    return "*".join(parts)


def pretty(e: Expr) -> str:
    """Canonical text form; parse(pretty(e)) is structurally identical to e."""
    if isinstance(e, Mon):
        return _mon_str(e.mon)
    if isinstance(e, PochFin):
        step = f"; {e.step}" if e.step != 1 else ""
        return f"poch({_mon_str(e.base)}; {e.count}{step})"
    if isinstance(e, PochInf):
        step = f"; {e.step}" if e.step != 1 else ""
        return f"poch_inf({_mon_str(e.base)}{step})"
    if isinstance(e, InvPochQ):
        step = f"; {e.step}" if e.step != 1 else ""
        return f"invpochq({e.count}{step})"
    if isinstance(e, Tau):
        return f"tau({e.arg})" if e.p == 1 else f"tau_p({e.p}; {e.arg})"
    if isinstance(e, QBinom):
        return f"qbinom({e.n}, {e.k})"
    if isinstance(e, Delta):
        return f"delta({e.arg})"
    if isinstance(e, Pow):
        base = _mon_str(e.base)
        if "*" in base or "^" in base:
            base = f"({base})"
        return f"{base}^({e.exp})"
    if isinstance(e, Mul):
        return " * ".join(_paren_factor(f) for f in e.factors)
    if isinstance(e, Div):
        return f"{_paren_factor(e.num)} / {_paren_factor(e.den, div=True)}"
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.terms):
            if isinstance(t, Neg):
                parts.append(f"- {_paren_term(t.inner)}")
            else:
                parts.append(_paren_term(t) if i == 0 else f"+ {_paren_term(t)}")
        return " ".join(parts)
    if isinstance(e, Neg):
        return f"- {_paren_term(e.inner)}"
    if isinstance(e, Sum):
        idx = ", ".join(f"{v}>=0" for v in e.indices)
        return f"sum({idx}) {_sum_body(e.term)}"
    if isinstance(e, Phi):
        up = ", ".join(_mon_str(m) for m in e.upper) or "-"
        lo = ", ".join(_mon_str(m) for m in e.lower) or "-"
        return f"phi({up}; {lo}; {e.base_power}; {_mon_str(e.arg)})"
    if isinstance(e, Nahm):
        rows = ", ".join("[" + ", ".join(rat_str(x) for x in r) + "]" for r in e.a)
        vec = ", ".join(rat_str(x) for x in e.b)
        return f"nahm([{rows}]; [{vec}]; {rat_str(e.c)})"
    if isinstance(e, SeqRef):
        return f"A({e.offset})"
    raise TypeError(f"unknown node {type(e).__name__}")


def _paren_factor(e: Expr, div=False) -> str:
    s = pretty(e)
    if isinstance(e, (Add, Neg, Sum, Div)) or (div and isinstance(e, Mul)):
        return f"({s})"
    return s


def _paren_term(e: Expr) -> str:
    s = pretty(e)
    if isinstance(e, (Add, Neg)):
        return f"({s})"
    return s


def _sum_body(e: Expr) -> str:
    if isinstance(e, (Add, Neg, Sum)):
        return f"({pretty(e)})"
    if isinstance(e, Mul):
        return " * ".join(_paren_factor(f) for f in e.factors)
    if isinstance(e, Div):
        return pretty(e)
    return pretty(e)


# --- validator --------------------------------------------------------------


def validate(e: Expr, params) -> list:
    """Structural diagnostics; empty list means the expression is well-formed.

    ``params`` is the set of declared parameter names (integer parameters used
    inside exponents should be included as well).
    """
    diags = []
    params = set(params)

    unbound = free_indices(e) - params
    for v in sorted(unbound):
        diags.append(f"index variable {v!r} is not bound by any enclosing sum")
    for p in sorted(used_params(e) - params):
        diags.append(f"parameter {p!r} is not declared")

    for node in walk(e):
        if isinstance(node, Mon) and not node.mon.qexp.is_integer_valued():
            diags.append(f"exponent {node.mon.qexp} is not integer-valued on the lattice")
        if isinstance(node, (PochFin, PochInf)):
            if not node.base.qexp.is_linear():
                diags.append(f"pochhammer base exponent {node.base.qexp} is not linear")
        if isinstance(node, Phi) and not (node.upper or node.lower):
            if node.arg.c == 0:
                diags.append("phi with empty parameter lists needs a nonzero argument")
        if isinstance(node, Nahm):
            r = len(node.a)
            if any(len(row) != r for row in node.a) or len(node.b) != r:
                diags.append("nahm matrix/vector dimensions disagree")
            else:
                for i in range(r):
                    for j in range(r):
                        if node.a[i][j] != node.a[j][i]:
                            diags.append("nahm matrix is not symmetric")
                            break
                    else:
                        continue
                    break
    return diags
