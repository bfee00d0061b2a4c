import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from qslater.dsl import parse, pretty, validate
from qslater.errors import DslSyntaxError
from qslater.expr import (
    Add,
    Delta,
    Div,
    InvPochQ,
    LinForm,
    Mon,
    Mul,
    Nahm,
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
    lin_mul,
    subst_indices,
)


class TestLinForm:
    def test_arith(self):
        a = LinForm.of(1, i=2, j=-1)
        b = LinForm.of(0, j=1)
        assert (a + b) == LinForm.of(1, i=2)
        assert (a - a) == LinForm.of(0)
        assert a.eval({"i": 3, "j": 4}) == 3

    def test_subst(self):
        a = LinForm.of(0, i=1, j=-1)
        out = a.subst({"i": LinForm.of(2, m=1)})
        assert out == LinForm.of(2, m=1, j=-1)


class TestQuadForm:
    def test_eval(self):
        f = QuadForm.make(0, {"n": mpq(-1, 2)}, {("n", "n"): mpq(1, 2)})
        assert f.eval({"n": 5}) == 10  # n(n-1)/2

    def test_integer_valued(self):
        tri = QuadForm.make(0, {"n": mpq(-1, 2)}, {("n", "n"): mpq(1, 2)})
        pent = QuadForm.make(0, {"n": mpq(-1, 2)}, {("n", "n"): mpq(3, 2)})
        assert tri.is_integer_valued()
        assert pent.is_integer_valued()
        assert QuadForm.make(0, None, {("i", "j"): 1}).is_integer_valued()
        assert QuadForm.make(0, None, {("n", "n"): 1}).is_integer_valued()
        assert not QuadForm.make(0, None, {("n", "n"): mpq(1, 2)}).is_integer_valued()
        assert not QuadForm.make(0, {"n": mpq(1, 3)}).is_integer_valued()

    def test_lin_mul(self):
        a = LinForm.of(1, i=1)
        b = LinForm.of(0, j=1)
        f = lin_mul(a, b)
        assert f.eval({"i": 2, "j": 5}) == 15

    def test_subst(self):
        f = QuadForm.make(0, None, {("i", "j"): 1})
        g = f.subst({"i": LinForm.of(3, j=1)})
        for j in range(5):
            assert g.eval({"j": j}) == (j + 3) * j


class TestParse:
    def test_rr1_lhs(self):
        e = parse("sum(n>=0) q^(n^2) / invpochq(n)")
        assert isinstance(e, Sum) and e.indices == ("n",)
        assert isinstance(e.term, Div)
        assert isinstance(e.term.num, Mon)
        assert isinstance(e.term.den, InvPochQ)

    def test_seqref(self):
        e = parse("poch_inf(x) * sum(i>=0, j>=0) A(i-j) * x^(j) / (invpochq(i)*invpochq(j))")
        assert isinstance(e, Mul)
        assert isinstance(e.factors[0], PochInf)
        s = e.factors[1]
        assert isinstance(s, Sum) and s.indices == ("i", "j")
        assert any(isinstance(f, SeqRef) for f in s.term.num.factors)

    def test_non_integer_exponent(self):
        with pytest.raises(DslSyntaxError):
            parse("sum(n>=0) q^(n^2/2)")

    def test_multi_poch_sugar(self):
        e = parse("poch(a, b; n)")
        assert isinstance(e, Mul) and all(isinstance(f, PochFin) for f in e.factors)

    def test_step(self):
        e = parse("poch(q; n; 2)")
        assert isinstance(e, PochFin) and e.step == 2

    def test_signed_power(self):
        e = parse("-1^(k)")
        assert isinstance(e, Pow) and e.base.c == -1

    def test_tau(self):
        assert parse("tau(n)") == Tau(1, LinForm.var("n"))
        assert parse("tau_p(3; n-1)") == Tau(3, LinForm.of(-1, n=1))

    def test_delta(self):
        assert parse("delta(i-j)") == Delta(LinForm.of(0, i=1, j=-1))

    def test_phi(self):
        e = parse("phi(a, b; c; 1; z)")
        assert isinstance(e, Phi)
        assert len(e.upper) == 2 and len(e.lower) == 1
        e = parse("phi(a; -; 1; y)")
        assert e.lower == ()

    def test_nahm(self):
        e = parse("nahm([[2]]; [0]; 0)")
        assert isinstance(e, Nahm) and e.a == ((mpq(2),),)
        e2 = parse("nahm([[1, 0], [0, 1]]; [1/2, 0]; -1/3)")
        assert e2.b == (mpq(1, 2), mpq(0)) and e2.c == mpq(-1, 3)

    def test_monomial_merge(self):
        e = parse("2 * x * q^(i*j) / y")
        assert isinstance(e, Mon)
        assert e.mon.c == 2 and e.mon.power_map == {"x": 1, "y": -1}

    def test_basemon_division(self):
        e = parse("poch(x*q/t; n)")
        assert e.base.power_map == {"x": 1, "t": -1}

    def test_qbinom(self):
        e = parse("qbinom(n, k)")
        assert isinstance(e, QBinom)

    def test_addition(self):
        e = parse("poch_inf(q) + q^(2) - x")
        assert isinstance(e, Add) and len(e.terms) == 3

    def test_syntax_error_position(self):
        with pytest.raises(DslSyntaxError) as ei:
            parse("poch(q n)")
        assert ei.value.line == 1

    def test_sum_binds_rest_of_term(self):
        e = parse("sum(n>=0) tau(n) * x^(n) / invpochq(n) + 1")
        assert isinstance(e, Add)
        assert isinstance(e.terms[0], Sum)
        assert isinstance(e.terms[0].term, Div)


class TestPretty:
    CASES = [
        "sum(n>=0) q^(n^2) / invpochq(n)",
        "poch_inf(x) * sum(i>=0, j>=0) A(i-j) * x^(j) / (invpochq(i) * invpochq(j))",
        "poch(b*q/t; j; 2) * tau_p(3; n-1)",
        "qbinom(n, k) * delta(i-j) + (- poch_inf(-q))",
        "phi(a, b; c; 1; z) * nahm([[2]]; [0]; 0)",
        "-1^(k) * q^(1/2*k^2 - 1/2*k) * x^(j+k)",
        "sum(i>=0) (sum(j>=0) A(i-j) * q^(i*j))",
    ]

    @pytest.mark.parametrize("text", CASES)
    def test_roundtrip(self, text):
        e = parse(text)
        assert parse(pretty(e)) == e

    def test_tau_forms(self):
        assert pretty(Tau(1, LinForm.var("n"))) == "tau(n)"
        assert pretty(Tau(3, LinForm.of(-1, n=1))) == "tau_p(3; n - 1)"


linforms = st.builds(
    lambda c, a, b: LinForm.of(c, n=a, m=b),
    st.integers(-3, 3), st.integers(-2, 2), st.integers(-2, 2),
)
mons = st.builds(
    lambda c, px, lf: ParamMon.make(c, {"x": px}, QuadForm.from_lin(lf)),
    st.sampled_from([mpq(1), mpq(-1), mpq(2), mpq(1, 2)]),
    st.integers(-2, 2),
    linforms,
)
leaf_exprs = st.one_of(
    st.builds(Mon, mons),
    st.builds(PochFin, mons, linforms, st.sampled_from([1, 2])),
    st.builds(PochInf, mons, st.sampled_from([1, 2])),
    st.builds(InvPochQ, linforms, st.just(1)),
    st.builds(Tau, st.sampled_from([1, 2, 3]), linforms),
    st.builds(QBinom, linforms, linforms),
    st.builds(Delta, linforms),
    st.builds(SeqRef, linforms),
    st.builds(Pow, st.builds(lambda c: ParamMon.make(c, {"x": 1}),
                             st.sampled_from([mpq(1), mpq(-2)])),
              st.builds(lambda a: LinForm.of(0, n=1, m=a), st.integers(-2, 2))),
)


@given(st.lists(leaf_exprs, min_size=1, max_size=4))
def test_roundtrip_random_products(factors):
    raw = Sum(("n", "m"), factors[0] if len(factors) == 1 else Mul(tuple(factors)))
    e = parse(pretty(raw))  # normal form
    assert parse(pretty(e)) == e


@given(leaf_exprs, leaf_exprs)
def test_roundtrip_random_sums(a, b):
    raw = Sum(("n", "m"), Div(a, b))
    e = parse(pretty(raw))
    assert parse(pretty(e)) == e


class TestValidate:
    def test_clean(self):
        e = parse("sum(n>=0) q^(n^2) * x^(n) / invpochq(n)")
        assert validate(e, {"x"}) == []

    def test_unbound_index(self):
        e = parse("q^(n^2)")
        assert any("not bound" in d for d in validate(e, set()))

    def test_unknown_param(self):
        e = parse("sum(n>=0) x^(n)")
        assert any("not declared" in d for d in validate(e, set()))

    def test_triangular_ok(self):
        e = parse("sum(n>=0) q^(n*(n-1)/2)")
        assert validate(e, set()) == []

    def test_nahm_asymmetric(self):
        e = parse("nahm([[1, 2], [0, 1]]; [0, 0]; 0)")
        assert any("symmetric" in d for d in validate(e, set()))


class TestSubstIndices:
    def test_shift(self):
        e = parse("sum(j>=0) A(i-j) * q^(i*j) / invpochq(j)")
        out = subst_indices(e, {"i": LinForm.of(0, j=1, m=1)})
        # i is free, j is bound: only i is replaced
        assert free_indices(out) == {"m"}

    def test_shadowing(self):
        e = parse("x^(n) * sum(n>=0) q^(n^2)")
        out = subst_indices(e, {"n": LinForm.of(5)})
        assert isinstance(out, Mul)
        inner = out.factors[1]
        assert isinstance(inner, Sum)
        assert free_indices(inner) == set()
        assert inner == parse("sum(n>=0) q^(n^2)")
