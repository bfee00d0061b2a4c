import random

import pytest
from gmpy2 import mpq

from qslater.errors import Divergent, GridMismatch, IndeterminateValuation, Pole
from qslater.qseries import (
    QSeries,
    inv_poch_q,
    jtp_product,
    poch_fin,
    poch_inf,
    qbinom,
    qs_add,
    qs_invert,
    qs_mul,
    tau_p_mon,
)


def series(pairs, cap, d=1):
    return QSeries.from_pairs(pairs, cap, d)


def geom(cap):
    """1 + q + q^2 + ... up to cap."""
    return series([(k, 1) for k in range(cap + 1)], cap)


class TestAdd:
    def test_cancellation(self):
        a = series([(0, 1), (1, 1)], 5)
        b = series([(0, 1), (1, -1)], 5)
        assert qs_add(a, b) == series([(0, 2)], 5)

    def test_zero_identity(self):
        a = series([(2, 3), (4, -1)], 7)
        assert qs_add(a, QSeries.zero(1, 7)) == a

    def test_window_capping(self):
        a = series([(k, 1) for k in range(6)], 5)
        b = series([(2, 1), (4, 1)], 4)
        c = qs_add(a, b)
        assert c.cap == 4
        assert c.coeff(4) == 2

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            qs_add(series([(0, 1)], 3, d=1), series([(0, 1)], 3, d=2))


class TestMul:
    def test_telescoping(self):
        one_minus_q = series([(0, 1), (1, -1)], 10)
        prod = qs_mul(one_minus_q, geom(10))
        assert prod.cap == 10
        assert prod == QSeries.one(10)

    def test_monomials(self):
        a = QSeries.monomial(mpq(2), -1, 5)
        b = QSeries.monomial(mpq(3), 4, 5)
        c = qs_mul(a, b)
        assert c.coeff(3) == 6
        # cap = min(5+4, 5+(-1)) = 4
        assert c.cap == 4

    def test_hand_expansion(self):
        a = series([(0, 1), (1, -2)], 6)
        b = series([(0, 1), (2, -2)], 6)
        c = qs_mul(a, b)
        assert [c.coeff(k) for k in range(4)] == [1, -2, -2, 4]


class TestInvert:
    def test_geometric(self):
        a = series([(0, 1), (1, -1)], 4)
        assert qs_invert(a) == geom(4)

    def test_pure_power(self):
        a = QSeries.monomial(mpq(1), 2, 4)
        inv = qs_invert(a)
        assert inv.v0 == -2 and inv.coeff(-2) == 1

    def test_exact_zero(self):
        with pytest.raises(IndeterminateValuation):
            qs_invert(QSeries.zero(1, 4))

    def test_all_zero_window(self):
        with pytest.raises(IndeterminateValuation):
            qs_invert(series([], 4))

    def test_unit_law_random(self):
        rng = random.Random(7)
        for _ in range(200):
            v0 = rng.randint(-3, 3)
            cap = v0 + rng.randint(1, 8)
            coeffs = [mpq(rng.randint(-4, 4), rng.randint(1, 3)) for _ in range(cap - v0 + 1)]
            if not any(coeffs):
                continue
            a = QSeries(1, v0, cap, coeffs)
            prod = qs_mul(a, qs_invert(a))
            assert prod == QSeries.one(prod.cap)


class TestPochFin:
    def test_positive(self):
        # (2;q)_3 = (1-2)(1-2q)(1-2q^2) = -1+2q+2q^2-4q^3
        p = poch_fin(2, 0, 3, 8)
        assert [p.coeff(k) for k in range(4)] == [-1, 2, 2, -4]

    def test_negative_count(self):
        # (q^2;q)_{-1} = 1/(q;q)_1 = 1/(1-q)
        p = poch_fin(1, 2, -1, 6)
        assert p == geom(6)

    def test_pole(self):
        with pytest.raises(Pole):
            poch_fin(1, 1, -1, 6)

    def test_zero_factor(self):
        assert poch_fin(1, 0, 2, 6).exact_zero

    def test_recurrence_integer_range(self):
        # (a;q)_{n+1} = (a;q)_n * (1 - c q^{e+n}) for n in [-8, 8]
        rng = random.Random(3)
        for _ in range(40):
            c = mpq(rng.choice([1, -1, 2, 3, mpq(1, 2), mpq(-2, 3)]))
            e = rng.randint(0, 3)
            if c == 1 and e == 0:
                continue
            cap = 12
            for n in range(-8, 8):
                try:
                    lhs = poch_fin(c, e, n + 1, cap)
                    rhs = qs_mul(
                        poch_fin(c, e, n, cap + abs(e + n) + 1),
                        QSeries.from_pairs([(0, 1), (e + n, -c)], cap + abs(e + n) + 1),
                    )
                except Pole:
                    continue
                assert lhs == rhs.truncate(min(lhs.cap, rhs.cap))

    def test_splitting_law(self):
        # (a;q)_{m+n} = (a;q)_m (a q^m;q)_n
        rng = random.Random(11)
        for _ in range(30):
            c = mpq(rng.choice([2, -1, mpq(1, 2), mpq(3, 5)]))
            e = rng.randint(0, 2)
            for m in range(-5, 6):
                for n in range(-5, 6):
                    try:
                        lhs = poch_fin(c, e, m + n, 10)
                        rhs = qs_mul(poch_fin(c, e, m, 14), poch_fin(c, e + m, n, 14))
                    except Pole:
                        continue
                    cap = min(lhs.cap, rhs.cap)
                    assert lhs.truncate(cap) == rhs.truncate(cap)


class TestPochInf:
    def test_euler_pentagonal(self):
        # (q;q)_oo begins 1 - q - q^2 + q^5 + q^7 - q^12 ...
        p = poch_inf(1, 1, 12)
        expected = {0: 1, 1: -1, 2: -1, 5: 1, 7: 1, 12: -1}
        for k in range(13):
            assert p.coeff(k) == expected.get(k, 0)

    def test_one_base(self):
        assert poch_inf(1, 0, 5).exact_zero

    def test_divergent(self):
        with pytest.raises(Divergent):
            poch_inf(1, -1, 5)


class TestInvPochQ:
    def test_partitions_parts_at_most_two(self):
        p = inv_poch_q(2, 8)
        assert [p.coeff(k) for k in range(6)] == [1, 1, 2, 2, 3, 3]

    def test_zero_and_negative(self):
        assert inv_poch_q(0, 5) == QSeries.one(5)
        assert inv_poch_q(-3, 5).exact_zero


class TestTau:
    def test_values(self):
        assert tau_p_mon(1, 3) == (mpq(-1), 3)
        assert tau_p_mon(1, 0) == (mpq(1), 0)
        assert tau_p_mon(2, -1) == (mpq(-1), 2)

    def test_addition_law(self):
        # tau(m+n) = tau(m) tau(n) q^{mn}
        for m in range(-10, 11):
            for n in range(-10, 11):
                cm, em = tau_p_mon(1, m)
                cn, en = tau_p_mon(1, n)
                c, e = tau_p_mon(1, m + n)
                assert c == cm * cn and e == em + en + m * n


class TestQBinom:
    def test_4_choose_2(self):
        b = qbinom(4, 2, 8)
        assert [b.coeff(k) for k in range(5)] == [1, 1, 2, 1, 1]
        assert b.coeff(5) == 0

    def test_edges(self):
        assert qbinom(5, 0, 6) == QSeries.one(6)
        assert qbinom(2, 3, 6).exact_zero

    def test_pochhammer_ratio_oracle(self):
        for n in range(7):
            for k in range(n + 1):
                direct = qbinom(n, k, 20)
                ratio = qs_mul(
                    poch_fin(1, 1, n, 20),
                    qs_mul(qs_invert(poch_fin(1, 1, k, 20) if k else QSeries.one(20)),
                           qs_invert(poch_fin(1, 1, n - k, 20) if n - k else QSeries.one(20))),
                )
                cap = min(direct.cap, ratio.cap)
                assert direct.truncate(cap) == ratio.truncate(cap)

    def test_basic_q_chu_relation(self):
        # [n,k]_q tau(k) = (q^{-n};q)_k / (q;q)_k * q^{nk}
        for n in range(9):
            for k in range(n + 1):
                c, e = tau_p_mon(1, k)
                lhs = qbinom(n, k, 30).scale(c, e)
                rhs = qs_mul(
                    poch_fin(1, -n, k, 30),
                    inv_poch_q(k, 30 + n * k),
                ).scale(mpq(1), n * k)
                cap = min(lhs.cap, rhs.cap)
                assert lhs.truncate(cap) == rhs.truncate(cap)


class TestJtp:
    def test_direct_composition(self):
        z = jtp_product(1, 1, 1, 10)
        manual = qs_mul(
            qs_mul(poch_inf(1, 1, 10, 1, 2), poch_inf(1, 1, 10, 1, 2)),
            poch_inf(1, 2, 10, 1, 2),
        )
        assert z == manual

    def test_bilateral_theta_oracle(self):
        # (z, Q/z, Q; Q)_oo = sum_n tau_{p+1}(n) z^n, Q = q^{p+1}
        for (cz, ez, p) in [(1, 2, 4), (-1, 1, 1), (1, 1, 2)]:
            cap = 24
            prod = jtp_product(mpq(cz), ez, p, cap)
            acc = QSeries.zero(1, cap)
            n = 0
            while True:
                added = False
                for s in ([n, -n] if n else [0]):
                    c, e = tau_p_mon(p + 1, s)
                    ee = e + s * ez
                    if ee <= cap:
                        term = QSeries.monomial(c * (mpq(cz) ** s if s >= 0 else mpq(1, cz) ** (-s)), ee, cap)
                        acc = qs_add(acc, term)
                        added = True
                if not added and n > 2 * cap + 4:
                    break
                n += 1
            assert prod == acc


class TestDisplay:
    def test_str(self):
        s = series([(0, 1), (2, -3), (5, mpq(1, 2))], 6)
        assert str(s) == "1 - 3*q^2 + 1/2*q^5 + O(q^7)"
        assert str(QSeries.zero(1, 5)) == "0 (exact)"

    def test_rescale(self):
        s = series([(0, 1), (1, 2)], 3, d=1)
        r = s.rescale(2)
        assert r.d == 2 and r.coeff(2) == 2 and r.coeff(1) == 0
