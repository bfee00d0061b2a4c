"""End-to-end acceptance checks: exactness, performance, soundness, determinism.

Every comparison in this module is exact rational arithmetic; there are no
tolerances anywhere.
"""

import dataclasses
import json
import math
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest
from gmpy2 import mpq

from qslater import catalog
from qslater.cli import _param_names
from qslater.dsl import parse
from qslater.engine import SubstEnv, eval_expr, flatten_sum, verify, verify_trials
from qslater.errors import ConstraintViolation, Pole, QSlaterError
from qslater.expr import LinForm, Sum, children, subst_indices
from qslater.hyper import nahm_grid
from qslater.qseries import (
    QSeries,
    inv_poch_q,
    poch_fin,
    qbinom,
    qs_invert,
    qs_mul,
    tau_p_mon,
)
from qslater.valcert import val_lower_bound

FIXTURES = Path(__file__).parent / "fixtures"
COEFF_POOL = catalog.COEFF_POOL


def admissible_env(rec, seed=3):
    rng = random.Random(seed)
    for _ in range(500):
        env = rec.sample_env(rng)
        try:
            rec.check_constraints(env)
            return env
        except ConstraintViolation:
            continue
    raise AssertionError(f"{rec.id}: no admissible substitution found")


# --- 1: the flagship pair -------------------------------------------------------


def test_rogers_ramanujan_pair_exact_to_order_50():
    t0 = time.monotonic()
    for id in ("rr1", "rr2"):
        report = verify_trials(catalog.get(id), 50, 1, 42)
        assert report.passed, report.to_json()
    series = eval_expr(catalog.get("rr1").lhs, {}, 8)
    assert [series.coeff(n) for n in range(9)] == [1, 1, 1, 1, 2, 2, 3, 3, 4]
    assert time.monotonic() - t0 < 5.0


# --- 2: the master transformation, all family members ---------------------------


def test_master_transformation_all_members_three_trials():
    t0 = time.monotonic()
    for id in ("thm-main", "thm-equiv"):
        rec = catalog.get(id)
        assert set(rec.family) == {"tau-y", "geom", "poch-z",
                                   "poch-ratio", "delta"}
        report = verify_trials(rec, 25, 3, 42)
        assert report.passed, report.to_json()
        assert len(report.trials) == 3
    assert time.monotonic() - t0 < 60.0


# --- 3 and 9: full catalog via the CLI; byte-identical reports ------------------


def _run_verify_all():
    cmd = [sys.executable, "-m", "qslater.cli", "verify", "all",
           "--order", "30", "--trials", "3", "--seed", "42",
           "--format", "json", "--jobs", "auto"]
    t0 = time.monotonic()
    proc = subprocess.run(cmd, capture_output=True, cwd="/")
    return proc, time.monotonic() - t0


def test_full_catalog_passes_and_reports_are_deterministic():
    first, elapsed = _run_verify_all()
    assert first.returncode == 0, first.stderr.decode()
    assert elapsed < 600.0
    obj = json.loads(first.stdout)
    assert obj["passed"] is True
    assert len(obj["reports"]) >= 45
    assert all(
        all(t["status"] == "pass" for t in r["trials"]) for r in obj["reports"])
    ids = [r["id"] for r in obj["reports"]]
    assert ids == sorted(ids)
    second, _ = _run_verify_all()
    assert second.returncode == 0
    assert second.stdout == first.stdout  # byte-identical


# --- 4: terminating inner sums are exact at every depth -------------------------


def test_terminating_sums_exact_through_depth_12():
    for id, cap in (("orc-pfaff-saalschutz", 25), ("lem-gr-1", 30)):
        rec = dataclasses.replace(catalog.get(id), intparams={"nn": (0, 12)})
        report = verify_trials(rec, cap, 3, 5)
        assert report.passed, report.to_json()
        assert len(report.trials) == 3


# --- 5: randomized exact property suites ----------------------------------------


def _random_base(rng):
    return rng.choice(COEFF_POOL), rng.randint(-3, 3)


def test_pochhammer_recurrence_200_cases():
    rng = random.Random(101)
    done = 0
    for _ in range(4000):
        if done >= 200:
            break
        c, e = _random_base(rng)
        n = rng.randint(-5, 5)
        cap = 24
        try:
            lhs = poch_fin(c, e, n + 1, cap)
            step = QSeries.from_pairs([(0, mpq(1)), (e + n, -c)], cap)
            rhs = poch_fin(c, e, n, cap) * step
        except Pole:
            continue
        assert lhs.first_difference(rhs) is None, (c, e, n)
        done += 1
    assert done >= 200


def test_pochhammer_splitting_200_cases():
    rng = random.Random(102)
    done = 0
    for _ in range(4000):
        if done >= 200:
            break
        c, e = _random_base(rng)
        n, m = rng.randint(-5, 5), rng.randint(-5, 5)
        cap = 24
        try:
            lhs = poch_fin(c, e, n + m, cap)
            rhs = poch_fin(c, e, n, cap) * poch_fin(c, e + n, m, cap)
        except Pole:
            continue
        assert lhs.first_difference(rhs) is None, (c, e, n, m)
        done += 1
    assert done >= 200


def test_alternating_weight_addition_law_200_cases():
    rng = random.Random(103)
    for _ in range(200):
        n, m = rng.randint(-20, 20), rng.randint(-20, 20)
        lhs = tau_p_mon(1, n + m)
        a, b = tau_p_mon(1, n), tau_p_mon(1, m)
        assert lhs.c == a.c * b.c
        assert lhs.e == a.e + b.e + n * m


def test_binomial_alternating_weight_identity_200_cases():
    # [n,k]_q * tau(k)  ==  (q^-n; q)_k * q^(nk) / (q; q)_k
    rng = random.Random(104)
    cap = 20
    for _ in range(200):
        n = rng.randint(0, 10)
        k = rng.randint(0, 10)
        t = tau_p_mon(1, k)
        lhs = qbinom(n, k, cap) * QSeries.monomial(t.c, t.e, cap)
        rhs = (poch_fin(mpq(1), -n, k, cap)
               * QSeries.monomial(mpq(1), n * k, cap)
               * inv_poch_q(k, cap))
        assert lhs.first_difference(rhs) is None, (n, k)


def test_pochhammer_reversal_identity_200_cases():
    # (q/b; q)_(i-j) * (b*q^-i; q)_j  ==  b^j * tau(j) * q^(-ij) * (q/b; q)_i
    rng = random.Random(105)
    cap = 24
    done = 0
    for _ in range(4000):
        if done >= 200:
            break
        cb, eb = _random_base(rng)
        i, j = rng.randint(0, 6), rng.randint(0, 6)
        try:
            lhs = (poch_fin(1 / cb, 1 - eb, i - j, cap)
                   * poch_fin(cb, eb - i, j, cap))
            mono = QSeries.monomial(
                cb ** j * mpq(-1) ** j,
                j * eb + j * (j - 1) // 2 - i * j, cap)
            rhs = mono * poch_fin(1 / cb, 1 - eb, i, cap)
        except Pole:
            continue
        assert lhs.first_difference(rhs) is None, (cb, eb, i, j)
        done += 1
    assert done >= 200


def test_series_inverse_unit_law_200_cases():
    rng = random.Random(106)
    for _ in range(200):
        v0 = rng.randint(-3, 3)
        cap = v0 + 15
        coeffs = [mpq(rng.randint(-5, 5), rng.randint(1, 4))
                  for _ in range(cap - v0 + 1)]
        if coeffs[0] == 0:
            coeffs[0] = mpq(1)
        s = QSeries(1, v0, cap, coeffs)
        prod = qs_mul(s, qs_invert(s))
        one = QSeries.monomial(mpq(1), 0, prod.cap)
        assert prod.first_difference(one) is None


# --- 6: static valuation bounds are sound; retained windows are cap-stable ------


def _maximal_sums(e):
    if isinstance(e, Sum):
        return [e]
    out = []
    for c in children(e):
        out.extend(_maximal_sums(c))
    return out


def _soundness_env(rec):
    """Admissible parameter map, extended to auxiliary symbols like t."""
    env = admissible_env(rec)
    asg = dict(env.assignments)
    member, lhs, rhs = next(iter(rec.instantiations(env)))
    for side in (lhs, rhs):
        for p in sorted(_param_names(side) - set(asg)):
            asg[p] = (mpq(1), 1)
    return asg, lhs, rhs


@pytest.mark.parametrize("id", [id for id, _, _ in catalog.list_identities()])
def test_static_valuation_bound_sound_on_1000_points(id):
    rec = catalog.get(id)
    asg_params, lhs, rhs = _soundness_env(rec)
    sums = _maximal_sums(lhs) + _maximal_sums(rhs)
    assert sums, f"{id}: no lattice sums to analyze"
    rng = random.Random(0)
    checked = 0
    quota = math.ceil(1000 / len(sums)) + 1
    for s in sums:
        fs = flatten_sum(s)
        bound = val_lower_bound(fs.term, asg_params, fs.indices)
        radii = bound.box(mpq(10))
        if all(r < 0 for r in radii.values()):
            continue  # sum proved identically zero in this window
        names = sorted(radii)
        memo = {}
        got = 0
        attempts = 0
        while got < quota and attempts < 100 * quota:
            attempts += 1
            pt = tuple(rng.randint(0, max(radii[v], 0) + 2) for v in names)
            asg = dict(zip(names, pt))
            if not bound.admissible(asg):
                continue
            if pt not in memo:
                b = bound.bound_at(asg)
                # an infinite bound asserts the term vanishes identically
                capq = 5 if math.isinf(b) else max(int(math.ceil(b)) + 1, 1)
                term = subst_indices(
                    fs.term,
                    {v: LinForm.make(asg[v], {}) for v in fs.indices})
                ser = eval_expr(term, asg_params, capq, rec.grid)
                v = ser.valuation()
                actual = (mpq(ser.cap + 1, rec.grid) if v is None
                          else mpq(v, rec.grid))
                if math.isinf(b):
                    assert v is None, f"{id}: nonzero term where bound is inf"
                    b = actual  # trivially sound; record for the comparison
                memo[pt] = (actual, b)
            actual, b = memo[pt]
            assert actual >= b, f"{id}: val {actual} < bound {b} at {asg}"
            got += 1
            checked += 1
    assert checked >= 1000, f"{id}: only {checked} admissible points sampled"


@pytest.mark.parametrize("id", [id for id, _, _ in catalog.list_identities()])
def test_widening_the_cap_changes_no_retained_coefficient(id):
    rec = catalog.get(id)
    env = admissible_env(rec)
    n_lo, n_hi = 15, 20
    if hasattr(rec, "evaluate_sides"):
        _, lo_l, lo_r = next(iter(rec.evaluate_sides(env, n_lo)))
        _, hi_l, hi_r = next(iter(rec.evaluate_sides(env, n_hi)))
    else:
        _, lhs, rhs = next(iter(rec.instantiations(env)))
        lo_l = eval_expr(lhs, env, n_lo, rec.grid)
        lo_r = eval_expr(rhs, env, n_lo, rec.grid)
        hi_l = eval_expr(lhs, env, n_hi, rec.grid)
        hi_r = eval_expr(rhs, env, n_hi, rec.grid)
    # first_difference compares through the smaller retained window
    assert lo_l.first_difference(hi_l) is None
    assert lo_r.first_difference(hi_r) is None


# --- 7: cross-entry consistency ---------------------------------------------------


def test_specialized_transformation_holds_on_restricted_envs():
    # the x-only transformation must hold on every admissible substitution of
    # the two-extra-parameter master entry, restricted to the shared names
    master = catalog.get("thm-main")
    target = catalog.get("thm-wang")
    keep = set(target.param_specs())
    rng = random.Random(42)
    done = 0
    while done < 3:
        env = master.sample_env(rng)
        try:
            master.check_constraints(env)
            on_master = verify(master, env, 12)
        except QSlaterError:
            continue  # the master entry itself redraws such substitutions
        assert on_master.status == "pass", on_master.json_obj()
        restricted = SubstEnv({k: v for k, v in env.assignments.items()
                               if k in keep})
        target.check_constraints(restricted)
        result = verify(target, restricted, 20)
        assert result.status == "pass", result.json_obj()
        done += 1


def test_one_parameter_entry_is_the_limit_point_of_the_two_parameter_one():
    # the unit value of the extra parameter is excluded by the entry's own
    # constraints, and is a genuine singularity of the inner series ...
    rec0 = catalog.get("cor-999999-0")
    with pytest.raises(ConstraintViolation):
        rec0.check_constraints(SubstEnv.of(a=(1, 0), x=(1, 2)))
    with pytest.raises(Pole):
        eval_expr(parse("phi(q^(-3), q^(-3); q^(-2); 1; q)"), {}, 10)
    # ... so the comparison runs trial-for-trial on shared-x substitutions
    rec1 = catalog.get("cor-9999999")
    rng = random.Random(42)
    done = 0
    while done < 3:
        env = rec0.sample_env(rng)
        try:
            rec0.check_constraints(env)
        except ConstraintViolation:
            continue
        r0 = verify(rec0, env, 20)
        r1 = verify(rec1, SubstEnv({"x": env["x"]}), 20)
        assert r0.status == "pass", r0.json_obj()
        assert r1.status == "pass", r1.json_obj()
        done += 1


def test_quadratic_form_sum_matches_flagship_sum_to_order_50():
    e = parse("nahm([[2]]; [0]; 0)")
    d = nahm_grid(e)
    a = eval_expr(e, {}, 50, d)
    b = eval_expr(catalog.get("rr1").lhs, {}, 50, d)
    assert a.first_difference(b) is None
    assert a.coeff(0) == 1 and a.coeff(4 * d) == 2


# --- 8: negative control ------------------------------------------------------------


def test_corrupted_entry_fails_at_first_divergent_coefficient(capsys):
    from qslater import cli

    code = cli.main(["verify", str(FIXTURES / "off-by-one.idn"),
                     "--format", "json"])
    out = json.loads(capsys.readouterr().out)
    assert code == 1
    trial = out["reports"][0]["trials"][0]
    assert trial["status"] == "fail"
    assert trial["mismatch"]["exponent"] == 1
