import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpkdim.errors import AdaptednessFailure, BandViolation, ClosureViolation, SingularDiagonal
from cpkdim.normal_forms import (CocycleSpec, ResonantMap, compose_resonant, cocycle_product,
                                 enumerate_resonances, fractional_time, gaussian, identity_map,
                                 invert_resonant, lemma36_check, polydisc_samples,
                                 random_adapted_cocycle, random_resonant_exponents,
                                 random_resonant_map, from_text, to_text)

LOG2, LOG3, LOG4 = math.log(2), math.log(3), math.log(4)


def q(re_, im_=0):
    return gaussian(Fraction(re_), Fraction(im_))


@pytest.fixture(scope="module")
def res42():
    return enumerate_resonances((LOG4, LOG2), 1e-9, bases=(4, 2))


# --- resonances ---


def test_resonance_examples():
    r = enumerate_resonances((LOG4, LOG2), 1e-9)
    assert r.R == (((0, 2),),) and r.Delta == 1 and r.theta == pytest.approx(2.0)
    assert r.I == {1}
    r = enumerate_resonances((LOG3, LOG2), 1e-9)
    assert r.R == ((),) and r.Delta == 0
    r = enumerate_resonances((1.0, 0.9), 1e-6)
    assert r.I == frozenset() and r.Delta == 0


def test_resonance_exact_bases():
    r = enumerate_resonances((math.log(8), LOG4, LOG2), 1e-9, bases=(8, 4, 2))
    assert r.R[0] == ((0, 1, 1), (0, 0, 3))
    assert r.R[1] == ((0, 0, 2),)
    assert r.Delta == 3


def test_resonance_validation():
    with pytest.raises(ValueError):
        enumerate_resonances((LOG2, LOG4))
    with pytest.raises(ValueError):
        enumerate_resonances((LOG4, LOG2), eps_res=1.0)


def test_resonance_set_invariants():
    rng = np.random.default_rng(0)
    for _ in range(200):
        lambdas, bases = random_resonant_exponents(rng)
        r = enumerate_resonances(lambdas, 1e-9, bases=bases)
        assert r.Delta > 0
        for i, degrees in enumerate(r.R):
            if i + 1 not in r.I:
                assert degrees == ()
            for alpha in degrees:
                assert sum(alpha) >= 2 and not any(alpha[: i + 1])
                assert sum(alpha) <= r.theta + 1e-9
                assert abs(lambdas[i] - sum(a * lam for a, lam in zip(alpha, lambdas))) <= 1e-9


def test_float_and_exact_resonances_agree():
    rng = np.random.default_rng(1)
    for _ in range(100):
        lambdas, bases = random_resonant_exponents(rng)
        assert (enumerate_resonances(lambdas, 1e-6).R
                == enumerate_resonances(lambdas, 1e-6, bases=bases).R)


# --- composition and inversion ---


def test_compose_linear(res42):
    A = ResonantMap((q(1, 4), q(0, Fraction(1, 2))))
    B = ResonantMap((q(Fraction(1, 3)), q(Fraction(1, 5), 1)))
    C = compose_resonant(A, B, res42)
    assert C.is_linear()
    assert C.a == (A.a[0] * B.a[0], A.a[1] * B.a[1])


def test_compose_identity(res42):
    rng = np.random.default_rng(2)
    R = random_resonant_map(res42, 0.01, rng)
    assert compose_resonant(identity_map(2), R, res42).equals(R)
    assert compose_resonant(R, identity_map(2), res42).equals(R)


def test_compose_hand_oracle(res42):
    a, b, c = q(Fraction(1, 4), Fraction(1, 10)), q(Fraction(1, 2)), q(2, -1)
    a2, b2, c2 = q(Fraction(-1, 4)), q(0, Fraction(1, 2)), q(Fraction(1, 3), 5)
    R1 = ResonantMap((a, b), ({(0, 2): c},))
    R2 = ResonantMap((a2, b2), ({(0, 2): c2},))
    C = compose_resonant(R1, R2, res42)
    assert C.a == (a * a2, b * b2)
    assert C.N[0] == {(0, 2): a * c2 + c * b2 * b2}


def test_invert_hand_oracle(res42):
    a, b, c = q(Fraction(1, 4), Fraction(1, 10)), q(Fraction(1, 2), Fraction(1, 7)), q(2, -1)
    R = ResonantMap((a, b), ({(0, 2): c},))
    inv = invert_resonant(R, res42)
    one = q(1)
    assert inv.a == (one / a, one / b)
    assert inv.N[0] == {(0, 2): -c / (a * b * b)}


def test_invert_linear(res42):
    A = ResonantMap((q(1, 4), q(0, Fraction(1, 2))))
    inv = invert_resonant(A, res42)
    assert inv.is_linear() and inv.a == (q(1) / A.a[0], q(1) / A.a[1])


def test_inverse_identity_random_maps():
    rng = np.random.default_rng(3)
    for _ in range(100):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        R = random_resonant_map(res, 0.01, rng)
        inv = invert_resonant(R, res)
        ident = identity_map(res.k)
        assert compose_resonant(R, inv, res).equals(ident)
        assert compose_resonant(inv, R, res).equals(ident)


def test_singular_diagonal(res42):
    R = ResonantMap((q(0), q(1)))
    with pytest.raises(SingularDiagonal):
        invert_resonant(R, res42)


def test_closure_violation_detected():
    # a non-resonant monomial planted in one factor must not pass silently
    res = enumerate_resonances((LOG4, LOG2), 1e-9, bases=(4, 2))
    bad = ResonantMap((q(1), q(1)), ({(0, 3): q(1)},))
    with pytest.raises(ClosureViolation):
        compose_resonant(bad, identity_map(2), res)


def test_inadmissible_monomial():
    with pytest.raises(ValueError):
        ResonantMap((q(1), q(1)), ({(1, 1): q(1)},))


def test_closure_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        R1 = random_resonant_map(res, 0.01, rng)
        R2 = random_resonant_map(res, 0.01, rng)
        C = compose_resonant(R1, R2, res)
        for i, comp in enumerate(C.N):
            assert set(comp) <= set(res.R[i])


def test_associativity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        R1, R2, R3 = (random_resonant_map(res, 0.01, rng) for _ in range(3))
        left = compose_resonant(compose_resonant(R1, R2, res), R3, res)
        right = compose_resonant(R1, compose_resonant(R2, R3, res), res)
        assert left.equals(right)


def test_composition_matches_numeric_evaluation(res42):
    rng = np.random.default_rng(6)
    R1 = random_resonant_map(res42, 0.01, rng)
    R2 = random_resonant_map(res42, 0.01, rng)
    z = polydisc_samples(2, 50)
    C = compose_resonant(R1, R2, res42).to_complex()
    assert np.allclose(C(z), R1.to_complex()(R2.to_complex()(z)), rtol=1e-12)


# --- cocycles ---


def test_cocycle_first_step(res42):
    spec = random_adapted_cocycle(res42, 0.01, 3, np.random.default_rng(7))
    assert cocycle_product(spec, 1).equals(spec.steps[0])


def test_cocycle_exact_powers(res42):
    a = (q(Fraction(1, 4)), q(0, Fraction(1, 2)))
    spec = CocycleSpec([ResonantMap(a)] * 6, res42, 0.0)
    for n in range(1, 7):
        P = cocycle_product(spec, n)
        assert P.is_linear() and P.a == (a[0] ** n, a[1] ** n)


def test_cocycle_two_step_band(res42):
    spec = random_adapted_cocycle(res42, 0.01, 2, np.random.default_rng(8))
    m = abs(complex(cocycle_product(spec, 2).to_complex().a[0]))
    assert math.exp(-2 * LOG4 - 0.02) <= m <= math.exp(-2 * LOG4 + 0.02)


def test_band_violation(res42):
    with pytest.raises(BandViolation):
        CocycleSpec([ResonantMap((q(1), q(Fraction(1, 2))))], res42, 0.01)


def test_cocycle_range(res42):
    spec = random_adapted_cocycle(res42, 0.01, 2, np.random.default_rng(9))
    with pytest.raises(ValueError):
        cocycle_product(spec, 3)


def test_inverse_law():
    rng = np.random.default_rng(10)
    for _ in range(20):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        spec = random_adapted_cocycle(res, 0.01, 4, rng)
        rev = identity_map(res.k)
        for R in spec.steps[:4]:
            rev = compose_resonant(rev, invert_resonant(R, res), res)
        assert cocycle_product(spec, -4).equals(rev)


def test_band_propagation():
    rng = np.random.default_rng(11)
    for _ in range(30):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        eps = 0.02
        spec = random_adapted_cocycle(res, eps, 6, rng)
        for n in range(1, 7):
            for a, lam in zip(cocycle_product(spec, n).a, lambdas):
                m = abs(complex(a.x, a.y)) if hasattr(a, "x") else abs(a)
                assert math.exp(-n * lam - n * eps) <= m <= math.exp(-n * lam + n * eps)


# --- polydisc estimates ---


def test_lemma36_linear(res42):
    a = (q(Fraction(1, 4)), q(0, Fraction(1, 2)))
    spec = CocycleSpec([ResonantMap(a)] * 5, res42, 0.0)
    out = lemma36_check(spec, 5, samples=200)
    assert out.all_ok
    m1, m2, m3, m4 = out.worst_margins
    # the first-row derivative bound includes the diagonal, so item 2 stays finite
    assert math.isinf(m4) and 0 < m2 < math.inf
    assert m3 == pytest.approx(0.0, abs=1e-12)


def test_lemma36_random_adapted(res42):
    rng = np.random.default_rng(12)
    spec = random_adapted_cocycle(res42, 0.01, 5, rng)
    out = lemma36_check(spec, 5, samples=1000)
    assert out.all_ok and min(out.worst_margins) >= 0


def test_lemma36_random_exponents():
    rng = np.random.default_rng(13)
    for _ in range(20):
        lambdas, bases = random_resonant_exponents(rng)
        res = enumerate_resonances(lambdas, 1e-9, bases=bases)
        spec = random_adapted_cocycle(res, 0.01, 4, rng)
        assert lemma36_check(spec, int(rng.integers(1, 5)), samples=300, seed=1).all_ok


def test_lemma36_adaptedness_failure(res42):
    spec = random_adapted_cocycle(res42, 0.01, 3, np.random.default_rng(14), c_scale=100.0)
    spec.M = 1.0
    with pytest.raises(AdaptednessFailure):
        lemma36_check(spec, 3)


def test_polydisc_samples():
    z = polydisc_samples(3, 500, r=0.7, seed=2)
    assert z.shape == (500, 3) and np.all(np.abs(z) <= 0.7)
    assert np.array_equal(z, polydisc_samples(3, 500, r=0.7, seed=2))


# --- fractional time ---


def test_fractional_time_examples():
    assert fractional_time(10, LOG4, LOG2) == 5
    assert fractional_time(0, LOG4, LOG2) == 0
    assert fractional_time(7, 1.0, 0.3) == 2


@given(st.integers(0, 10_000), st.floats(0.01, 10), st.floats(0.01, 1))
@settings(max_examples=500)
def test_fractional_time_bounds(n, lam1, frac):
    lamk = lam1 * frac
    qn = fractional_time(n, lam1, lamk)
    x = n * lamk / lam1
    assert 0 <= qn <= n
    assert x - 1 < qn <= x + 1e-9
    assert fractional_time(n + 1, lam1, lamk) >= qn


# --- text form ---


def test_text_roundtrip(res42):
    rng = np.random.default_rng(15)
    R = random_resonant_map(res42, 0.01, rng)
    assert from_text(to_text(R)).equals(R)
    Rc = random_resonant_map(res42, 0.01, rng, exact=False)
    assert from_text(to_text(Rc)).equals(Rc)


def test_text_format():
    R = from_text("a_1 = 1/4,1/10; a_2 = 1/2,0; c_1[0,2] = 2,-1")
    assert R.N[0] == {(0, 2): q(2, -1)}
    assert to_text(R) == "a_1 = 1/4,1/10\na_2 = 1/2,0\nc_1[0,2] = 2,-1\n"
    with pytest.raises(ValueError):
        from_text("b_1 = 1,0")
