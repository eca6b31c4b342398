import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpkdim.errors import IndeterminatePoint, InvalidMap, ZeroVector
from cpkdim.projective import (ProjectiveMap, chart_jacobian, chart_jacobians, critical_degree,
                               evaluate, fs_distance, jacobian_density, normalize, random_points,
                               same_point)

from conftest import circle_cloud

complexes = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)


def vec(n):
    return st.lists(complexes, min_size=n, max_size=n).filter(
        lambda v: max(abs(c) for c in v) > 1e-3)


# --- normalize ---


def test_normalize_examples():
    assert np.allclose(normalize([2, 0]), [1, 0])
    assert np.allclose(normalize([1, 1]), [1, 1])
    assert np.allclose(normalize([3j, -3]), [1j, -1])


def test_normalize_zero_vector():
    with pytest.raises(ZeroVector):
        normalize([0, 0, 0])


@given(vec(3), complexes.filter(lambda c: abs(c) > 1e-3))
def test_normalize_idempotent_and_projective(p, c):
    q = normalize(p)
    assert np.isclose(np.max(np.abs(q)), 1.0, atol=1e-15)
    assert np.allclose(normalize(q), q)
    assert fs_distance(normalize(c * np.asarray(p)), q) < 1e-7


# --- distance ---


def test_distance_examples():
    p = np.array([0.3 + 1j, 1])
    assert fs_distance(p, p) < 1e-15
    assert fs_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert fs_distance([1, 1], [1, 0]) == pytest.approx(1 / np.sqrt(2))


def test_distance_metric_axioms():
    rng = np.random.default_rng(3)
    P, Q, R = (random_points(2, 1000, rng) for _ in range(3))
    dpq, dqr, dpr = fs_distance(P, Q), fs_distance(Q, R), fs_distance(P, R)
    assert np.all((dpq >= 0) & (dpq <= 1))
    assert np.allclose(dpq, fs_distance(Q, P), atol=1e-15)
    assert np.all(dpr <= dpq + dqr + 1e-12)


# --- maps ---


def power(d, k):
    comps = [{tuple(d if j == i else 0 for j in range(k + 1)): 1} for i in range(k + 1)]
    return ProjectiveMap(comps, d, k, "rational_k1" if k == 1 else "product_k2")


CHEB = ProjectiveMap(({(2, 0): 1, (0, 2): -2}, {(0, 2): 1}), 2, 1)


def test_evaluate_examples():
    f = power(2, 1)
    assert same_point(evaluate(f, [1, 1]), [1, 1])
    assert np.allclose(evaluate(f, [2, 1]), [1, 0.25])
    assert np.allclose(evaluate(CHEB, [2, 1]), [1, 0.5])


def test_evaluate_common_zero():
    f = ProjectiveMap(({(1, 1): 1}, {(2, 0): 1}), 2, 1)
    with pytest.raises(IndeterminatePoint):
        evaluate(f, [0, 1])


def test_invalid_maps():
    with pytest.raises(InvalidMap):
        ProjectiveMap(({(2, 0): 1}, {(1, 0): 1}), 2, 1)
    with pytest.raises(InvalidMap):
        ProjectiveMap(({(2, 0): 1},), 2, 1)
    with pytest.raises(InvalidMap):
        ProjectiveMap(({(1, 0): 1}, {(0, 1): 1}), 1, 1)


@given(vec(3), complexes.filter(lambda c: abs(c) > 1e-2))
@settings(max_examples=50)
def test_evaluate_homogeneous(p, c):
    f = power(2, 2)
    if np.max(np.abs(f.lift(normalize(p)))) < 1e-6:
        return
    assert fs_distance(evaluate(f, c * np.asarray(p)), evaluate(f, p)) < 1e-9


def test_topological_degree(maps):
    assert maps["power2_k2"].topological_degree == 4
    assert maps["lattes4"].topological_degree == 4


# --- chart jacobians ---


def test_chart_jacobian_examples():
    assert np.allclose(chart_jacobian(power(2, 1), [1, 1], 1, 1).matrix, [[2]])
    J = chart_jacobian(power(2, 2), [1, 1, 1], 2, 2)
    assert np.allclose(J.matrix, np.diag([2, 2]))


def test_chain_rule_along_orbits(maps):
    rng = np.random.default_rng(5)
    for name in ("chebyshev2", "skew2", "product2"):
        f = maps[name]
        f2 = f.compose(f)
        X = random_points(f.k, 100, rng)
        Y = normalize(f.lift(X))
        Z = normalize(f.lift(Y))
        J1, s1, t1, _, _ = chart_jacobians(f, X)
        J2, s2, t2, _, _ = chart_jacobians(f, Y, source=t1)
        J12, _, _, _, _ = chart_jacobians(f2, X, source=s1, target=t2)
        prod = J2 @ J1
        assert np.all(np.abs(prod - J12) <= 1e-8 * np.abs(J12).max(axis=(1, 2))[:, None, None])


def test_chain_rule_length_five(maps):
    # the expanded iterate is the oracle, so avoid maps whose iterates have
    # Chebyshev-like cancelling coefficients
    f = maps["skew2"]
    f5 = f.iterate(5)
    rng = np.random.default_rng(6)
    X = random_points(2, 100, rng)
    prod = np.broadcast_to(np.eye(2), (100, 2, 2)).astype(complex)
    Y, src = X, None
    first = None
    smallest = np.full(100, np.inf)
    for _ in range(5):
        J, s, t, _, _ = chart_jacobians(f, Y, source=src)
        first = s if first is None else first
        smallest = np.minimum(smallest, np.linalg.svd(J, compute_uv=False)[:, -1])
        prod = J @ prod
        Y, src = normalize(f.lift(Y)), t
    J5, _, _, _, _ = chart_jacobians(f5, X, source=first, target=src)
    rel = np.abs(prod - J5).max(axis=(1, 2)) / np.abs(J5).max(axis=(1, 2))
    regular = smallest > 1e-8
    assert regular.sum() >= 50
    assert np.all(rel[regular] < 1e-8)


# --- Jacobian density ---


def test_jacobian_density_examples():
    f = power(2, 1)
    assert jacobian_density(f, [1, 1]) == pytest.approx(4.0)
    assert jacobian_density(f, [0, 1]) == 0.0


def test_jacobian_density_closed_form_k1():
    rng = np.random.default_rng(8)
    z = rng.normal(size=200) + 1j * rng.normal(size=200)
    got = jacobian_density(CHEB, np.stack([z, np.ones_like(z)], axis=1))
    fz = z ** 2 - 2
    want = np.abs(2 * z) ** 2 * (1 + np.abs(z) ** 2) ** 2 / (1 + np.abs(fz) ** 2) ** 2
    assert np.allclose(got, want, rtol=1e-9)


def test_mean_log_jacobian_circle():
    cloud = circle_cloud(10_000)
    vals = np.log(jacobian_density(power(2, 1), cloud.points))
    assert vals.mean() == pytest.approx(2 * np.log(2), abs=0.02)


def test_jacobian_density_vanishes_with_det(maps):
    f = maps["skew2"]
    rng = np.random.default_rng(9)
    X = random_points(2, 500, rng)
    # critical set of the skew product: z w t = 0; put a third of the points on it
    X[::3, 1] = 0
    J, _, _, _, _ = chart_jacobians(f, X)
    det = np.abs(np.linalg.det(J))
    dens = jacobian_density(f, X)
    assert np.array_equal(dens < 1e-20, det < 1e-10)


def test_critical_degree():
    assert critical_degree(power(2, 1)) == 2
    assert critical_degree(power(2, 2)) == 3
    assert critical_degree(power(3, 2)) == 6
