import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpkdim.catalog import load_discs
from cpkdim.errors import NotBounded, QuadratureUnstable
from cpkdim.projective import random_points
from cpkdim.volume import (PolydiscMap, QuadratureGrid, green_potential, growth_check,
                           polydisc_volume, pullback_identity_residual, push_curve,
                           write_growth_csv)

LOG2 = math.log(2)


def chart_disc(radius, center=0.0, k=1):
    """``t -> [center + t : 1]`` (or ``[center + t : c : 1]`` on CP^2)."""
    if k == 1:
        return PolydiscMap([[center, 1], [1, 0]], radius)
    return PolydiscMap([[center, 0.5, 1], [1, 0, 0]], radius)


def fs_disc_area(R):
    """Mass-one Fubini-Study area of ``{|z| < R}`` in an affine chart of CP^1."""
    return R * R / (1 + R * R)


# --- quadrature grid ---


def test_grid_total_weight():
    for n, r in ((256, 1.0), (64, 2.0), (7, 0.3)):
        g = QuadratureGrid(n, r)
        assert np.all(g.weights > 0)
        assert g.weights.sum() == pytest.approx(math.pi * r * r, abs=1e-10)


# --- polydisc volume ---


def test_volume_chordal_disc(maps):
    # chordal radius c around [0:1] is |z| < c / sqrt(1 - c^2), of area c^2
    c = 0.1
    eta = chart_disc(c / math.sqrt(1 - c * c))
    assert polydisc_volume(maps["power2_k1"], 0, eta) == pytest.approx(c * c, rel=1e-4)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_volume_counts_multiplicity(maps, m):
    # z^(2^m) covers {|w| < 0.9^(2^m)} exactly 2^m times
    eta = chart_disc(0.9)
    want = 2 ** m * fs_disc_area(0.9 ** (2 ** m))
    assert polydisc_volume(maps["power2_k1"], m, eta) == pytest.approx(want, rel=1e-3)


def test_volume_composition_consistency(maps):
    f = maps["power2_k1"]
    eta = PolydiscMap([[0.5, 1], [0.25, 0]], 1.0)
    composed = PolydiscMap([[0.25, 1], [0.25, 0], [0.0625, 0]], 1.0)
    assert polydisc_volume(f, 1, eta) == pytest.approx(polydisc_volume(f, 0, composed), rel=1e-10)


def test_volume_constant_disc(maps):
    eta = PolydiscMap([[0.3, 1]], 1.0)
    for m in (0, 3):
        assert polydisc_volume(maps["power2_k1"], m, eta) == 0.0


def test_boundary_route_matches_area(maps):
    for name, eta in (("chebyshev2", chart_disc(0.9)), ("skew2", chart_disc(0.8, 0.2, k=2))):
        f = maps[name]
        a = polydisc_volume(f, 2, eta, method="area")
        b = polydisc_volume(f, 2, eta, method="boundary")
        assert a == pytest.approx(b, rel=1e-3)


def test_push_curve_matches_composed_lift(maps):
    # renormalized lift and derivative are proportional to the composed polynomial
    f = maps["power2_k2"]
    eta = PolydiscMap([[0.9, 0.95, 1], [0.1, 0, 0]], 2.0)
    t = np.array([0.3 + 0.2j, -0.5j, 0.9])
    X, V, log_s = push_curve(f, 3, eta, t)
    G = np.stack([(0.9 + 0.1 * t) ** 8, np.full_like(t, 0.95 ** 8), np.ones_like(t)], -1)
    dG = np.stack([0.8 * (0.9 + 0.1 * t) ** 7, 0 * t, 0 * t], -1)
    s = np.exp(log_s)[:, None]
    assert np.allclose(X * s, G, rtol=1e-12)
    assert np.allclose(V * s, dG, rtol=1e-12)


def test_quadrature_unstable(maps):
    with pytest.raises(QuadratureUnstable):
        polydisc_volume(maps["chebyshev2"], 6, chart_disc(2.0), QuadratureGrid(16, 2.0))


@pytest.mark.parametrize("name", ["power2_k1", "chebyshev2", "skew2", "lattes4"])
def test_volume_monotone_in_radius(maps, name):
    f = maps[name]
    eta = load_discs(k=f.k)[0]
    vols = [polydisc_volume(f, 2, eta.restrict(r), method="auto") for r in (0.25, 0.5, 1.0)]
    assert vols[0] <= vols[1] <= vols[2]


# --- growth lemma ---


def test_growth_power_map_segment(maps):
    f = maps["power2_k1"]
    eta = next(e for e in load_discs(k=1) if e.name == "segment_k1")
    for m in range(1, 7):
        assert growth_check(f, m, eta).ratio <= 1.05


def test_growth_power_map_chart_line(maps):
    f = maps["power2_k2"]
    eta = next(e for e in load_discs(k=2) if e.name == "chart_line_k2")
    for m in range(1, 6):
        assert growth_check(f, m, eta).ratio <= 1.05


def test_growth_closed_form_ratio(maps):
    eta = PolydiscMap([[0, 1], [0.9, 0]], 2.0)
    for m in range(7):
        r = growth_check(maps["power2_k1"], m, eta)
        want = fs_disc_area(0.9 ** (2 ** m))
        # the density grows like |t|^(2^(m+1)); the 256-node rule is 1% low at m = 6
        assert r.ratio == pytest.approx(want, rel=2e-2)
        assert r.bound == 2 ** m
        exact = growth_check(maps["power2_k1"], m, eta, method="boundary")
        assert exact.ratio == pytest.approx(want, rel=1e-8)


def test_growth_base_case(maps):
    for eta in load_discs():
        f = maps["power2_k1"] if eta.k == 1 else maps["power2_k2"]
        r = growth_check(f, 0, eta)
        assert r.bound == 1 and r.ratio <= 1.05


def test_growth_needs_certificate(maps):
    # passes through [1:0] and [0:1] with comparable weight nowhere in one chart
    eta = PolydiscMap([[0, 1], [1, 0]], 2.0)
    eta.bounded_certificate = None
    with pytest.raises(NotBounded):
        growth_check(maps["power2_k1"], 1, eta)


def test_certificate_detection():
    assert PolydiscMap([[0.5, 1], [0.1, 0]], 2.0).bounded_certificate == 1
    assert PolydiscMap([[0, 1], [1, 0]], 2.0).bounded_certificate is None


def test_growth_csv(tmp_path, maps):
    eta = load_discs(k=1)[0]
    rows = [growth_check(maps["power2_k1"], m, eta) for m in range(2)]
    path = tmp_path / "g.csv"
    write_growth_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "map,l,m,volume,bound,ratio,pass,disc"
    assert lines[1].startswith("power2_k1,1,0,") and len(lines) == 3


# --- Green potential ---


def test_green_examples(maps):
    f = maps["power2_k1"]
    assert green_potential(f, [1, 1]) == 0.0
    assert green_potential(f, [2, 1]) == pytest.approx(LOG2, abs=1e-12)


def test_green_power_map_closed_form(maps):
    rng = np.random.default_rng(1)
    for name in ("power2_k1", "power2_k2", "power3_k2"):
        f = maps[name]
        z = rng.normal(size=(100, f.k + 1)) + 1j * rng.normal(size=(100, f.k + 1))
        want = np.log(np.max(np.abs(z), axis=1))
        assert np.allclose(green_potential(f, z), want, atol=1e-8, rtol=0)


@pytest.mark.parametrize("name", ["power2_k1", "chebyshev2", "lattes4", "power2_k2", "skew2",
                                  "product2"])
def test_green_functional_equation(maps, name):
    f = maps[name]
    rng = np.random.default_rng(2)
    z = random_points(f.k, 100, rng) * rng.uniform(0.5, 2, (100, 1))
    assert np.allclose(green_potential(f, f.lift(z)), f.d * green_potential(f, z), atol=1e-8,
                       rtol=0)


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                          allow_infinity=False))
@settings(max_examples=100, deadline=None)
def test_green_log_homogeneous(maps, c):
    f = maps["skew2"]
    z = random_points(2, 20, np.random.default_rng(3))
    assert np.allclose(green_potential(f, c * z), green_potential(f, z) + math.log(abs(c)),
                       atol=1e-8, rtol=0)


@pytest.mark.parametrize("name", ["chebyshev2", "lattes4", "skew2", "product2"])
def test_green_increments_contract(maps, name):
    f = maps[name]
    z = random_points(f.k, 200, np.random.default_rng(4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        G = [green_potential(f, z, n_iter=n, tol=0.0) for n in range(1, 12)]
    inc = np.array([np.max(np.abs(b - a)) for a, b in zip(G, G[1:])])
    # single steps fluctuate around 1/d; the geometric rate is the fitted decay
    n = np.nonzero(inc > 1e-10)[0]
    rate = math.exp(np.polyfit(n, np.log(inc[n]), 1)[0])
    assert len(n) >= 5 and rate <= 1 / f.d + 0.1


def test_green_zero_vector(maps):
    with pytest.raises(ValueError):
        green_potential(maps["power2_k1"], [0, 0])


# --- pullback identity ---


def test_pullback_identity_power_map(maps):
    f = maps["power2_k1"]
    eta = chart_disc(0.9, 0.3)
    assert pullback_identity_residual(f, 1, eta) < 0.02 * f.d
    assert pullback_identity_residual(f, 0, eta) < 0.02


@pytest.mark.parametrize("name", ["chebyshev2", "power2_k2", "skew2"])
def test_pullback_identity_other_maps(maps, name):
    f = maps[name]
    eta = chart_disc(0.8, 0.2, k=f.k)
    # T_N with N = m + 6 leaves an error near 0.04 on this disc; it halves per extra level
    for m in (0, 1, 2):
        assert pullback_identity_residual(f, m, eta, extra=10) < 0.02 * f.d ** m


def test_pullback_identity_constant(maps):
    assert pullback_identity_residual(maps["power2_k1"], 2, PolydiscMap([[0.3, 1]], 1.0)) == 0.0
