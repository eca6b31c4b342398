"""Homogeneous-coordinate arithmetic on CP^k.

Points are numpy arrays of shape ``(..., k+1)``; a single point is a 1-d
array.  Everything here is vectorized over leading axes because clouds of
10^5 points flow through the same code paths as single points.

The Fubini-Study form is normalized to total mass one, so the chordal
ball of radius ``s`` in CP^1 has area ``s**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import ChartDegenerate, IndeterminatePoint, InvalidMap, ZeroVector

Monomial = Tuple[int, ...]
Poly = Dict[Monomial, complex]

EQUALITY_TOL = 1e-10
UNDERFLOW = 1e-300
CHART_THRESHOLD = 0.5
FAMILIES = ("rational_k1", "skew_product_k2", "product_k2", "general")


def normalize(p):
    """Scale ``p`` so its largest coordinate has modulus one.

    >>> normalize([2, 0])
    array([1.+0.j, 0.+0.j])
    """
    p = np.asarray(p, dtype=complex)
    m = np.max(np.abs(p), axis=-1, keepdims=True)
    if np.any(m < UNDERFLOW):
        raise ZeroVector("homogeneous coordinates are all zero")
    # leave already-normalized points untouched so normalization is exactly idempotent
    m = np.where(np.abs(m - 1.0) <= 4 * np.finfo(float).eps, 1.0, m)
    return p / m


def fs_distance(p, q):
    """Chordal distance ``|p ^ q| / (|p| |q|)``, a number in ``[0, 1]``."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    n = p.shape[-1]
    wedge = np.zeros(np.broadcast_shapes(p.shape[:-1], q.shape[:-1]))
    for i in range(n):
        for j in range(i + 1, n):
            wedge = wedge + np.abs(p[..., i] * q[..., j] - p[..., j] * q[..., i]) ** 2
    pn = np.sum(np.abs(p) ** 2, axis=-1)
    qn = np.sum(np.abs(q) ** 2, axis=-1)
    return np.minimum(np.sqrt(wedge / (pn * qn)), 1.0)


def same_point(p, q, tol=EQUALITY_TOL):
    return fs_distance(p, q) < tol


def chart_index(p, preferred=None, threshold=CHART_THRESHOLD):
    """Chart used to affinize ``p``.

    The max-modulus coordinate, unless ``preferred`` still holds at least
    ``threshold`` times the max modulus (hysteresis keeps orbits in one
    chart when several coordinates are comparable).
    """
    a = np.abs(np.asarray(p))
    best = np.argmax(a, axis=-1)
    if preferred is None:
        return best
    preferred = np.broadcast_to(np.asarray(preferred), a.shape[:-1])
    mx = np.max(a, axis=-1)
    pa = np.take_along_axis(a, np.expand_dims(preferred, -1), axis=-1)[..., 0]
    return np.where(pa >= threshold * mx, preferred, best)


# ---------------------------------------------------------------------------
# polynomial plumbing


class _Compiled:
    """A system of homogeneous polynomials evaluated over a shared monomial basis."""

    def __init__(self, polys: Sequence[Poly], nvars: int):
        basis = sorted({m for poly in polys for m in poly})
        if not basis:
            basis = [(0,) * nvars]
        self.exps = np.array(basis, dtype=int).reshape(len(basis), nvars)
        self.coef = np.array(
            [[poly.get(m, 0) for m in basis] for poly in polys], dtype=complex
        )
        self.maxdeg = int(self.exps.max(initial=0))

    def monomials(self, X):
        X = np.asarray(X, dtype=complex)
        out = np.ones(X.shape[:-1] + (len(self.exps),), dtype=complex)
        for j in range(X.shape[-1]):
            powers = X[..., j, None] ** np.arange(self.maxdeg + 1)
            out = out * powers[..., self.exps[:, j]]
        return out

    def __call__(self, X):
        return self.monomials(X) @ self.coef.T


def poly_derivative(poly: Poly, j: int) -> Poly:
    out: Poly = {}
    for m, c in poly.items():
        if m[j]:
            mm = list(m)
            mm[j] -= 1
            out[tuple(mm)] = out.get(tuple(mm), 0) + m[j] * c
    return out


def poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            out[m] = out.get(m, 0) + ca * cb
    return {m: c for m, c in out.items() if c}


def poly_pow(a: Poly, e: int, nvars: int) -> Poly:
    out: Poly = {(0,) * nvars: 1}
    for _ in range(e):
        out = poly_mul(out, a)
    return out


def poly_compose(outer: Poly, inner: Sequence[Poly]) -> Poly:
    """Substitute ``x_j -> inner[j]`` into ``outer``."""
    nvars = len(next(iter(inner[0]))) if inner[0] else len(inner)
    cache: Dict[Tuple[int, int], Poly] = {}
    out: Poly = {}
    for m, c in outer.items():
        term: Poly = {(0,) * nvars: c}
        for j, e in enumerate(m):
            if e:
                if (j, e) not in cache:
                    cache[(j, e)] = poly_pow(inner[j], e, nvars)
                term = poly_mul(term, cache[(j, e)])
        for mm, cc in term.items():
            out[mm] = out.get(mm, 0) + cc
    return {m: c for m, c in out.items() if c}


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ProjectiveMap:
    """Endomorphism ``[P_0 : ... : P_k]`` of CP^k with homogeneous components.

    ``components[i]`` maps exponent tuples of length ``k+1`` to complex
    coefficients.  For the skew-product family the base map is
    ``[P_0 : P_k]`` acting on ``[z_0 : z_k]`` and ``z_1`` is the fiber
    coordinate; product maps are the special case where ``P_1`` depends
    on ``z_1, z_k`` only.
    """

    components: Tuple[Poly, ...]
    d: int
    k: int
    family: str = "rational_k1"
    name: str = ""
    exact: Tuple[dict, ...] = field(default=(), repr=False)

    def __post_init__(self):
        self.components = tuple(
            {tuple(int(e) for e in m): complex(c) for m, c in comp.items() if c}
            for comp in self.components
        )
        if self.k not in (1, 2):
            raise InvalidMap(f"dimension k={self.k} not supported (k in {{1, 2}})")
        if self.d < 2:
            raise InvalidMap("degree must be at least 2")
        if len(self.components) != self.k + 1:
            raise InvalidMap(f"expected {self.k + 1} components, got {len(self.components)}")
        if self.family not in FAMILIES:
            raise InvalidMap(f"unknown family {self.family!r}")
        for i, comp in enumerate(self.components):
            if not comp:
                raise InvalidMap(f"component {i} is identically zero")
            for m in comp:
                if len(m) != self.k + 1 or sum(m) != self.d or min(m) < 0:
                    raise InvalidMap(f"component {i}: monomial {m} is not of degree {self.d}")

    @property
    def topological_degree(self):
        return self.d ** self.k

    @cached_property
    def _system(self):
        return _Compiled(self.components, self.k + 1)

    @cached_property
    def _dsystem(self):
        polys = [poly_derivative(c, j) for c in self.components for j in range(self.k + 1)]
        return _Compiled(polys, self.k + 1)

    def lift(self, X):
        """Evaluate the homogeneous polynomials without projectivizing."""
        return self._system(X)

    def dlift(self, X):
        """Homogeneous Jacobian ``dF_i/dz_j``, shape ``(..., k+1, k+1)``."""
        X = np.asarray(X, dtype=complex)
        flat = self._dsystem(X)
        return flat.reshape(X.shape[:-1] + (self.k + 1, self.k + 1))

    def depends_only_on(self, i, variables):
        return all(all(m[j] == 0 for j in range(self.k + 1) if j not in variables)
                   for m in self.components[i])

    def compose(self, other: "ProjectiveMap") -> "ProjectiveMap":
        """``self o other`` as a map of degree ``self.d * other.d``."""
        comps = tuple(poly_compose(c, other.components) for c in self.components)
        return ProjectiveMap(comps, self.d * other.d, self.k, "general",
                             f"{self.name}o{other.name}")

    def iterate(self, n):
        g = self
        for _ in range(n - 1):
            g = self.compose(g)
        return g


def evaluate(f: ProjectiveMap, p, tol=1e-13):
    """Image of ``p`` (max-modulus normalized) under ``f``."""
    p = normalize(p)
    F = f.lift(p)
    if np.any(np.max(np.abs(F), axis=-1) < tol):
        raise IndeterminatePoint("all components vanish; the map has a common zero here")
    return normalize(F)


@dataclass
class ChartJacobian:
    matrix: np.ndarray
    source_chart: object
    target_chart: object


def _affine(X, chart):
    """Affine coordinates of ``X`` in ``chart``: drop that coordinate after dividing by it."""
    X = np.asarray(X, dtype=complex)
    c = np.expand_dims(np.asarray(chart), -1)
    lifted = X / np.take_along_axis(X, c, axis=-1)
    n = X.shape[-1]
    keep = np.arange(n - 1)[None] + (np.arange(n - 1)[None] >= c.reshape(-1, 1))
    keep = keep.reshape(X.shape[:-1] + (n - 1,))
    return lifted, np.take_along_axis(lifted, keep, axis=-1), keep


def chart_jacobians(f: ProjectiveMap, X, source=None, target=None,
                    threshold=CHART_THRESHOLD):
    """Vectorized chart Jacobians.

    Returns ``(J, source, target, u, g)`` where ``J`` has shape ``(N, k, k)``,
    ``u`` are the affine source coordinates and ``g`` the affine image
    coordinates.  Charts default to max-modulus selection.
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    X = normalize(X)
    src = chart_index(X) if source is None else np.broadcast_to(source, X.shape[:-1])
    lifted, u, keep_s = _affine(X, src)
    F = f.lift(lifted)
    DF = f.dlift(lifted)
    tgt = chart_index(F, target, threshold) if target is not None else chart_index(F)
    tgt = np.broadcast_to(tgt, X.shape[:-1])
    Ft = np.take_along_axis(F, tgt[:, None], axis=-1)[:, 0]
    if np.any(np.abs(Ft) < threshold * np.max(np.abs(F), axis=-1) * (1 - 1e-12)):
        raise ChartDegenerate("image chart coordinate too small in every candidate chart")
    DFt = np.take_along_axis(DF, tgt[:, None, None], axis=1)[:, 0, :]
    full = (DF * Ft[:, None, None] - F[:, :, None] * DFt[:, None, :]) / Ft[:, None, None] ** 2
    _, g, keep_t = _affine(F, tgt)
    rows = np.take_along_axis(full, keep_t[:, :, None], axis=1)
    J = np.take_along_axis(rows, keep_s[:, None, :], axis=2)
    return J, src, tgt, u, g


def chart_jacobian(f: ProjectiveMap, p, source_chart=None, target_chart=None,
                   threshold=CHART_THRESHOLD) -> ChartJacobian:
    """Derivative of ``f`` at ``p`` between affine charts.

    For ``f = z^2`` on CP^1 at ``z = 1`` this is the 1x1 matrix ``[2]``.
    """
    J, s, t, _, _ = chart_jacobians(f, np.asarray(p)[None], source_chart, target_chart, threshold)
    return ChartJacobian(J[0], int(s[0]), int(t[0]))


def fs_half(u, inverse=False):
    """Hermitian square root of the Fubini-Study metric matrix at affine ``u``.

    The metric is ``H = (I - u u*/s) / s`` with ``s = 1 + |u|^2``.
    """
    u = np.asarray(u, dtype=complex)
    s = 1.0 + np.sum(np.abs(u) ** 2, axis=-1)
    rs = np.sqrt(s)
    eye = np.eye(u.shape[-1])
    outer = u[..., :, None] * u[..., None, :].conj()
    if inverse:
        return rs[..., None, None] * (eye + outer / (rs + 1.0)[..., None, None])
    return (eye - outer / (rs * (rs + 1.0))[..., None, None]) / rs[..., None, None]


def fs_jacobians(f: ProjectiveMap, X, source=None, target=None, threshold=CHART_THRESHOLD):
    """Chart Jacobians expressed in Fubini-Study orthonormal frames.

    Norms and singular values of the result do not depend on the charts, so
    products along an orbit measure intrinsic expansion.
    """
    J, src, tgt, u, g = chart_jacobians(f, X, source, target, threshold)
    return fs_half(g) @ J @ fs_half(u, inverse=True), src, tgt


def jacobian_density(f: ProjectiveMap, p):
    """Density of ``f^* omega^k`` against ``omega^k`` at ``p`` (zero on the critical set)."""
    p = np.asarray(p, dtype=complex)
    single = p.ndim == 1
    J, _, _, u, g = chart_jacobians(f, p)
    su = 1.0 + np.sum(np.abs(u) ** 2, axis=-1)
    sg = 1.0 + np.sum(np.abs(g) ** 2, axis=-1)
    out = np.abs(np.linalg.det(J)) ** 2 * (su / sg) ** (f.k + 1)
    return float(out[0]) if single else out


def critical_degree(f: ProjectiveMap) -> int:
    return (f.d - 1) * (f.k + 1)


def random_points(k, n, rng):
    """Points with i.i.d. complex Gaussian lifts (unitarily invariant, i.e. FS-uniform)."""
    z = rng.standard_normal((n, k + 1)) + 1j * rng.standard_normal((n, k + 1))
    return normalize(z)


def has_common_zero(f: ProjectiveMap, rng, n=2000, tol=1e-8):
    """Probabilistic no-common-zero witness.

    Samples random points plus every coordinate axis and a grid of
    roots-of-unity combinations; a point where all components are tiny
    relative to ``|z|^d`` flags a (near) common zero.
    """
    pts = [random_points(f.k, n, rng)]
    roots = np.exp(2j * np.pi * np.arange(4) / 4)
    grid = np.array([v for v in product([0, *roots], repeat=f.k + 1) if any(v)])
    pts.append(normalize(grid))
    X = np.vstack(pts)
    F = f.lift(X)
    scale = np.max(np.abs(X), axis=-1) ** f.d
    return bool(np.any(np.max(np.abs(F), axis=-1) < tol * scale))
