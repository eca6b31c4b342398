"""Green potentials and Fubini-Study volumes of holomorphic discs.

A disc is a polynomial lift ``eta(t) = sum_j c_j t^j`` into ``C^{k+1}``.  Its
pullback of the (mass one) Fubini-Study form has density

    |G ^ G'|^2 / (pi |G|^4)

for any lift ``G`` of the curve, which is unchanged when ``G`` and ``G'`` are
multiplied by a common scalar.  That lets ``f^m o eta`` be propagated with
per-step renormalization and an exact chain-rule derivative.  A second route
integrates ``dd^c log|G|`` through Stokes on the boundary circle, which is
exact for oscillatory high-degree curves where area quadrature needs huge
grids.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergent, NotBounded, QuadratureUnstable
from .projective import CHART_THRESHOLD

RICHARDSON_TOL = 0.05
EPS_QUAD = 0.05
GREEN_TOL = 1e-10


@dataclass(eq=False)
class PolydiscMap:
    """Polynomial disc ``D(radius) -> CP^k`` with lift ``sum_j coeffs[j] t^j``."""

    coeffs: np.ndarray
    radius: float = 1.0
    name: str = ""
    bounded_certificate: int = field(default=None)
    l: int = 1

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.l != 1:
            raise ValueError("only curves (l = 1) are quadratured")
        if self.bounded_certificate is None:
            self.bounded_certificate = self._find_chart()

    @property
    def k(self):
        return self.coeffs.shape[1] - 1

    def lift(self, t):
        t = np.asarray(t, dtype=complex)
        out = np.zeros(t.shape + (self.k + 1,), dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * t[..., None] + c
        return out

    def dlift(self, t):
        t = np.asarray(t, dtype=complex)
        out = np.zeros(t.shape + (self.k + 1,), dtype=complex)
        for j in range(len(self.coeffs) - 1, 0, -1):
            out = out * t[..., None] + j * self.coeffs[j]
        return out

    def restrict(self, radius):
        """Same parametrization on a smaller disc; keeps the certificate."""
        return PolydiscMap(self.coeffs, radius, self.name, self.bounded_certificate)

    def is_constant(self):
        return len(self.coeffs) == 1 or not np.any(self.coeffs[1:])

    def _find_chart(self, n_r=32, n_theta=256):
        """Chart index ``j`` with ``|z_j| >= 0.5 max|z|`` on the whole sampled disc."""
        r = self.radius * np.linspace(0, 1, n_r)
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        Z = self.lift((r[:, None] * np.exp(1j * th[None, :])).ravel())
        mod = np.abs(Z)
        top = mod.max(axis=1)
        if np.any(top == 0):
            return None
        worst = (mod / top[:, None]).min(axis=0)
        j = int(np.argmax(worst))
        return j if worst[j] >= CHART_THRESHOLD else None

    def lift_vanishes_in_disc(self):
        """True if the lift has a zero in the closed disc (Stokes route invalid)."""
        if self.is_constant():
            return not np.any(self.coeffs[0])
        for i in range(self.k + 1):
            c = self.coeffs[:, i]
            if np.any(c[1:]):
                continue
            if c[0] != 0:
                return False
        # every coordinate is nonconstant or zero: test the roots of one of them
        i = int(np.argmax([np.count_nonzero(self.coeffs[:, i]) for i in range(self.k + 1)]))
        c = np.trim_zeros(self.coeffs[:, i], "b")
        roots = np.roots(c[::-1]) if len(c) > 1 else np.empty(0)
        roots = roots[np.abs(roots) <= self.radius * (1 + 1e-12)]
        if roots.size == 0:
            return False
        return bool(np.any(np.linalg.norm(self.lift(roots), axis=-1) < 1e-12))


@dataclass
class QuadratureGrid:
    """Tensor midpoint rule in polar coordinates on ``D(radius)``."""

    n: int = 256
    radius: float = 1.0
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.radius <= 0:
            raise ValueError("grid needs n >= 1 and a positive radius")
        dr = self.radius / self.n
        dth = 2 * np.pi / self.n
        rho = (np.arange(self.n) + 0.5) * dr
        th = (np.arange(self.n) + 0.5) * dth
        self.nodes = (rho[:, None] * np.exp(1j * th[None, :])).ravel()
        self.weights = np.repeat(rho * dr * dth, self.n)

    def coarsen(self):
        return QuadratureGrid(max(self.n // 2, 1), self.radius)


def push_curve(f, m, eta: PolydiscMap, t):
    """Renormalized lift and derivative of ``f^m o eta`` at parameters ``t``.

    Returns ``(X, V, log_scale)`` with ``X = G / s`` and ``V = G' / s`` for the
    holomorphic lift ``G = F^m o eta`` and ``log s`` accumulated exactly.
    """
    X = eta.lift(t)
    V = eta.dlift(t)
    s = np.max(np.abs(X), axis=-1)
    s = np.where(s > 0, s, 1.0)
    X, V = X / s[..., None], V / s[..., None]
    log_s = np.log(s)
    for _ in range(m):
        DF = f.dlift(X)
        Y = f.lift(X)
        V = np.einsum("...ij,...j->...i", DF, V)
        sig = np.max(np.abs(Y), axis=-1)
        X, V = Y / sig[..., None], V / sig[..., None]
        log_s = f.d * log_s + np.log(sig)
    return X, V, log_s


def area_density(X, V):
    """Density of the pulled-back Fubini-Study form w.r.t. Lebesgue measure on ``t``."""
    nx = np.sum(np.abs(X) ** 2, axis=-1)
    nv = np.sum(np.abs(V) ** 2, axis=-1)
    ip = np.sum(V * X.conj(), axis=-1)
    num = np.clip(nx * nv - np.abs(ip) ** 2, 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / (np.pi * nx * nx)
    return np.where(nx > 0, out, 0.0)


def _area(f, m, eta, grid, chunk=1 << 16):
    total = 0.0
    for s in range(0, len(grid.nodes), chunk):
        X, V, _ = push_curve(f, m, eta, grid.nodes[s:s + chunk])
        total += float(np.sum(grid.weights[s:s + chunk] * area_density(X, V)))
    return total


def _boundary_flux(f, m, eta, radius, n_theta):
    """``int_D dd^c log|G|`` via Stokes, trapezoid rule with ``n_theta`` nodes."""
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    t = radius * np.exp(1j * th)
    X, V, _ = push_curve(f, m, eta, t)
    g = np.sum(V * X.conj(), axis=-1) / np.sum(np.abs(X) ** 2, axis=-1)
    return float(np.mean((t * g).real))


def _adaptive_periodic(fn, n0=1024, n_max=1 << 21, rtol=1e-9):
    prev = fn(n0)
    n = n0
    while n < n_max:
        n *= 2
        cur = fn(n)
        if abs(cur - prev) <= rtol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureUnstable(f"boundary rule did not settle with {n_max} nodes")


def polydisc_volume(f, m, eta: PolydiscMap, grid: QuadratureGrid = None, method="area"):
    """Fubini-Study volume of ``f^m o eta`` over ``D(grid.radius)``, with multiplicity.

    ``method="area"`` integrates the pullback density on ``grid`` and on the
    grid with half as many nodes per axis, raising :class:`QuadratureUnstable`
    if the two differ by more than 5%; the full-resolution value is returned.
    ``method="boundary"`` uses the Stokes route with an adaptive trapezoid
    rule (requires a lift without zeros in the disc).  ``method="auto"`` tries the area rule and falls back
    to the boundary route when it is unstable.
    """
    grid = QuadratureGrid(256, eta.radius) if grid is None else grid
    if eta.is_constant():
        return 0.0
    if method == "boundary":
        if eta.lift_vanishes_in_disc():
            raise ValueError("disc lift vanishes inside the disc; Stokes route invalid")
        return _adaptive_periodic(lambda n: _boundary_flux(f, m, eta, grid.radius, n))
    if method not in ("area", "auto"):
        raise ValueError(f"unknown method {method!r}")
    try:
        fine = _area(f, m, eta, grid)
        coarse = _area(f, m, eta, grid.coarsen())
        if abs(fine - coarse) > RICHARDSON_TOL * max(abs(fine), 1e-300):
            raise QuadratureUnstable(
                f"area rule at n={grid.n // 2} and n={grid.n} disagree: {coarse:.6g} vs {fine:.6g}")
        return fine
    except QuadratureUnstable:
        if method == "auto" and not eta.lift_vanishes_in_disc():
            return _adaptive_periodic(lambda n: _boundary_flux(f, m, eta, grid.radius, n))
        raise


@dataclass
class GrowthResult:
    map: str
    disc: str
    m: int
    volume: float
    bound: float
    ratio: float
    passed: bool
    l: int = 1


def growth_check(f, m, eta: PolydiscMap, grid: QuadratureGrid = None, eps=EPS_QUAD,
                 method="auto") -> GrowthResult:
    """Compare the volume of ``f^m o eta`` on the unit disc with ``d^{lm}``."""
    if eta.bounded_certificate is None:
        raise NotBounded(f"disc {eta.name or '?'} is not contained in a single chart")
    grid = QuadratureGrid(256, 1.0) if grid is None else QuadratureGrid(grid.n, 1.0)
    vol = polydisc_volume(f, m, eta.restrict(1.0), grid, method=method)
    bound = float(f.d) ** (eta.l * m)
    ratio = vol / bound
    return GrowthResult(f.name, eta.name, m, vol, bound, ratio, bool(ratio <= 1 + eps), eta.l)


def write_growth_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map", "l", "m", "volume", "bound", "ratio", "pass", "disc"])
        for r in results:
            w.writerow([r.map, r.l, r.m, f"{r.volume:.12g}", f"{r.bound:.12g}",
                        f"{r.ratio:.12g}", str(r.passed).lower(), r.disc])


# --- Green potential -------------------------------------------------------


def green_potential(f, z, n_iter=100, tol=GREEN_TOL, return_steps=False):
    """``lim d^{-n} log ||F^n(z)||`` (sup norm) at lifts ``z`` of shape ``(..., k+1)``.

    Each step renormalizes the lift, so ``G_n = G_{n-1} + d^{-n} log||F(x_{n-1})||``
    with unit-norm ``x``.  Raises :class:`NonConvergent` if the increments
    leave the envelope ``(2/d)^{n-1}`` times their initial scale.
    """
    z = np.asarray(z, dtype=complex)
    norm = np.max(np.abs(z), axis=-1)
    if np.any(norm == 0):
        raise ValueError("the zero vector has no Green potential")
    G = np.log(norm)
    x = z / norm[..., None]
    scale = None
    steps = 0
    for n in range(1, n_iter + 1):
        y = f.lift(x)
        ny = np.max(np.abs(y), axis=-1)
        diff = np.log(ny) / float(f.d) ** n
        G = G + diff
        x = y / ny[..., None]
        steps = n
        big = float(np.max(np.abs(diff)))
        if scale is None:
            scale = max(big * f.d, 1.0)
        if big > scale * (2.0 / f.d) ** (n - 1):
            raise NonConvergent(f"increment {big:.3g} at step {n} exceeds the (2/d)^n envelope")
        if big < tol:
            break
    else:
        warnings.warn(f"green_potential stopped at n_iter={n_iter} before reaching tol", RuntimeWarning)
    G = G if G.ndim else float(G)
    return (G, steps) if return_steps else G


def phi_potential(f, z, **kw):
    """``log|z| - G(z)`` (Euclidean norm), the continuous potential with ``T = omega - dd^c phi``."""
    z = np.asarray(z, dtype=complex)
    return np.log(np.linalg.norm(z, axis=-1)) - green_potential(f, z, **kw)


def _circle_mean(fn, radius, n):
    th = 2 * np.pi * np.arange(n) / n
    return float(np.mean(fn(radius * np.exp(1j * th))))


@dataclass
class PullbackTerms:
    lhs: float
    green_term: float
    boundary_term: float
    residual: float


def pullback_identity_terms(f, m, eta: PolydiscMap, grid: QuadratureGrid = None, extra=6,
                            h=1e-3, n_theta=None) -> PullbackTerms:
    """Terms of ``f^{m*} omega = d^m T + dd^c(phi o f^m)`` integrated over ``eta``.

    ``T`` is replaced by ``T_N = d^{-N} f^{N*} omega`` with ``N = m + extra``.
    The ``dd^c`` term is ``r M'(r)`` for the circle mean ``M`` of
    ``phi o f^m o eta``, with ``M'`` from a central difference of step ``h r``.
    """
    grid = QuadratureGrid(256, eta.radius) if grid is None else grid
    r = grid.radius
    if eta.is_constant():
        return PullbackTerms(0.0, 0.0, 0.0, 0.0)
    e = eta.restrict(r)
    lhs = polydisc_volume(f, m, e, grid, method="auto")
    N = m + extra
    vol_n = polydisc_volume(f, N, e, grid, method="boundary")
    green_term = float(f.d) ** m * vol_n / float(f.d) ** N

    def phi_fm(t):
        X, _, log_s = push_curve(f, m, e, t)
        # phi is scale invariant, so the renormalized lift suffices
        return phi_potential(f, X)

    if n_theta is None:
        n_theta = int(min(1 << 16, max(4096, 64 * f.d ** m)))
    dm = (_circle_mean(phi_fm, r * (1 + h), n_theta)
          - _circle_mean(phi_fm, r * (1 - h), n_theta)) / (2 * h * r)
    boundary = r * dm
    return PullbackTerms(lhs, green_term, boundary, abs(lhs - green_term - boundary))


def pullback_identity_residual(f, m, eta: PolydiscMap, grid: QuadratureGrid = None, **kw):
    return pullback_identity_terms(f, m, eta, grid, **kw).residual
