"""Sampling the equilibrium measure by random inverse iteration.

A uniform random walk down the preimage tree of a point ``a`` lands, after
``n`` levels, on a sample of ``d^{-kn} (f^n)^* delta_a``, which converges to
the equilibrium measure for non-exceptional ``a``.  Inverse branches contract,
so these walks are numerically stable where forward orbits are not.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateFiber, ExceptionalSeed, UnsupportedFamily
from .projective import ProjectiveMap, evaluate, fs_distance, normalize, random_points
from .roots import binary_form_roots, min_separation

BURN_IN = 20
SEP_TOL = 1e-4
RESIDUAL_TOL = 1e-9
BLOCK = 4096


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = normalize(np.atleast_2d(self.points))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.points),):
            raise ValueError("one weight per point required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, points, **provenance):
        n = len(points)
        return cls(points, np.full(n, 1.0 / n), dict(provenance))

    @property
    def k(self):
        return self.points.shape[1] - 1

    def __len__(self):
        return len(self.points)

    def pushforward(self, f):
        return EmpiricalMeasure(normalize(f.lift(self.points)), self.weights.copy(),
                                {**self.provenance, "pushforward": True})

    def to_csv(self, path):
        k = self.k
        header = [h for i in range(k + 1) for h in (f"re_{i}", f"im_{i}")] + ["weight"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p, wt in zip(self.points, self.weights):
                row = []
                for c in p:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row + [repr(float(wt))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        pts = data[:, 0:-1:2] + 1j * data[:, 1:-1:2]
        weights = data[:, -1]
        return cls(pts, weights / weights.sum(), {"source": str(path)})


@dataclass
class PreimageSet:
    points: np.ndarray
    multiplicities: np.ndarray
    residuals: np.ndarray


# ---------------------------------------------------------------------------
# fiber solving


def _binary_coeffs(poly, d, i, j, nvars):
    """Coefficients of ``poly`` restricted to variables ``z_i, z_j`` as a binary form."""
    out = np.zeros(d + 1, dtype=complex)
    for e in range(d + 1):
        m = [0] * nvars
        m[i] += d - e
        m[j] += e
        out[e] = poly.get(tuple(m), 0)
    return out


class _Solver:
    """Preimage solver for the supported families, vectorized over targets."""

    def __init__(self, f: ProjectiveMap):
        self.f = f
        d, k = f.d, f.k
        if k == 1:
            self.base = (_binary_coeffs(f.components[0], d, 0, 1, 2),
                         _binary_coeffs(f.components[1], d, 0, 1, 2))
            return
        if f.family not in ("skew_product_k2", "product_k2"):
            raise UnsupportedFamily(f"cannot solve preimages for family {f.family!r}")
        self.base = (_binary_coeffs(f.components[0], d, 0, 2, 3),
                     _binary_coeffs(f.components[2], d, 0, 2, 3))
        # fiber polynomial P_1 grouped by z_1-degree: list of (z1 exponent, a, c, coef)
        self.fiber_terms = [(m[1], m[0], m[2], c) for m, c in f.components[1].items()]

    def base_roots(self, Y):
        c0, c1 = self.base
        if self.f.k == 1:
            coeffs = c0[None] * Y[:, 1:2] - c1[None] * Y[:, 0:1]
        else:
            coeffs = c0[None] * Y[:, 2:3] - c1[None] * Y[:, 0:1]
        return binary_form_roots(coeffs)

    def fiber_roots(self, Y, b):
        """Roots ``z_1`` over base points ``b = (b0, b2)`` (shape ``(N, 2)``)."""
        f, d = self.f, self.f.d
        v0 = _eval_binary(self.base[0], b)
        v2 = _eval_binary(self.base[1], b)
        use0 = np.abs(Y[:, 0]) >= np.abs(Y[:, 2])
        lam = np.where(use0, v0 / np.where(use0, Y[:, 0], 1), v2 / np.where(use0, 1, Y[:, 2]))
        coeffs = np.zeros((len(Y), d + 1), dtype=complex)
        for e1, a, c, coef in self.fiber_terms:
            coeffs[:, d - e1] += coef * b[:, 0] ** a * b[:, 1] ** c
        coeffs[:, d] -= lam * Y[:, 1]
        r = binary_form_roots(coeffs)
        return r

    def assemble(self, b, r):
        """Points ``[b0 : z1 : b2]`` from base lifts and fiber roots ``[z1 : 1]``."""
        z1 = r[..., 0] / r[..., 1]
        pts = np.stack([np.broadcast_to(b[:, None, 0], z1.shape), z1,
                        np.broadcast_to(b[:, None, 1], z1.shape)], axis=-1)
        return normalize(pts)


def _eval_binary(c, b):
    d = len(c) - 1
    e = np.arange(d + 1)
    return np.sum(c[None] * b[:, 0:1] ** (d - e) * b[:, 1:2] ** e, axis=1)


def preimages(f: ProjectiveMap, y, sep_tol=SEP_TOL, allow_degenerate=False) -> PreimageSet:
    """All ``d^k`` preimages of ``y``, each with multiplicity and residual.

    Raises :class:`DegenerateFiber` when two preimages are closer than
    ``sep_tol`` (``y`` is numerically a critical value), unless
    ``allow_degenerate`` is set, in which case coalesced roots are merged and
    counted with multiplicity.
    """
    solver = _Solver(f)
    Y = normalize(np.asarray(y, dtype=complex))[None]
    base = solver.base_roots(Y)[0]
    seps = [min_separation(base[None])[0]]
    if f.k == 1:
        pts = base
    else:
        groups = []
        for bi in base:
            r = solver.fiber_roots(Y, bi[None])
            seps.append(min_separation(r)[0])
            groups.append(solver.assemble(bi[None], r)[0])
        pts = np.concatenate(groups)
    pts = normalize(pts)
    degenerate = min(seps) < sep_tol
    if degenerate and not allow_degenerate:
        raise DegenerateFiber(f"preimages coalesce (separation {min(seps):.3g} < {sep_tol})")
    mult = np.ones(len(pts), dtype=int)
    if degenerate:
        pts, mult = _cluster(pts, sep_tol)
    residuals = fs_distance(normalize(f.lift(pts)), Y[0])
    return PreimageSet(pts, mult, residuals)


def _cluster(pts, tol):
    reps, mult = [], []
    for p in pts:
        for i, q in enumerate(reps):
            if fs_distance(p, q) < tol:
                mult[i] += 1
                break
        else:
            reps.append(p)
            mult.append(1)
    return np.array(reps), np.array(mult)


def _random_preimage(solver, Y, rng, sep_tol=SEP_TOL):
    """One uniformly chosen preimage per row of ``Y`` plus a degeneracy mask."""
    f = solver.f
    n = len(Y)
    base = solver.base_roots(Y)
    bad = min_separation(base) < sep_tol
    pick = rng.integers(f.d, size=n)
    b = base[np.arange(n), pick]
    if f.k == 1:
        return b, bad
    r = solver.fiber_roots(Y, b)
    bad |= min_separation(r) < sep_tol
    pick = rng.integers(f.d, size=n)
    X = solver.assemble(b, r[np.arange(n), pick][:, None])[:, 0]
    return X, bad


def _walk_block(solver, a, depth, n, rng, sep_tol, max_retries=20):
    X = np.repeat(a[None], n, axis=0)
    parent = None
    aborts = 0
    for _ in range(depth):
        new, bad = _random_preimage(solver, X, rng, sep_tol)
        tries = 0
        while np.any(bad):
            if parent is None:
                raise ExceptionalSeed("the seed point is (numerically) a critical value")
            tries += 1
            if tries > max_retries:
                raise ExceptionalSeed("walks repeatedly stuck at critical values")
            idx = np.nonzero(bad)[0]
            aborts += len(idx)
            X[idx], _ = _random_preimage(solver, parent[idx], rng, sep_tol)
            new[idx], bad_idx = _random_preimage(solver, X[idx], rng, sep_tol)
            bad = np.zeros(n, dtype=bool)
            bad[idx] = bad_idx
        parent, X = X, new
    return X, aborts


def sample_equilibrium(f: ProjectiveMap, a=None, depth=30, count=10_000, seed=0,
                       burn_in=BURN_IN, sep_tol=SEP_TOL, threads=1,
                       block=BLOCK) -> EmpiricalMeasure:
    """Equal-weight cloud of ``count`` depth-``depth`` random preimages of ``a``.

    Walks are grouped in blocks of ``block``; block ``b`` draws from the
    stream ``SeedSequence(seed, spawn_key=(b,))`` so the cloud is
    bit-identical for any ``threads``.  When ``a`` is omitted a generic seed
    point is drawn (and redrawn if its own fiber is degenerate).
    """
    if depth < burn_in:
        raise ValueError(f"depth {depth} below burn-in {burn_in}")
    solver = _Solver(f)
    seed_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**31,)))
    if a is None:
        for _ in range(10):
            a = random_points(f.k, 1, seed_rng)[0]
            if not np.any(_random_preimage(solver, a[None], seed_rng, sep_tol)[1]):
                break
        else:
            raise ExceptionalSeed("could not find a regular seed point")
    a = normalize(np.asarray(a, dtype=complex))

    sizes = [block] * (count // block) + ([count % block] if count % block else [])

    def run(bi):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(bi,)))
        return _walk_block(solver, a, depth, sizes[bi], rng, sep_tol)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, range(len(sizes))))
    else:
        results = [run(bi) for bi in range(len(sizes))]
    points = np.concatenate([r[0] for r in results]) if results else np.empty((0, f.k + 1))
    aborts = sum(r[1] for r in results)
    if count and aborts > 0.01 * count:
        raise ExceptionalSeed(f"{aborts} of {count} walks aborted on degenerate fibers")
    return EmpiricalMeasure.uniform(points, seed_point=a, depth=depth, seed=seed,
                                    aborts=aborts)


def backward_orbits(f: ProjectiveMap, X, n, rng, sep_tol=SEP_TOL):
    """Extend each point of ``X`` by ``n`` random inverse branches.

    Returns an array of shape ``(n+1, N, k+1)`` with ``out[0] = X`` and
    ``f(out[j+1]) = out[j]``; read backwards, each column is a genuine
    forward orbit of length ``n`` ending at the corresponding point of ``X``.
    """
    solver = _Solver(f)
    X = normalize(np.atleast_2d(X))
    out = np.empty((n + 1,) + X.shape, dtype=complex)
    out[0] = X
    for j in range(n):
        Y = out[j]
        new, bad = _random_preimage(solver, Y, rng, sep_tol)
        for _ in range(20):
            if not np.any(bad):
                break
            idx = np.nonzero(bad)[0]
            if j == 0:
                # no parent to re-branch from; accept the near-critical fiber
                break
            out[j, idx], _ = _random_preimage(solver, out[j - 1, idx], rng, sep_tol)
            new[idx], b2 = _random_preimage(solver, out[j, idx], rng, sep_tol)
            bad = np.zeros(len(Y), dtype=bool)
            bad[idx] = b2
        out[j + 1] = new
    return out


def forward_orbit(f: ProjectiveMap, x, n):
    """``[x, f(x), ..., f^n(x)]`` as an array of shape ``(n+1, k+1)``."""
    return forward_orbits(f, np.asarray(x)[None], n)[:, 0]


def forward_orbits(f: ProjectiveMap, X, n):
    X = normalize(np.atleast_2d(X))
    out = np.empty((n + 1,) + X.shape, dtype=complex)
    out[0] = X
    for q in range(n):
        out[q + 1] = evaluate(f, out[q])
    return out
