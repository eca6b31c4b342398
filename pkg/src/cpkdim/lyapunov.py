"""Lyapunov spectra of equilibrium measures.

Forward orbits on a repelling Julia set lose a binary digit per step, so an
orbit of length ``n`` is built backwards instead: starting from a cloud
point ``x_0`` we draw random inverse branches ``x_1, ..., x_n`` with
``f(x_{j+1}) = x_j``.  Read in reverse this is an exact forward orbit of
``x_n``, and ``x_n`` is again distributed by the (pullback-invariant)
equilibrium measure.  The derivative of ``f^n`` at ``x_n`` is
``J(x_1) ... J(x_n)``; its transpose grows by left multiplication as the
walk deepens, which is what the QR recursion needs.  Each factor is taken in
Fubini-Study orthonormal frames so chart changes cancel exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CriticalOrbit, NonIntegrable
from .projective import CHART_THRESHOLD, chart_index, fs_jacobians, jacobian_density, normalize
from .sampler import SEP_TOL, EmpiricalMeasure, _random_preimage, _Solver

TAU_RES = 0.02
CRITICAL_TOL = 1e-12
ROUNDOFF_FLOOR = 1e-9


@dataclass
class LyapunovSpectrum:
    lambdas: np.ndarray
    stderr: np.ndarray
    n_steps: int
    n_orbits: int
    n_dropped: int = 0
    per_orbit: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        self.stderr = np.atleast_1d(np.asarray(self.stderr, dtype=float))
        if np.any(np.diff(self.lambdas) > 0):
            raise ValueError("exponents must be sorted in descending order")
        if np.any(self.stderr < 0):
            raise ValueError("standard errors must be nonnegative")

    @property
    def k(self):
        return len(self.lambdas)

    def clusters(self, tau=TAU_RES):
        """Groups of exponent indices lying within ``tau`` of their neighbour."""
        groups = [[0]]
        for i in range(1, self.k):
            if self.lambdas[groups[-1][-1]] - self.lambdas[i] <= tau:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups

    def multiplicity_of_smallest(self, tau=TAU_RES):
        return len(self.clusters(tau)[-1])


def lyapunov_spectrum(f, cloud: EmpiricalMeasure, n_steps=1000, n_orbits=64, seed=0,
                      chart_threshold=CHART_THRESHOLD, sep_tol=SEP_TOL) -> LyapunovSpectrum:
    """QR estimate of the exponents along ``n_orbits`` orbit segments of length ``n_steps``."""
    if n_steps < 100:
        raise ValueError("n_steps must be at least 100")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    idx = rng.choice(len(cloud), size=min(n_orbits, len(cloud)), replace=False,
                     p=cloud.weights)
    X = normalize(cloud.points[idx])
    n = len(X)
    k = f.k
    solver = _Solver(f)
    chart = chart_index(X)
    Q = np.broadcast_to(np.eye(k, dtype=complex), (n, k, k)).copy()
    sums = np.zeros((n, k))
    dropped = np.zeros(n, dtype=bool)
    for _ in range(n_steps):
        # near-critical fibers are caught by the determinant test below
        new, _ = _random_preimage(solver, X, rng, sep_tol)
        new_chart = chart_index(new, chart, chart_threshold)
        J, _, _ = fs_jacobians(f, new, source=new_chart, target=chart)
        det = np.abs(np.linalg.det(J))
        dropped |= ~(det > CRITICAL_TOL)
        A = np.swapaxes(J, 1, 2)
        if k == 1:
            r = np.abs(A[:, 0, 0])
            sums[:, 0] += np.log(np.where(r > 0, r, 1.0))
        else:
            Q, R = np.linalg.qr(A @ Q)
            diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
            sums += np.log(np.where(diag > 0, diag, 1.0))
        X, chart = new, new_chart
    keep = ~dropped
    if not np.any(keep):
        raise CriticalOrbit("every orbit passed through the critical set")
    per_orbit = -np.sort(-sums[keep] / n_steps, axis=1)
    m = keep.sum()
    lam = per_orbit.mean(axis=0)
    se = per_orbit.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(k)
    return LyapunovSpectrum(-np.sort(-lam), se, n_steps, int(m), int(dropped.sum()), per_orbit)


def mean_log_jacobian(f, cloud: EmpiricalMeasure, chunk=20000):
    """Weighted mean and standard error of ``log Jac f`` over the cloud."""
    vals = np.concatenate([
        jacobian_density(f, cloud.points[i:i + chunk]) for i in range(0, len(cloud), chunk)
    ])
    tiny = vals < 1e-300
    if tiny.mean() > 0.01:
        raise NonIntegrable(f"{tiny.mean():.1%} of cloud points sit on the critical set")
    w = cloud.weights[~tiny]
    w = w / w.sum()
    logs = np.log(vals[~tiny])
    mean = float(np.sum(w * logs))
    n_eff = 1.0 / np.sum(w * w)
    var = float(np.sum(w * (logs - mean) ** 2))
    se = np.sqrt(var / max(n_eff - 1, 1))
    return mean, float(se)


def jacobian_identity_residual(f, cloud, spectrum: LyapunovSpectrum):
    """``|mean log Jac - 2 sum(lambda)|`` over the cloud."""
    mean, _ = mean_log_jacobian(f, cloud)
    return abs(mean - 2.0 * float(np.sum(spectrum.lambdas)))


def identity_sigma(f, cloud, spectrum: LyapunovSpectrum):
    """Combined standard error of the two sides of the exponent-Jacobian identity.

    Floored at ``ROUNDOFF_FLOOR``: for maps with constant ``log Jac`` on the
    support both sides are exact up to rounding.
    """
    _, se = mean_log_jacobian(f, cloud)
    sig = np.sqrt(se ** 2 + 4.0 * float(np.sum(spectrum.stderr)) ** 2)
    return max(float(sig), ROUNDOFF_FLOOR)


def briend_duval_check(spectrum: LyapunovSpectrum, d):
    """``(ok, margin)``: is the smallest exponent above ``log sqrt(d)`` within 3 sigma?"""
    floor = 0.5 * np.log(d)
    lam_k = float(spectrum.lambdas[-1])
    margin = lam_k - floor
    return bool(lam_k >= floor - 3.0 * float(spectrum.stderr[-1])), margin


def write_spectrum_csv(path, rows):
    """Rows are dicts with keys ``map, spectrum, residual, sigma, bd_margin``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map", "i", "lambda_i", "stderr_i", "n_steps", "n_orbits",
                    "identity_residual", "identity_sigma", "bd_margin"])
        for row in rows:
            s = row["spectrum"]
            for i, (lam, se) in enumerate(zip(s.lambdas, s.stderr), 1):
                w.writerow([row["map"], i, f"{lam:.12g}", f"{se:.12g}", s.n_steps, s.n_orbits,
                            f"{row['residual']:.12g}", f"{row['sigma']:.12g}",
                            f"{row['bd_margin']:.12g}"])
