"""Pointwise and correlation dimension, Brin-Katok entropy, and the bound formulas.

All distances are chordal.  Ball masses are read off a radius ladder
``r_j = r_max * rho**j`` and the dimension is the least-squares slope of
``log mass`` against ``log r`` over a plateau window of the ladder.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmptyBall, EmptyDynamicalBall
from .sampler import EmpiricalMeasure, forward_orbits

MIN_BALL_COUNT = 20
MIN_WINDOW = 5
PLATEAU_TOL = 0.25
MAX_PAIRS = 10_000_000
ENTROPY_MIN_COUNT = 30


@dataclass
class RadiusLadder:
    r_max: float = 0.1
    rho: float = 0.8
    J: int = 20
    fit_range: tuple = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.r_max <= 1:
            raise ValueError("r_max must lie in (0, 1]")
        if self.J < 1:
            raise ValueError("ladder needs at least two radii")
        if self.fit_range is None:
            self.fit_range = (0, self.J)
        lo, hi = self.fit_range
        if not 0 <= lo <= hi <= self.J:
            raise ValueError(f"fit range {self.fit_range} outside ladder 0..{self.J}")

    @property
    def r_values(self):
        return self.r_max * self.rho ** np.arange(self.J + 1)

    def with_fit(self, lo, hi):
        return RadiusLadder(self.r_max, self.rho, self.J, (int(lo), int(hi)))


@dataclass
class DimensionEstimate:
    slope: float
    ci95: float
    n_centers: int
    ladder: RadiusLadder
    lower: float = None
    upper: float = None
    plateau: bool = True

    def __post_init__(self):
        self.slope = max(float(self.slope), 0.0)
        self.ci95 = float(self.ci95)
        if self.lower is None:
            self.lower = self.slope
        if self.upper is None:
            self.upper = self.slope


def _unit(points):
    points = np.asarray(points, dtype=complex)
    return points / np.linalg.norm(points, axis=-1, keepdims=True)


def _chordal(U, u):
    """Chordal distances between unit lifts ``U`` (N, k+1) and ``u`` (k+1,)."""
    c = np.abs(U @ u.conj())
    return np.sqrt(np.clip(1.0 - c * c, 0.0, None))


def _ols(x, y):
    """Slope and its standard error for ``y ~ a + b x``."""
    n = len(x)
    xm = x - x.mean()
    sxx = np.sum(xm * xm)
    b = np.sum(xm * (y - y.mean())) / sxx
    if n <= 2:
        return b, 0.0
    resid = y - y.mean() - b * xm
    s2 = np.sum(resid * resid) / (n - 2)
    return b, math.sqrt(s2 / sxx)


def _halves_agree(x, y):
    h = len(x) // 2
    s1, _ = _ols(x[: h + 1], y[: h + 1])
    s2, _ = _ols(x[h:], y[h:])
    scale = max(abs(s1), abs(s2))
    return abs(s1 - s2) <= PLATEAU_TOL * scale


def fit_ladder(ladder: RadiusLadder, masses, counts, n_centers):
    """Plateau regression of ``log masses`` on ``log r`` inside ``ladder.fit_range``.

    Only radii whose balls hold at least ``MIN_BALL_COUNT`` samples are
    eligible.  Among eligible windows of at least ``MIN_WINDOW`` radii the
    longest one whose two half-window slopes agree within 25% is used; ties go
    to the window with larger radii.  If no window passes, the whole eligible
    range is fitted and ``plateau`` is False.
    """
    lo, hi = ladder.fit_range
    logr = np.log(ladder.r_values)
    ok = np.asarray(counts) >= MIN_BALL_COUNT
    # eligible radii form a prefix because counts decrease with r
    end = lo
    while end <= hi and ok[end]:
        end += 1
    if end - lo < MIN_WINDOW:
        raise EmptyBall(f"only {end - lo} radii hold >= {MIN_BALL_COUNT} samples "
                        f"(need {MIN_WINDOW}); ladder truncated")
    with np.errstate(divide="ignore"):
        logm = np.log(np.asarray(masses, dtype=float))
    best = None
    for length in range(end - lo, MIN_WINDOW - 1, -1):
        for a in range(lo, end - length + 1):
            sl = slice(a, a + length)
            if _halves_agree(logr[sl], logm[sl]):
                best = (a, a + length - 1)
                break
        if best:
            break
    plateau = best is not None
    a, b = best if plateau else (lo, end - 1)
    x, y = logr[a:b + 1], logm[a:b + 1]
    slope, se = _ols(x, y)
    tq = stats.t.ppf(0.975, len(x) - 2) if len(x) > 2 else 0.0
    subs = [_ols(x[i:i + MIN_WINDOW], y[i:i + MIN_WINDOW])[0]
            for i in range(len(x) - MIN_WINDOW + 1)]
    return DimensionEstimate(slope, tq * se, n_centers, ladder.with_fit(a, b),
                             lower=max(min(subs), 0.0), upper=max(max(subs), 0.0),
                             plateau=plateau)


def ball_masses(cloud: EmpiricalMeasure, x, ladder: RadiusLadder):
    """Weight fraction and sample count of the cloud in each ladder ball around ``x``."""
    U = _unit(cloud.points)
    dist = _chordal(U, _unit(np.asarray(x)))
    order = np.argsort(dist)
    cum = np.concatenate([[0.0], np.cumsum(cloud.weights[order])])
    counts = np.searchsorted(dist[order], ladder.r_values, side="left")
    return cum[counts], counts


def local_dimension(cloud: EmpiricalMeasure, x, ladder: RadiusLadder = None) -> DimensionEstimate:
    """Pointwise dimension of the cloud at ``x``."""
    ladder = RadiusLadder() if ladder is None else ladder
    masses, counts = ball_masses(cloud, x, ladder)
    return fit_ladder(ladder, masses, counts, 1)


def local_dimensions(cloud: EmpiricalMeasure, centers, ladder: RadiusLadder = None):
    """Estimates at each center; centers with empty balls give ``None``."""
    out = []
    for x in centers:
        try:
            out.append(local_dimension(cloud, x, ladder))
        except EmptyBall:
            out.append(None)
    return out


def correlation_dimension(cloud: EmpiricalMeasure, ladder: RadiusLadder = None, seed=0,
                          max_pairs=MAX_PAIRS, chunk=1_000_000) -> DimensionEstimate:
    """Correlation dimension from the weighted pair-distance distribution.

    All pairs are used when there are at most ``max_pairs`` of them, otherwise
    ``max_pairs`` random distinct pairs.
    """
    ladder = RadiusLadder() if ladder is None else ladder
    U = _unit(cloud.points)
    w = cloud.weights
    N = len(U)
    total = N * (N - 1) // 2
    r = ladder.r_values
    hist = np.zeros(len(r))
    counts = np.zeros(len(r), dtype=np.int64)
    wsum = 0.0
    if total <= max_pairs:
        pairs = np.triu_indices(N, 1)
        blocks = [(pairs[0][s:s + chunk], pairs[1][s:s + chunk]) for s in range(0, total, chunk)]
        n_pairs = total
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
        blocks = []
        n_pairs = max_pairs
        for s in range(0, max_pairs, chunk):
            m = min(chunk, max_pairs - s)
            i = rng.integers(N, size=m)
            j = (i + rng.integers(1, N, size=m)) % N
            blocks.append((i, j))
    for i, j in blocks:
        c = np.abs(np.sum(U[i] * U[j].conj(), axis=1))
        dist = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        pw = w[i] * w[j]
        wsum += pw.sum()
        order = np.argsort(dist)
        cum = np.concatenate([[0.0], np.cumsum(pw[order])])
        pos = np.searchsorted(dist[order], r, side="left")
        hist += cum[pos]
        counts += pos
    return fit_ladder(ladder, hist / wsum, counts, n_pairs)


# --- Brin-Katok ------------------------------------------------------------


def dynamical_ball_counts(orbits, weights, center_orbit, xi):
    """Weight fraction and count of orbits staying ``xi``-close to ``center_orbit``.

    ``orbits`` has shape ``(n+1, N, k+1)`` and ``center_orbit`` ``(n+1, k+1)``;
    entry ``q`` of the result concerns the first ``q+1`` orbit points.
    """
    return _ball_counts_unit(_unit(orbits), weights, _unit(center_orbit), xi)


def _ball_counts_unit(U, weights, u, xi):
    alive = np.nonzero(_chordal(U[0], u[0]) < xi)[0]
    frac = np.empty(len(U))
    cnt = np.empty(len(U), dtype=np.int64)
    frac[0], cnt[0] = weights[alive].sum(), len(alive)
    for q in range(1, len(U)):
        alive = alive[_chordal(U[q, alive], u[q]) < xi]
        frac[q], cnt[q] = weights[alive].sum(), len(alive)
    return frac, cnt


def _entropy_slope(frac, cnt, min_count, first=1):
    """Count-weighted slope of ``-log frac`` over levels ``q >= first`` with enough samples."""
    use = np.nonzero(np.asarray(cnt) >= min_count)[0]
    use = use[use >= first]
    if len(use) < 2:
        return None
    q = use.astype(float)
    y = -np.log(np.asarray(frac)[use])
    w = np.asarray(cnt, dtype=float)[use]  # var(log count) ~ 1/count
    qm = np.sum(w * q) / w.sum()
    ym = np.sum(w * y) / w.sum()
    return float(np.sum(w * (q - qm) * (y - ym)) / np.sum(w * (q - qm) ** 2))


def brin_katok_entropy(f, cloud: EmpiricalMeasure, x, xi=0.05, n=10, orbits=None,
                       min_count=10):
    """Local entropy at ``x`` from the decay of dynamical-ball masses.

    Estimated as the count-weighted regression slope of ``-log nu(B_q(x, xi))``
    over the levels ``1 <= q <= n`` whose balls still hold ``min_count``
    samples.  The slope discards the ``log(1/nu(B_0))`` offset, which at
    reachable ``n`` would otherwise dominate ``-(1/n) log nu(B_n)``.
    """
    if not 0 < xi:
        raise ValueError("xi must be positive")
    if orbits is None:
        orbits = forward_orbits(f, cloud.points, n)
    x_orbit = forward_orbits(f, np.asarray(x)[None], n)[:, 0]
    frac, cnt = dynamical_ball_counts(orbits[: n + 1], cloud.weights, x_orbit, xi)
    if cnt[-1] == len(cloud):
        return 0.0
    h = _entropy_slope(frac, cnt, min_count)
    if h is None:
        lb = math.log(len(cloud)) / n
        raise EmptyDynamicalBall(f"dynamical balls too small beyond level {np.sum(cnt > 0) - 1}; "
                                 f"entropy >= {lb:.4f}", lb)
    return max(h, 0.0)


@dataclass
class EntropyEstimate:
    h: float
    se: float
    n_centers: int
    levels: tuple


def entropy_estimate(f, cloud: EmpiricalMeasure, center_idx, xi=0.05, n=12,
                     min_count=ENTROPY_MIN_COUNT, first_level=2, n_boot=200,
                     seed=0) -> EntropyEstimate:
    """Entropy from dynamical-ball fractions averaged over cloud centers.

    For an invariant measure with constant Jacobian ``e^h`` on small balls
    (the equilibrium measure), ``E_x nu(B_{q+1}(x))`` equals
    ``e^{-h} E_x nu(B_q(x))`` as soon as ``B_1`` is a pullback ball, so the
    decay of the averaged fractions over ``q >= 1`` estimates ``h`` without the
    transient that single-center slopes carry.  Near critical points that
    identity needs a few more levels, hence ``first_level = 2``.  Levels need
    ``min_count`` samples summed over centers; ``se`` is a bootstrap over centers.
    """
    center_idx = np.asarray(center_idx)
    U = _unit(forward_orbits(f, cloud.points, n))
    F = np.empty((len(center_idx), n + 1))
    C = np.empty((len(center_idx), n + 1))
    for row, c in enumerate(center_idx):
        fr, ct = _ball_counts_unit(U, cloud.weights, U[:, c], xi)
        # the center always sits in its own ball
        F[row] = fr - cloud.weights[c]
        C[row] = ct - 1
    if np.all(C[:, -1] == len(cloud) - 1):
        return EntropyEstimate(0.0, 0.0, len(center_idx), (0, n))

    def fit(rows):
        tot = C[rows].sum(axis=0)
        return _entropy_slope(np.maximum(F[rows].mean(axis=0), 1e-300), tot, min_count,
                              first_level)

    all_rows = np.arange(len(center_idx))
    h = fit(all_rows)
    if h is None:
        lb = math.log(len(cloud)) / n
        raise EmptyDynamicalBall("averaged dynamical balls too small", lb)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(13,)))
    boots = [fit(rng.choice(all_rows, size=len(all_rows))) for _ in range(n_boot)]
    boots = [b for b in boots if b is not None]
    se = float(np.std(boots, ddof=1)) if len(boots) > 1 else 0.0
    use = np.nonzero(C.sum(axis=0) >= min_count)[0]
    use = use[use >= first_level]
    return EntropyEstimate(max(h, 0.0), se, len(center_idx), (int(use[0]), int(use[-1])))


# --- bound formulas --------------------------------------------------------


@dataclass
class BoundInputs:
    d: int
    k: int
    lambda1: float
    lambdak: float
    h: float
    p: int = 1
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1 or self.d < 2:
            raise ValueError("need k >= 1 and d >= 2")
        if not 1 <= self.p <= self.k:
            raise ValueError("multiplicity p must lie in 1..k")
        if not (self.lambda1 > 0 and self.lambdak > 0):
            raise ValueError("exponents must be positive")
        if self.lambdak > self.lambda1 * (1 + 1e-12):
            raise ValueError("lambdak must not exceed lambda1")
        if self.h < 0 or self.h > self.k * math.log(self.d) * (1 + 1e-12):
            raise ValueError("entropy must lie in [0, k log d]")
        if self.h < (self.k - self.p) * math.log(self.d):
            self.flags.append("entropy below (k-p) log d: second bound term negative")


def theorem_a_bound(b: BoundInputs) -> float:
    a = (b.k - b.p) * math.log(b.d)
    return a / b.lambda1 + (b.h - a) / b.lambdak


def theorem_a_sigma(b: BoundInputs, se1, sek, se_h) -> float:
    """First-order propagated error of :func:`theorem_a_bound`."""
    a = (b.k - b.p) * math.log(b.d)
    g1 = -a / b.lambda1 ** 2
    gk = -(b.h - a) / b.lambdak ** 2
    gh = 1.0 / b.lambdak
    return math.sqrt((g1 * se1) ** 2 + (gk * sek) ** 2 + (gh * se_h) ** 2)


@dataclass
class CorollaryValues:
    corA: float
    conjecture: float
    corC1_ok: bool
    phi: float


def corollary_values(b: BoundInputs) -> CorollaryValues:
    ld = math.log(b.d)
    lambdas = [b.lambda1] if b.k == 1 else [b.lambda1] + [b.lambdak] * (b.k - 1)
    if b.k > 2:
        raise ValueError("intermediate exponents are needed for k > 2")
    return CorollaryValues(
        corA=(b.k - 1) * ld / b.lambda1 + ld / b.lambdak,
        conjecture=ld * sum(1.0 / lam for lam in lambdas),
        corC1_ok=bool(b.lambda1 >= (1 - 1 / b.k) * 0.5 * ld),
        phi=0.5 * ((1 + 1 / b.k) * (b.k - 1) * ld - b.h),
    )


def corollary_sigmas(b: BoundInputs, se1, sek):
    """Propagated errors of ``corA`` and ``conjecture``."""
    ld = math.log(b.d)
    s_a = math.hypot((b.k - 1) * ld / b.lambda1 ** 2 * se1, ld / b.lambdak ** 2 * sek)
    if b.k == 1:
        return s_a, ld / b.lambda1 ** 2 * se1
    return s_a, math.hypot(ld / b.lambda1 ** 2 * se1, ld / b.lambdak ** 2 * sek)


def write_estimates_csv(path, rows):
    """Rows: ``(quantity, center_id, DimensionEstimate or (value, ci95))``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "center_id", "slope", "ci95", "fit_lo", "fit_hi"])
        for quantity, cid, est in rows:
            if isinstance(est, DimensionEstimate):
                lo, hi = est.ladder.fit_range
                w.writerow([quantity, cid, f"{est.slope:.12g}", f"{est.ci95:.12g}", lo, hi])
            else:
                w.writerow([quantity, cid, f"{est[0]:.12g}", f"{est[1]:.12g}", "", ""])
