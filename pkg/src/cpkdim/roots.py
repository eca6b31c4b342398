"""Batched roots of binary forms via companion matrices and Newton polishing."""

import numpy as np

MAX_DEGREE = 8


def companion_roots(coeffs):
    """Roots of a batch of monic-izable polynomials.

    ``coeffs`` has shape ``(N, n+1)``, highest degree first, and the leading
    coefficient must be nonzero.  Returns ``(N, n)`` eigenvalues of the
    companion matrices.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    N, m = coeffs.shape
    n = m - 1
    if n == 0:
        return np.empty((N, 0), dtype=complex)
    if n == 1:
        return -coeffs[:, 1:2] / coeffs[:, :1]
    if n == 2:
        # eigenvalues of the 2x2 companion matrix, cancellation-free form
        b = coeffs[:, 1] / coeffs[:, 0]
        c = coeffs[:, 2] / coeffs[:, 0]
        sq = np.sqrt(b * b - 4 * c)
        sq = np.where((b.conj() * sq).real >= 0, sq, -sq)
        q = -0.5 * (b + sq)
        other = np.where(q == 0, 0, c / np.where(q == 0, 1, q))
        return np.stack([q, other], axis=1)
    C = np.zeros((N, n, n), dtype=complex)
    C[:, 0, :] = -coeffs[:, 1:] / coeffs[:, :1]
    C[:, np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(C)


def binary_form_roots(coeffs, newton_steps=3):
    """Projective roots ``[z : w]`` of binary forms ``sum_j c_j z^(n-j) w^j``.

    ``coeffs[:, j]`` multiplies ``z^(n-j)`` (highest z-degree first).  Each row
    is solved in whichever chart keeps the root product bounded, then every
    root is polished in the chart where it has the larger coordinate.  Returns
    normalized homogeneous pairs of shape ``(N, n, 2)``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    N, m = coeffs.shape
    n = m - 1
    if n > MAX_DEGREE:
        raise ValueError(f"degree {n} above supported maximum {MAX_DEGREE}")
    scale = np.max(np.abs(coeffs), axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    c = coeffs / scale
    use_t = np.abs(c[:, 0]) >= np.abs(c[:, -1])
    out = np.empty((N, n, 2), dtype=complex)
    for flag, cc in ((True, c), (False, c[:, ::-1])):
        rows = np.nonzero(use_t == flag)[0]
        if rows.size == 0:
            continue
        r = _roots_with_infinity(cc[rows])
        # r[..., 0] is the chart variable, r[..., 1] the other coordinate
        out[rows] = r if flag else r[..., ::-1]
    return _polish(c, out, newton_steps)


def _roots_with_infinity(c):
    """Roots in the chart ``t = z/w``; vanishing leading coefficients put roots at ``[1:0]``."""
    N, m = c.shape
    n = m - 1
    out = np.zeros((N, n, 2), dtype=complex)
    lead_tol = 1e-14
    # count leading (near) zeros per row
    nz = np.zeros(N, dtype=int)
    alive = np.ones(N, dtype=bool)
    for j in range(n):
        small = alive & (np.abs(c[:, j]) <= lead_tol)
        nz[small] += 1
        alive &= small
    for z in np.unique(nz):
        rows = np.nonzero(nz == z)[0]
        t = companion_roots(c[rows, z:])
        out[rows, : n - z, 0] = t
        out[rows, : n - z, 1] = 1.0
        out[rows, n - z:, 0] = 1.0
        out[rows, n - z:, 1] = 0.0
    m_ = np.max(np.abs(out), axis=-1, keepdims=True)
    return out / m_


def _polish(c, roots, steps):
    """Newton iterations in the chart where each root has max-modulus coordinate."""
    in_t = np.abs(roots[..., 0]) <= np.abs(roots[..., 1])  # |z| <= |w|: chart t = z/w
    t = np.where(in_t, roots[..., 0] / np.where(in_t, roots[..., 1], 1),
                 roots[..., 1] / np.where(in_t, 1, roots[..., 0]))
    ct = c[:, None, :]
    cs = c[:, None, ::-1]
    coef = np.where(in_t[..., None], ct, cs)
    for _ in range(steps):
        p, dp = _horner_rows(coef, t)
        ok = np.abs(dp) > 1e-300
        step = np.where(ok, p / np.where(ok, dp, 1), 0)
        t = t - step
    z = np.where(in_t, t, 1.0)
    w = np.where(in_t, 1.0, t)
    out = np.stack([z, w], axis=-1)
    return out / np.max(np.abs(out), axis=-1, keepdims=True)


def _horner_rows(coef, t):
    p = np.zeros_like(t)
    dp = np.zeros_like(t)
    for j in range(coef.shape[-1]):
        dp = dp * t + p
        p = p * t + coef[..., j]
    return p, dp


def min_separation(roots):
    """Smallest pairwise chordal distance among the roots of each row, shape ``(N,)``."""
    N, n, _ = roots.shape
    if n < 2:
        return np.full(N, np.inf)
    a = roots[:, :, None, :]
    b = roots[:, None, :, :]
    wedge = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    norms = np.sqrt(np.sum(np.abs(roots) ** 2, axis=-1))
    dist = wedge / (norms[:, :, None] * norms[:, None, :])
    dist[:, np.arange(n), np.arange(n)] = np.inf
    return dist.reshape(N, -1).min(axis=1)
