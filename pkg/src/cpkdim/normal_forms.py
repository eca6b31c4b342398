"""Resonant normal forms: triangular polynomial maps ``R = A + N``.

Polynomials in ``k`` variables are dictionaries ``{alpha: coefficient}``
keyed by exponent tuples.  Coefficients are either Python complex numbers or
exact Gaussian rationals (sympy's ``QQ_I``); every operation here is written
against the ring operators only, so the same code runs in both modes and the
stability identities (closure under composition and inversion) can be
checked coefficient-exactly.

Indices in public results follow the usual 1-based convention for ``R_i``,
``a_i`` and ``I``; Python containers are 0-based underneath.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc
from sympy.polys.domains import QQ_I

from .errors import AdaptednessFailure, BandViolation, ClosureViolation, SingularDiagonal

EPS_RES = 1e-6
SINGULAR_TOL = 1e-300
BAND_SLACK = 1e-12


# --- coefficient helpers ---------------------------------------------------


def gaussian(re_part, im_part=0):
    """Exact Gaussian rational from anything ``Fraction`` accepts."""
    return QQ_I(Fraction(re_part), Fraction(im_part))


def is_exact(c):
    return not isinstance(c, (complex, float, int, np.number))


def to_complex(c):
    if is_exact(c):
        return complex(float(c.x), float(c.y))
    return complex(c)


def _one_like(c):
    return QQ_I(1, 0) if is_exact(c) else 1.0 + 0j


def _zero_like(c):
    return QQ_I(0, 0) if is_exact(c) else 0j


def _modulus(c):
    return abs(to_complex(c))


# --- sparse polynomials ----------------------------------------------------


def _clean(p):
    return {a: c for a, c in p.items() if c}


def poly_add(p, q):
    out = dict(p)
    for a, c in q.items():
        out[a] = out[a] + c if a in out else c
    return _clean(out)


def poly_scale(p, s):
    return _clean({a: c * s for a, c in p.items()})


def poly_mul(p, q):
    out = {}
    for (a, c), (b, e) in itertools.product(p.items(), q.items()):
        m = tuple(x + y for x, y in zip(a, b))
        out[m] = out[m] + c * e if m in out else c * e
    return _clean(out)


def poly_compose(outer, inner, k, one):
    """``outer(inner_1, ..., inner_k)``; ``inner`` is a list of ``k`` polynomials."""
    out = {}
    cache = {}

    def power(j, e):
        if (j, e) not in cache:
            if e == 0:
                cache[(j, e)] = {(0,) * k: one}
            else:
                cache[(j, e)] = poly_mul(power(j, e - 1), inner[j])
        return cache[(j, e)]

    for alpha, c in outer.items():
        term = {(0,) * k: c}
        for j, e in enumerate(alpha):
            if e:
                term = poly_mul(term, power(j, e))
        out = poly_add(out, term)
    return out


def _unit(k, i):
    return tuple(1 if j == i else 0 for j in range(k))


# --- resonances ------------------------------------------------------------


@dataclass(frozen=True)
class ResonanceSet:
    lambdas: tuple
    eps_res: float
    R: tuple                     # R[i] lists the resonant degrees of component i+1
    theta: float
    I: frozenset                 # 1-based indices with 2 lambda_k <= lambda_i
    bases: tuple = None

    @property
    def k(self):
        return len(self.lambdas)

    @property
    def Delta(self):
        return sum(len(r) for r in self.R)

    def allowed(self, i):
        """Resonant degrees of 0-based component ``i`` as a set."""
        return set(self.R[i]) if i < self.k - 1 else set()


def _graded_key(alpha):
    return (sum(alpha), alpha)


def enumerate_resonances(lambdas, eps_res=EPS_RES, bases=None) -> ResonanceSet:
    """All resonant degrees for exponents ``lambda_1 >= ... >= lambda_k > 0``.

    With ``bases`` (exact positive rationals ``q_i`` with ``lambda_i = log q_i``)
    the relation ``q_i = prod_j q_j^alpha_j`` is tested exactly; otherwise the
    additive relation is tested within ``eps_res``.
    """
    lambdas = tuple(float(x) for x in lambdas)
    k = len(lambdas)
    if k < 1 or any(x <= 0 for x in lambdas):
        raise ValueError("exponents must be positive")
    if any(lambdas[i] < lambdas[i + 1] for i in range(k - 1)):
        raise ValueError("exponents must be sorted in descending order")
    if not 0 < eps_res < lambdas[-1] / 4:
        raise ValueError("eps_res must lie in (0, lambda_k / 4)")
    if bases is not None:
        bases = tuple(Fraction(b) for b in bases)
        if len(bases) != k or any(b <= 1 for b in bases):
            raise ValueError("bases must be k rationals > 1")
        if any(abs(math.log(b) - lam) > 1e-9 * max(1.0, lam) for b, lam in zip(bases, lambdas)):
            raise ValueError("bases do not match the exponents")
    theta = lambdas[0] / lambdas[-1]
    top = math.ceil(theta) + 1
    R = []
    for i in range(k - 1):
        found = []
        tail = k - i - 1
        for total in range(2, top + 1):
            for combo in itertools.combinations_with_replacement(range(tail), total):
                alpha = [0] * k
                for j in combo:
                    alpha[i + 1 + j] += 1
                alpha = tuple(alpha)
                if bases is not None:
                    prod = Fraction(1)
                    for j in range(i + 1, k):
                        prod *= bases[j] ** alpha[j]
                    hit = prod == bases[i]
                else:
                    hit = abs(lambdas[i] - sum(a * lam for a, lam in zip(alpha, lambdas))) <= eps_res
                if hit:
                    found.append(alpha)
        R.append(tuple(sorted(set(found), key=_graded_key)))
    I = frozenset(i + 1 for i in range(k - 1) if 2 * lambdas[-1] <= lambdas[i] + eps_res)
    return ResonanceSet(lambdas, eps_res, tuple(R), theta, I, bases)


# --- resonant maps ---------------------------------------------------------


@dataclass(eq=False)
class ResonantMap:
    a: tuple                       # diagonal coefficients a_1..a_k
    N: tuple = None                # N[i]: {alpha: c} for components 1..k-1

    def __post_init__(self):
        self.a = tuple(self.a)
        k = len(self.a)
        if self.N is None:
            self.N = tuple({} for _ in range(k - 1))
        self.N = tuple(_clean(dict(n)) for n in self.N)
        if len(self.N) != k - 1:
            raise ValueError("need one normal component for each of z_1..z_{k-1}")
        for i, n in enumerate(self.N):
            for alpha in n:
                if len(alpha) != k or any(alpha[: i + 1]) or sum(alpha) < 2:
                    raise ValueError(f"monomial {alpha} not admissible in component {i + 1}")

    @property
    def k(self):
        return len(self.a)

    @property
    def exact(self):
        return is_exact(self.a[0])

    def components(self):
        """Full polynomial components ``R_i = a_i z_i + N_i``."""
        k = self.k
        out = []
        for i in range(k):
            p = {_unit(k, i): self.a[i]}
            if i < k - 1:
                p = poly_add(p, self.N[i])
            out.append(p)
        return out

    def is_linear(self):
        return not any(self.N)

    def equals(self, other):
        """Coefficient-exact equality."""
        return (self.k == other.k and all(x == y for x, y in zip(self.a, other.a))
                and all(p == q for p, q in zip(self.N, other.N)))

    def to_complex(self):
        return ResonantMap(tuple(to_complex(x) for x in self.a),
                           tuple({al: to_complex(c) for al, c in n.items()} for n in self.N))

    # numeric evaluation on arrays of points, shape (..., k)
    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.empty_like(z)
        for i, p in enumerate(self.to_complex().components()):
            out[..., i] = _eval(p, z)
        return out

    def jacobian(self, z):
        z = np.asarray(z, dtype=complex)
        comps = self.to_complex().components()
        J = np.empty(z.shape + (self.k,), dtype=complex)
        for i, p in enumerate(comps):
            for j in range(self.k):
                J[..., i, j] = _eval(_derivative(p, j), z)
        return J

    def second_derivative(self, z, j):
        """``d^2 R / dz_j^2`` at ``z``, shape ``(..., k)``."""
        z = np.asarray(z, dtype=complex)
        out = np.empty_like(z)
        for i, p in enumerate(self.to_complex().components()):
            out[..., i] = _eval(_derivative(_derivative(p, j), j), z)
        return out


def _eval(p, z):
    acc = np.zeros(z.shape[:-1], dtype=complex)
    for alpha, c in p.items():
        term = np.full(z.shape[:-1], c, dtype=complex)
        for j, e in enumerate(alpha):
            if e:
                term = term * z[..., j] ** e
        acc = acc + term
    return acc


def _derivative(p, j):
    out = {}
    for alpha, c in p.items():
        if alpha[j]:
            beta = list(alpha)
            beta[j] -= 1
            out[tuple(beta)] = c * alpha[j]
    return out


def identity_map(k, exact=True):
    one = QQ_I(1, 0) if exact else 1.0 + 0j
    return ResonantMap((one,) * k)


def _split(polys, res: ResonanceSet):
    """Split polynomial components into ``(A, N, residual)`` w.r.t. ``res``."""
    k = res.k
    a, N, residual = [], [], []
    for i, p in enumerate(polys):
        e = _unit(k, i)
        a.append(p.get(e, None))
        allowed = res.allowed(i)
        n = {al: c for al, c in p.items() if al in allowed}
        bad = {al: c for al, c in p.items() if al != e and al not in allowed}
        N.append(n)
        residual.append(bad)
    zero = _zero_like(next((c for p in polys for c in p.values()), 0j))
    a = [zero if x is None else x for x in a]
    return tuple(a), tuple(N[: k - 1]), residual


def compose_resonant(R1: ResonantMap, R2: ResonantMap, res: ResonanceSet) -> ResonantMap:
    """``R1 o R2`` (``R2`` applied first), truncated to resonant degrees.

    Raises :class:`ClosureViolation` if any non-resonant monomial survives.
    """
    if R1.k != R2.k or R1.k != res.k:
        raise ValueError("dimension mismatch")
    one = _one_like(R1.a[0])
    polys = [poly_compose(p, R2.components(), R1.k, one) for p in R1.components()]
    a, N, residual = _split(polys, res)
    if any(residual):
        raise ClosureViolation(f"non-resonant terms survive composition: {residual}")
    return ResonantMap(a, N)


def invert_resonant(R: ResonantMap, res: ResonanceSet) -> ResonantMap:
    """Exact inverse by back-substitution, solving ``z_k`` first."""
    k = R.k
    if any(_modulus(x) < SINGULAR_TOL for x in R.a):
        raise SingularDiagonal("a diagonal coefficient vanishes")
    one = _one_like(R.a[0])
    sol = [None] * k
    for i in range(k - 1, -1, -1):
        inv = one / R.a[i]
        p = {_unit(k, i): inv}
        if i < k - 1 and R.N[i]:
            # z_i = (w_i - N_i(z_{i+1}, ..., z_k)) / a_i
            inner = [sol[j] if sol[j] is not None else {} for j in range(k)]
            sub = poly_compose(R.N[i], inner, k, one)
            p = poly_add(p, poly_scale(sub, -inv))
        sol[i] = p
    a, N, residual = _split(sol, res)
    if any(residual):
        raise ClosureViolation(f"non-resonant terms in the inverse: {residual}")
    return ResonantMap(a, N)


# --- cocycles --------------------------------------------------------------


def _in_band(a, lam, eps, n):
    m = _modulus(a)
    lo = math.exp(-n * lam - abs(n) * eps)
    hi = math.exp(-n * lam + abs(n) * eps)
    return lo * (1 - BAND_SLACK) <= m <= hi * (1 + BAND_SLACK)


@dataclass(eq=False)
class CocycleSpec:
    steps: list
    res: ResonanceSet
    epsilon: float
    M: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.epsilon < 0 or self.M < 1:
            raise ValueError("need epsilon >= 0 and M >= 1")
        for s, R in enumerate(self.steps):
            for i, (a, lam) in enumerate(zip(R.a, self.res.lambdas)):
                if not _in_band(a, lam, self.epsilon, 1):
                    raise BandViolation(f"step {s}: |a_{i + 1}| outside the epsilon band")

    @property
    def length(self):
        return len(self.steps)

    @property
    def lambdas(self):
        return self.res.lambdas


def cocycle_product(spec: CocycleSpec, n: int) -> ResonantMap:
    """``R^n = steps[n-1] o ... o steps[0]``; negative ``n`` gives ``(R^|n|)^{-1}``."""
    if not -spec.length <= n <= spec.length:
        raise ValueError(f"n must lie in [-{spec.length}, {spec.length}]")
    if n in spec._cache:
        return spec._cache[n]
    if n == 0:
        out = identity_map(spec.res.k, spec.steps[0].exact if spec.steps else True)
    elif n > 0:
        out = spec.steps[0] if n == 1 else compose_resonant(spec.steps[n - 1],
                                                            cocycle_product(spec, n - 1), spec.res)
    else:
        out = invert_resonant(cocycle_product(spec, -n), spec.res)
    for i, (a, lam) in enumerate(zip(out.a, spec.lambdas)):
        if not _in_band(a, lam, spec.epsilon, n):
            raise BandViolation(f"|a_{i + 1},{n}| = {_modulus(a):.6g} leaves the band")
    spec._cache[n] = out
    return out


def adaptedness_constant(spec: CocycleSpec) -> float:
    """Smallest ``M`` with ``|c_{i,n}^alpha| <= M e^{-n lambda_i + |n| eps}`` for ``0 < |n| <= length``."""
    need = 1.0
    for n in itertools.chain(range(1, spec.length + 1), range(-1, -spec.length - 1, -1)):
        R = cocycle_product(spec, n)
        for i, comp in enumerate(R.N):
            if comp:
                top = max(_modulus(c) for c in comp.values())
                need = max(need, top * math.exp(n * spec.lambdas[i] - abs(n) * spec.epsilon))
    return need


def is_adapted(spec: CocycleSpec) -> bool:
    return adaptedness_constant(spec) <= spec.M * (1 + BAND_SLACK)


@dataclass
class Lemma36Result:
    ok1: bool
    ok2: bool
    ok3: bool
    ok4: bool
    worst_margins: tuple

    @property
    def all_ok(self):
        return self.ok1 and self.ok2 and self.ok3 and self.ok4


def polydisc_samples(k, samples, r=1.0, seed=0):
    """Low-discrepancy points of ``D^k(r)``, radii pushed towards the boundary."""
    sampler = qmc.Halton(d=2 * k, scramble=True, seed=seed)
    u = sampler.random(samples)
    rho = r * u[:, :k] ** 0.25
    return rho * np.exp(2j * np.pi * u[:, k:])


def _slack(bound, value):
    """Relative slack ``(bound - value) / bound``; infinite when ``value`` is zero."""
    value = np.asarray(value, dtype=float)
    if np.all(value == 0):
        return math.inf
    return float(np.min((bound - value) / bound))


def lemma36_check(spec: CocycleSpec, n: int, samples: int = 1000, r: float = 1.0,
                  seed=0) -> Lemma36Result:
    """Sampled check of the four polydisc estimates for ``R^n``.

    Vectors use the sup norm and derivative blocks the largest entry modulus,
    matching the coefficient norm ``||N|| = max |c^alpha|``.  Item 1's left
    inclusion is verified as ``R^{-n}(D^k(s)) subset D^k(r)``.
    """
    if not 1 <= n <= spec.length:
        raise ValueError("n must lie in 1..length")
    if not is_adapted(spec):
        raise AdaptednessFailure(
            f"coefficients need M >= {adaptedness_constant(spec):.4g} > {spec.M:.4g}")
    res = spec.res
    k = res.k
    lam = spec.lambdas
    eps = spec.epsilon
    Mp = max(res.Delta + 1, res.theta, res.theta * (res.theta - 1)) * spec.M
    Rn = cocycle_product(spec, n).to_complex()
    Rinv = cocycle_product(spec, -n).to_complex()
    z = polydisc_samples(k, samples, r, seed)

    # item 1
    outer = Mp * math.exp(-n * lam[-1] + n * eps) * r
    img = np.max(np.abs(Rn(z)), axis=-1)
    s = math.exp(-n * lam[0] - n * eps) * r / Mp
    back = np.max(np.abs(Rinv(z * (s / r))), axis=-1)
    m1 = min(_slack(outer, img), _slack(r, back))
    ok1 = bool(np.all(img <= outer * (1 + BAND_SLACK)) and np.all(back <= r * (1 + BAND_SLACK)))

    J = Rn.jacobian(z)
    # item 2: rows 1..k-1
    if k > 1:
        b2 = Mp * math.exp(-n * lam[k - 2] + n * eps)
        v2 = np.max(np.abs(J[:, : k - 1, :]), axis=(1, 2))
        ok2 = bool(np.all(v2 <= b2 * (1 + BAND_SLACK)))
        m2 = _slack(b2, v2)
    else:
        ok2, m2 = True, math.inf

    # item 3
    lower = math.exp(-n * lam[-1] - n * eps)
    diag = np.abs(J[:, k - 1, k - 1])
    col = np.max(np.abs(J[:, :, k - 1]), axis=1)
    b3 = max(Mp * math.exp(-n * lam[k - 2] + n * eps) if k > 1 else 0.0,
             math.exp(-n * lam[-1] + n * eps))
    ok3 = bool(np.all(diag >= lower * (1 - BAND_SLACK)) and np.all(col <= b3 * (1 + BAND_SLACK)))
    m3 = min(float(np.min((diag - lower) / lower)), _slack(b3, col))

    # item 4
    b4 = Mp * math.exp(-2 * n * lam[-1] + n * eps)
    v4 = np.max(np.abs(Rn.second_derivative(z, k - 1)), axis=1)
    ok4 = bool(np.all(v4 <= b4 * (1 + BAND_SLACK)))
    m4 = _slack(b4, v4)
    return Lemma36Result(ok1, ok2, ok3, ok4, (m1, m2, m3, m4))


def fractional_time(n: int, lambda1: float, lambdak: float) -> int:
    """``floor(n lambda_k / lambda_1)``, robust to one-ulp noise at exact integers."""
    if n < 0 or lambda1 <= 0 or lambdak <= 0:
        raise ValueError("need n >= 0 and positive exponents")
    if lambdak > lambda1 * (1 + 1e-12):
        raise ValueError("lambdak must not exceed lambda1")
    x = n * lambdak / lambda1
    q = math.floor(x)
    if x - q > 1 - 1e-12:
        q += 1
    return min(q, n)


# --- random generators -----------------------------------------------------


def random_resonant_exponents(rng, k=None):
    """Exact exponent data ``(lambdas, bases)`` with a nonempty resonance set."""
    k = int(rng.integers(2, 4)) if k is None else k
    base = Fraction(int(rng.integers(11, 31)), 10)
    if k == 2:
        bases = (base ** int(rng.integers(2, 4)), base)
    else:
        mid = base ** int(rng.integers(1, 3)) if rng.random() < 0.5 else base * Fraction(11, 10)
        mid = max(mid, base)
        top = mid * base if rng.random() < 0.5 else base ** 3
        top = max(top, mid)
        bases = (top, mid, base)
    lambdas = tuple(math.log(b) for b in bases)
    return lambdas, bases


def _rational(x, den=10**6):
    return Fraction(x).limit_denominator(den)


def random_resonant_map(res: ResonanceSet, eps, rng, exact=True, c_scale=1.0) -> ResonantMap:
    """Random map whose diagonal lies strictly inside the epsilon band."""
    a = []
    for lam in res.lambdas:
        mod = math.exp(-lam + 0.8 * eps * (2 * rng.random() - 1))
        z = mod * np.exp(2j * np.pi * rng.random())
        a.append(gaussian(_rational(z.real), _rational(z.imag)) if exact else complex(z))
    N = []
    for i in range(res.k - 1):
        comp = {}
        for alpha in res.R[i]:
            re_, im_ = rng.integers(-50, 51, size=2)
            c = complex(re_, im_) / 100 * c_scale
            comp[alpha] = (gaussian(_rational(c.real), _rational(c.imag)) if exact else c)
        N.append(comp)
    return ResonantMap(tuple(a), tuple(N))


def random_adapted_cocycle(res: ResonanceSet, eps, length, rng, exact=True, c_scale=1.0):
    """Random cocycle together with the smallest adapted constant ``M``."""
    steps = [random_resonant_map(res, eps, rng, exact, c_scale) for _ in range(length)]
    spec = CocycleSpec(steps, res, eps, 1.0)
    spec.M = adaptedness_constant(spec)
    return spec


# --- text form -------------------------------------------------------------


def _fmt(c):
    if is_exact(c):
        return f"{Fraction(int(c.x.numerator), int(c.x.denominator))},"\
               f"{Fraction(int(c.y.numerator), int(c.y.denominator))}"
    c = complex(c)
    return f"{c.real!r},{c.imag!r}"


def to_text(R: ResonantMap) -> str:
    lines = [f"a_{i + 1} = {_fmt(a)}" for i, a in enumerate(R.a)]
    for i, comp in enumerate(R.N):
        for alpha in sorted(comp, key=_graded_key):
            lines.append(f"c_{i + 1}[{','.join(map(str, alpha))}] = {_fmt(comp[alpha])}")
    return "\n".join(lines) + "\n"


_LINE = re.compile(r"^(a|c)_(\d+)(?:\[([\d,\s]+)\])?\s*=\s*([^,]+),([^,]+)$")


def from_text(text: str, exact: bool = None) -> ResonantMap:
    """Parse :func:`to_text` output; entries may be separated by newlines or ``;``."""
    entries = [e.strip() for e in re.split(r"[;\n]", text) if e.strip()]
    parsed = []
    for e in entries:
        m = _LINE.match(e)
        if not m:
            raise ValueError(f"bad resonant-map entry {e!r}")
        parsed.append(m.groups())
    if exact is None:
        exact = all("." not in g[3] + g[4] and "e" not in (g[3] + g[4]).lower() for g in parsed)
    a = {}
    N = {}
    for kind, idx, alpha, re_, im_ in parsed:
        c = (gaussian(Fraction(re_.strip()), Fraction(im_.strip())) if exact
             else complex(float(re_), float(im_)))
        i = int(idx) - 1
        if kind == "a":
            a[i] = c
        else:
            N.setdefault(i, {})[tuple(int(x) for x in alpha.split(","))] = c
    k = len(a)
    if sorted(a) != list(range(k)):
        raise ValueError("diagonal entries a_1..a_k missing")
    return ResonantMap(tuple(a[i] for i in range(k)), tuple(N.get(i, {}) for i in range(k - 1)))
