"""Weighted linear-growth integrands F(x, z) = w(x) f(z) and hypothesis checks.

The radial profile ``f`` is quadratic on ``|z| <= 1`` and grows linearly
with a ``|z|**(2 - mu)`` correction outside, which makes it C^2, strictly
convex and mu-elliptic.  The weight ``w(x) = 1 + |x|**alpha`` is alpha-Hoelder
with a unique minimum at the origin.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

WEIGHT_RULES = ("min", "midpoint", "mean")


@dataclass(frozen=True)
class MuEllipticProfile:
    """Piecewise profile f with parameter ``1 < mu < 2``."""

    mu: float

    def __post_init__(self):
        mu = float(self.mu)
        if not (1.0 < mu < 2.0) or not np.isfinite(mu):
            raise DomainError(f"mu must lie in (1, 2), got {self.mu!r}")
        object.__setattr__(self, "mu", mu)

    @property
    def ellipticity(self):
        """Constant (mu - 1)/mu, the value of f'' on the inner branch."""
        return (self.mu - 1.0) / self.mu

    def f(self, z):
        mu = self.mu
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        inner = 0.5 * self.ellipticity * z * z
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = (a - a ** (2.0 - mu) / (mu * (2.0 - mu))
                     + (mu - 1.0) / (2.0 * (2.0 - mu)))
        return np.where(a <= 1.0, inner, outer)[()]

    def fprime(self, z):
        mu = self.mu
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = np.sign(z) * (1.0 - a ** (1.0 - mu) / mu)
        return np.where(a <= 1.0, self.ellipticity * z, outer)[()]

    def fsecond(self, z):
        mu = self.mu
        a = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore", over="ignore"):
            outer = self.ellipticity * a ** (-mu)
        return np.where(a <= 1.0, self.ellipticity, outer)[()]

    def g(self, y):
        """Inverse of f' on (-1, 1).

        Raises DomainError if any ``|y| >= 1``.
        """
        y = np.asarray(y, dtype=float)
        if np.any(~(np.abs(y) < 1.0)):
            raise DomainError("g is defined on the open interval (-1, 1)")
        mu = self.mu
        a = np.abs(y)
        lin = y / self.ellipticity
        with np.errstate(divide="ignore", over="ignore"):
            outer = np.sign(y) * (mu * (1.0 - a)) ** (1.0 / (1.0 - mu))
        return np.where(a <= self.ellipticity, lin, outer)[()]

    def g_gap(self, gap):
        """g(1 - gap) for 0 < gap <= 1 without forming 1 - gap.

        Near y = 1 the gap carries all the information; subtracting it
        from 1 first would round small gaps to zero.
        """
        gap = np.asarray(gap, dtype=float)
        if np.any(~((gap > 0.0) & (gap <= 1.0))):
            raise DomainError("gap must lie in (0, 1]")
        mu = self.mu
        y = 1.0 - gap
        with np.errstate(over="ignore"):
            outer = (mu * gap) ** (1.0 / (1.0 - mu))
        return np.where(y <= self.ellipticity, y / self.ellipticity, outer)[()]

    def gprime(self, y):
        """Derivative of g, i.e. 1/f''(g(y))."""
        return 1.0 / self.fsecond(self.g(y))

    def recession(self, z):
        """Recession function f_inf(z) = |z| (exact for this profile)."""
        return np.abs(np.asarray(z, dtype=float))[()]

    def seam_defects(self):
        """Jumps of f, f', f'' across the seam |z| = 1, from both branch formulas."""
        mu = self.mu
        left = (0.5 * self.ellipticity, self.ellipticity, self.ellipticity)
        right = (1.0 - 1.0 / (mu * (2.0 - mu)) + (mu - 1.0) / (2.0 * (2.0 - mu)),
                 1.0 - 1.0 / mu,
                 self.ellipticity)
        return tuple(abs(l - r) for l, r in zip(left, right))


def recession_estimate(f, z, T=(1e3, 1e4, 1e5, 1e6)):
    """Estimate lim f(t z)/t for a convex profile ``f`` from large-t samples.

    Secant slopes ``(f(T[j+1] z) - f(T[j] z)) / (T[j+1] - T[j])`` remove
    additive constants; the last three secants are Aitken-accelerated.  A
    profile with a single power-law correction is extrapolated exactly.
    """
    z = float(z)
    if z == 0.0:
        return 0.0
    T = np.asarray(sorted(T), dtype=float)
    if T.size < 2:
        raise DomainError("need at least two sample points")
    vals = np.array([float(f(t * z)) for t in T])
    s = np.diff(vals) / np.diff(T)
    if s.size < 3:
        return float(s[-1])
    s1, s2, s3 = s[-3:]
    d1, d2 = s2 - s1, s3 - s2
    if d2 == d1 or d1 == 0.0 or not (0.0 <= d2 / d1 < 1.0):
        return float(s3)
    return float(s3 - d2 * d2 / (d2 - d1))


@dataclass(frozen=True)
class HoelderWeight:
    """Weight w(x) = 1 + |x|**alpha on [a, b]."""

    alpha: float
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not (0.0 < float(self.alpha) < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not float(self.a) < float(self.b):
            raise DomainError("weight interval needs a < b")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def c(self):
        """Unique minimiser of w on [a, b]."""
        return float(np.clip(0.0, self.a, self.b))

    @property
    def m(self):
        return float(self(self.c))

    @property
    def w_max(self):
        return float(max(self(self.a), self(self.b)))

    def __call__(self, x):
        return (1.0 + np.abs(np.asarray(x, dtype=float)) ** self.alpha)[()]

    def excess(self, x):
        """w(x) - m, computed without cancellation."""
        x = np.asarray(x, dtype=float)
        return (np.abs(x) ** self.alpha - abs(self.c) ** self.alpha)[()]

    def primitive(self, x):
        """Antiderivative of |x|**alpha vanishing at 0."""
        x = np.asarray(x, dtype=float)
        p = self.alpha + 1.0
        return np.sign(x) * np.abs(x) ** p / p

    def cell_weights(self, nodes, rule="min"):
        """Per-cell weight used by discrete energies.

        ``min``: value at the cell point closest to the minimiser c (the
        cell infimum); ``midpoint``: value at the cell midpoint; ``mean``:
        exact cell average.
        """
        nodes = np.asarray(nodes, dtype=float)
        left, right = nodes[:-1], nodes[1:]
        if rule == "min":
            c = self.c
            return self(np.clip(c, left, right))
        if rule == "midpoint":
            return self(0.5 * (left + right))
        if rule == "mean":
            return 1.0 + self._mean_power(left, right)
        raise DomainError(f"unknown weight rule {rule!r}; expected one of {WEIGHT_RULES}")

    def _mean_power(self, left, right):
        # cell average of |x|**alpha; expm1/log1p keeps far cells accurate
        p = self.alpha + 1.0
        h = right - left
        out = np.empty_like(left)
        same = (left >= 0.0) | (right <= 0.0)
        lo = np.where(left >= 0.0, left, -right)
        hi = np.where(left >= 0.0, right, -left)
        s = same & (lo > 0.0)
        out[s] = lo[s] ** p * np.expm1(p * np.log1p(h[s] / lo[s])) / (p * h[s])
        z = same & (lo == 0.0)
        out[z] = hi[z] ** self.alpha / p
        o = ~same
        out[o] = (right[o] ** p + (-left[o]) ** p) / (p * h[o])
        return out


@dataclass(frozen=True)
class NonAutonomousIntegrand:
    profile: MuEllipticProfile
    weight: HoelderWeight

    @classmethod
    def example(cls, mu, alpha, a=-1.0, b=1.0):
        return cls(MuEllipticProfile(mu), HoelderWeight(alpha, a, b))

    @property
    def mu(self):
        return self.profile.mu

    @property
    def alpha(self):
        return self.weight.alpha

    def F(self, x, z):
        return self.weight(x) * self.profile.f(z)

    def DzF(self, x, z):
        return self.weight(x) * self.profile.fprime(z)

    def Dz2F(self, x, z):
        return self.weight(x) * self.profile.fsecond(z)

    def recession(self, x, z):
        return self.weight(x) * self.profile.recession(z)


@dataclass
class HypothesisReport:
    c0: float
    c1: float
    c2: float
    lam: float
    hoelder_C: float
    hoelder_C_empirical: float
    h1_pass: bool
    h2_pass: bool
    h3_pass: bool
    seed: int
    n_z: int
    n_x: int
    witnesses: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return self.h1_pass and self.h2_pass and self.h3_pass

    def to_dict(self):
        d = dict(self.__dict__)
        d["all_pass"] = self.all_pass
        return d


def default_z_samples(seed=0, n_log=201, n_random=200, zmax=1e3):
    rng = np.random.default_rng(seed)
    pos = np.logspace(-3, np.log10(zmax), n_log)
    extra = rng.uniform(-zmax, zmax, n_random)
    near_seam = 1.0 + rng.uniform(-1e-3, 1e-3, 20)
    return np.unique(np.concatenate([[0.0], pos, -pos, extra, near_seam, -near_seam]))


def default_x_samples(weight, seed=0, n_grid=101, n_random=100):
    rng = np.random.default_rng(seed + 1)
    grid = np.linspace(weight.a, weight.b, n_grid)
    extra = rng.uniform(weight.a, weight.b, n_random)
    return np.unique(np.concatenate([grid, extra, [weight.c]]))


def growth_constants(F):
    """Constants (c0, c1, c2) of the linear-growth bounds for F = w f.

    Uses f(z) <= |z| and f(z) >= |z|/2 - k with k the maximum of
    |z|/2 - f(z), attained at |z| = 1 or at (2/mu)**(1/(mu-1)).
    """
    mu = F.profile.mu
    zs = max(1.0, (2.0 / mu) ** (1.0 / (mu - 1.0)))
    k = max(0.5 - float(F.profile.f(1.0)), 0.5 * zs - float(F.profile.f(zs)), 0.0)
    m = F.weight.m
    return 0.5 * m, F.weight.w_max, m * k


def verify_hypotheses(F, z_samples=None, x_samples=None, seed=0, lam=None,
                      hoelder_C=1.0, rtol=1e-12):
    """Check linear growth, mu-ellipticity and Hoelder dependence of D_z F.

    Every inequality is tested at every sample; a violated inequality sets
    its flag to False and records the worst sample in ``witnesses``.
    ``lam`` overrides the derived ellipticity constant m (mu-1)/mu.
    """
    z = default_z_samples(seed) if z_samples is None else np.asarray(z_samples, float)
    x = default_x_samples(F.weight, seed) if x_samples is None else np.asarray(x_samples, float)
    if z.size == 0 or x.size == 0:
        raise DomainError("sample sets must be non-empty")
    mu, alpha = F.profile.mu, F.weight.alpha
    c0, c1, c2 = growth_constants(F)
    lam_derived = F.weight.m * F.profile.ellipticity
    lam = lam_derived if lam is None else float(lam)
    witnesses = {}

    X, Z = np.meshgrid(x, z, indexing="ij")
    Fv = F.F(X, Z)
    az = np.abs(Z)
    scale = 1.0 + az
    low = Fv - (c0 * az - c2)
    up = c1 * (1.0 + az) - Fv
    h1 = bool(np.all(low >= -rtol * scale) and np.all(up >= -rtol * scale))
    if not h1:
        i = np.unravel_index(np.argmin(np.minimum(low, up)), low.shape)
        witnesses["H1"] = {"x": float(X[i]), "z": float(Z[i])}

    ell = F.Dz2F(X, Z) * (1.0 + Z * Z) ** (mu / 2.0) - lam
    h2 = bool(np.all(ell >= -rtol))
    if not h2:
        i = np.unravel_index(np.argmin(ell), ell.shape)
        witnesses["H2"] = {"x": float(X[i]), "z": float(Z[i]), "defect": float(ell[i])}

    # Hoelder modulus of D_z F over all sampled pairs; |f'| enters as a factor
    fp = np.abs(F.profile.fprime(z))
    xi, xj = np.triu_indices(x.size, k=1)
    dist = np.abs(x[xi] - x[xj]) ** alpha
    dw = np.abs(F.weight(x[xi]) - F.weight(x[xj]))
    ratio = dw / dist
    C_emp = float(np.max(ratio) * np.max(fp)) if ratio.size else 0.0
    h3 = bool(C_emp <= hoelder_C * (1.0 + rtol))
    if not h3:
        p = int(np.argmax(ratio))
        witnesses["H3"] = {"x": float(x[xi[p]]), "x0": float(x[xj[p]]),
                           "z": float(z[int(np.argmax(fp))])}
    return HypothesisReport(c0=c0, c1=c1, c2=c2, lam=lam, hoelder_C=float(hoelder_C),
                            hoelder_C_empirical=C_emp, h1_pass=h1, h2_pass=h2,
                            h3_pass=h3, seed=int(seed), n_z=int(z.size),
                            n_x=int(x.size), witnesses=witnesses)
