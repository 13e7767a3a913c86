"""Semi-analytic ground truth for the weighted example problem.

Minimise the relaxed energy of ``F(x, z) = (1 + |x|**alpha) f(z)`` on
[a, b] with u(a) = 0, u(b) = M.  Away from jumps the flux
``w f'(u')`` is constant, so slopes are ``g(s / w)`` for a shift s in
(0, m].  The largest datum reachable without a jump is

    M0 = int_a^b g(m / w(t)) dt,

finite iff mu > 1 + alpha.  For M < M0 the minimiser is Sobolev with
s = C + m < m.  For M > M0 the flux saturates at s = m and the remaining
rise M - M0 sits in one atom at the weight minimiser c, where it is
cheapest (the recession function is |z|, priced by w(c) = m).
"""
import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import brentq

from .bv import BVFunction1D, EnergyBreakdown, Grid1D, relaxed_energy
from .errors import BranchError, DomainError
from .integrand import HoelderWeight, MuEllipticProfile, NonAutonomousIntegrand

# regression value of M0(1.4, 0.25) on [-1, 1]; both quadrature routes reproduce it
M0_FIG1 = 7.817049736455771

_GL_CACHE = {}


def _gauss(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _check_params(mu, alpha):
    mu, alpha = float(mu), float(alpha)
    if not (1.0 < mu < 2.0):
        raise DomainError(f"mu must lie in (1, 2), got {mu!r}")
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return mu, alpha


def is_finite_case(mu, alpha):
    """M0 < inf iff alpha/(1 - mu) > -1, i.e. mu > 1 + alpha."""
    mu, alpha = _check_params(mu, alpha)
    return alpha / (1.0 - mu) > -1.0


def substitution_power(mu, alpha):
    """Exponent gamma of t = s**gamma that makes the endpoint integrand vanish.

    Near the minimiser g(m/w) behaves like |t|**beta' with
    beta' = alpha/(1 - mu); after substitution the integrand is
    ~ s**(gamma (1 + beta') - 1), which is at least s**1.
    """
    beta = 1.0 + float(alpha) / (1.0 - float(mu))
    if beta <= 0.0:
        return 3
    return max(1, math.ceil(2.0 / beta))


def _slope_density(profile, weight, shift, x):
    """g(shift / w(x)) evaluated through the gap (w - shift)/w."""
    w = weight(x)
    gap = ((weight.m - shift) + weight.excess(x)) / w
    return profile.g_gap(gap)


def _substituted_density(profile, weight, shift, side, L, s, gamma):
    """g(shift/w) dt/ds at t = L s**gamma.

    On the power branch of g the product is formed in log space: g can
    exceed the float range where the Jacobian s**(gamma-1) is tiny.
    Nodes where t underflows contribute their limit 0.
    """
    logs = np.log(s)
    t = L * np.exp(gamma * logs)
    log_jac = math.log(L * gamma) + (gamma - 1) * logs
    x = weight.c + side * t
    w = weight(x)
    num = weight.excess(x) + (weight.m - shift)
    out = np.zeros_like(s)
    ok = num > 0.0
    gap = num[ok] / w[ok]
    mu = profile.mu
    power = gap < 1.0 / mu
    vals = np.empty_like(gap)
    with np.errstate(divide="ignore"):
        vals[power] = np.exp(np.log(mu * gap[power]) / (1.0 - mu) + log_jac[ok][power])
    vals[~power] = profile.g_gap(gap[~power]) * np.exp(log_jac[ok][~power])
    out[ok] = vals
    return out


def _graded_half(profile, weight, shift, side, gamma, order, levels=60, t_min=0.0, L=None):
    """int_0^L g(shift/w(c + side*t)) dt on geometrically graded s-panels.

    t = L * s**gamma with panels [2**-(j+1), 2**-j] in s.  ``L`` defaults
    to the distance from c to the endpoint on ``side``.  When ``t_min``
    is positive the range is truncated to t >= t_min.
    """
    c = weight.c
    if L is None:
        L = (weight.b - c) if side > 0 else (c - weight.a)
    if L <= 0.0:
        return 0.0
    xg, wg = _gauss(order)
    s_lo_cut = (t_min / L) ** (1.0 / gamma) if t_min > 0.0 else 0.0
    total = 0.0
    # sum smallest panels first
    for j in range(levels - 1, -1, -1):
        lo, hi = 2.0 ** -(j + 1), 2.0 ** -j
        if hi <= s_lo_cut:
            continue
        lo = max(lo, s_lo_cut)
        s = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        vals = _substituted_density(profile, weight, shift, side, L, s, gamma)
        total += 0.5 * (hi - lo) * float(wg @ vals)
    return total


def _closed_form_M0(mu, alpha, dps=30):
    """2 mu^{1/(1-mu)} int_0^1 (t^a/(1+t^a))^{1/(1-mu)} dt by tanh-sinh.

    With t = v**k the integrand t**(alpha/(1-mu)) k v**(k-1) is bounded,
    which tanh-sinh needs when the exponent is close to -1.
    """
    k = substitution_power(mu, alpha)
    with mpmath.workdps(dps):
        mu_, al = mpmath.mpf(mu), mpmath.mpf(alpha)
        p = 1 / (1 - mu_)

        def integrand(v):
            if v == 0:
                return mpmath.mpf(0)
            t = v ** k
            ta = t ** al
            return (ta / (1 + ta)) ** p * k * v ** (k - 1)

        val, err = mpmath.quad(integrand, [0, mpmath.mpf("0.5"), 1], error=True)
        scale = 2 * mu_ ** p
        return float(scale * val), float(scale * err)


@dataclass(frozen=True)
class M0Report:
    """Both quadrature routes for M0 and their diagnostics."""

    mu: float
    alpha: float
    finite: bool
    value: float
    generic: float
    closed_form: float
    route_rel_diff: float
    refinement_rel_diff: float
    gamma: int
    closed_form_error: float = 0.0
    truncation: tuple = field(default=())

    def to_dict(self):
        return _jsonable({
            "mu": self.mu, "alpha": self.alpha, "finite": self.finite, "M0": self.value,
            "generic": self.generic, "closed_form": self.closed_form,
            "route_rel_diff": self.route_rel_diff,
            "refinement_rel_diff": self.refinement_rel_diff, "gamma": self.gamma,
            "closed_form_error": self.closed_form_error,
            "truncation": [{"delta": d, "value": v} for d, v in self.truncation],
        })


def truncated_M0(mu, alpha, deltas, a=-1.0, b=1.0, order=16):
    """int over {delta <= |t - c|} of g(m/w) for each delta (finite in every case).

    In the divergent case these grow without bound as delta -> 0.
    """
    mu, alpha = _check_params(mu, alpha)
    profile, weight = MuEllipticProfile(mu), HoelderWeight(alpha, a, b)
    out = []
    for d in deltas:
        d = float(d)
        if not d > 0.0:
            raise DomainError("truncation radius must be positive")
        levels = int(math.ceil(math.log2(1.0 / d))) + 2
        v = sum(_graded_half(profile, weight, weight.m, side, 1, order, levels=levels, t_min=d)
                for side in (-1, 1))
        out.append((d, v))
    return tuple(out)


def m0_report(mu, alpha, a=-1.0, b=1.0, order=24):
    """Compute M0 by the generic g/w definition and by the closed form.

    The generic route integrates g(m/w) on both sides of c after the
    substitution t = s**gamma, on dyadically graded panels; it is
    repeated at half the Gauss order to measure refinement stability.
    The closed form (valid on [-1, 1]) uses tanh-sinh quadrature in
    mpmath.  In the divergent case a truncation sequence is recorded
    instead and the value is ``inf``.
    """
    mu, alpha = _check_params(mu, alpha)
    gamma = substitution_power(mu, alpha)
    if not is_finite_case(mu, alpha):
        seq = truncated_M0(mu, alpha, [10.0 ** -j for j in (2, 4, 8, 12, 16)], a, b)
        return M0Report(mu, alpha, False, math.inf, math.inf, math.inf, 0.0, 0.0, gamma,
                        truncation=seq)
    profile, weight = MuEllipticProfile(mu), HoelderWeight(alpha, a, b)

    def generic(n):
        return sum(_graded_half(profile, weight, weight.m, side, gamma, n) for side in (-1, 1))

    fine, coarse = generic(order), generic(order // 2)
    if (a, b) == (-1.0, 1.0):
        closed, cerr = _closed_form_M0(mu, alpha)
    else:
        closed, cerr = fine, 0.0
    return M0Report(mu, alpha, True, fine, fine, closed,
                    abs(fine - closed) / abs(closed),
                    abs(fine - coarse) / abs(fine), gamma, cerr)


def compute_M0(mu, alpha, a=-1.0, b=1.0):
    """M0(mu, alpha) or ``math.inf`` when mu <= 1 + alpha."""
    return m0_report(mu, alpha, a, b).value


# ---------------------------------------------------------------------------
# minimisers

@dataclass(frozen=True, eq=False)
class OracleSolution:
    kind: str
    mu: float
    alpha: float
    M: float
    M0: float
    C: float
    jump_size: float
    minimizer: BVFunction1D
    energy: EnergyBreakdown
    continuum_energy: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable({
            "mu": self.mu, "alpha": self.alpha, "M": self.M, "M0": self.M0,
            "kind": self.kind, "C": self.C, "jump_size": self.jump_size,
            "energy": self.energy.to_dict(), "continuum_energy": self.continuum_energy,
            "quadrature": self.diagnostics,
        })

    def to_json(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    """Replace non-finite floats by strings ("inf", "-inf", "nan")."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _weight_for(grid, alpha):
    weight = HoelderWeight(alpha, grid.a, grid.b)
    c = weight.c
    if not (grid.a < c < grid.b):
        raise DomainError("the weight minimiser must be interior")
    k = (c - grid.a) / grid.dx
    if abs(k - round(k)) > 1e-9:
        raise DomainError("the weight minimiser must be a grid node")
    return weight, int(round(k))


def nodal_primitive(profile, weight, grid, shift, gamma, order=10):
    """Nodal values of v(x) = int_a^x g(shift / w(t)) dt (exact cell integrals).

    Cells are integrated in the variable s with |t - c| = s**gamma, so the
    possible singularity at c is removed; each cell uses Gauss-Legendre
    with ``order`` points.  The two cells touching c, where the profile
    may concentrate on scales far below dx, use dyadic grading.
    """
    c = weight.c
    x = grid.nodes
    ic = int(round((c - grid.a) / grid.dx))
    xg, wg = _gauss(order)
    out = np.empty_like(x)
    pieces = {}
    for side, dist in ((1, x[ic:] - c), (-1, c - x[ic::-1])):
        s = dist ** (1.0 / gamma)
        lo, hi = s[1:-1], s[2:]
        half = 0.5 * (hi - lo)
        ss = half[:, None] * xg[None, :] + 0.5 * (hi + lo)[:, None]
        vals = _substituted_density(profile, weight, shift, side, 1.0, ss.ravel(),
                                    gamma).reshape(ss.shape)
        first = _graded_half(profile, weight, shift, side, gamma, 2 * order, L=dist[1])
        pieces[side] = np.concatenate([[0.0, first], first + np.cumsum(half * (vals @ wg))])
    left = pieces[-1]          # int from c down to x[ic - j]
    base = left[-1]            # int_a^c
    out[: ic + 1] = base - left[::-1]
    out[ic:] = base + pieces[1]
    return out


def _continuum_energy(profile, weight, shift, gamma, jump=0.0, order=24):
    """int w f(g(shift/w)) dt over [a, b] plus m * jump."""
    c = weight.c
    xg, wg = _gauss(order)
    total = 0.0
    for side, L in ((1, weight.b - c), (-1, c - weight.a)):
        if L <= 0:
            continue
        for j in range(59, -1, -1):
            lo, hi = 2.0 ** -(j + 1), 2.0 ** -j
            s = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
            t = L * s ** gamma
            xx = c + side * t
            jac = L * gamma * s ** (gamma - 1)
            ok = weight.excess(xx) + (weight.m - shift) > 0.0
            d = _slope_density(profile, weight, shift, xx[ok])
            vals = weight(xx[ok]) * profile.f(d) * jac[ok]
            total += 0.5 * (hi - lo) * float(wg[ok] @ vals)
    return total + weight.m * jump


def solve_sobolev_branch(mu, alpha, grid, M, weight_rule="min", xtol=1e-15):
    """Atom-free minimiser with flux w f'(u') = C + m, C in (-2m, 0).

    C is found by bracketed root finding on the discrete primitive, so
    that the computed trace at b equals M to root-finder accuracy.
    """
    mu, alpha = _check_params(mu, alpha)
    M = float(M)
    if M < 0.0:
        raise DomainError("the oracle covers M >= 0 (reflect for negative data)")
    M0 = compute_M0(mu, alpha, grid.a, grid.b)
    if math.isfinite(M0) and M >= M0:
        raise BranchError(f"M={M} >= M0={M0}: the minimiser has a jump")
    profile = MuEllipticProfile(mu)
    weight, _ = _weight_for(grid, alpha)
    gamma = substitution_power(mu, alpha)
    m = weight.m
    if M == 0.0:
        u = BVFunction1D(grid, np.zeros(grid.m + 1))
        C, shift = -m, 0.0
    else:
        def phi(C):
            return nodal_primitive(profile, weight, grid, C + m, gamma)[-1] - M

        # phi(-m) = -M < 0; push the right end towards 0 until phi > 0
        hi = -m * 1e-3
        while phi(hi) <= 0.0:
            hi *= 1e-3
            if hi > -1e-300:
                raise BranchError("no sign change before C = 0; is M >= M0?")
        C = brentq(phi, -m, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
        shift = C + m
        u = BVFunction1D(grid, nodal_primitive(profile, weight, grid, shift, gamma))
    F = NonAutonomousIntegrand(profile, weight)
    bc = (0.0, M)
    return OracleSolution(
        kind="sobolev", mu=mu, alpha=alpha, M=M, M0=M0, C=float(C), jump_size=0.0,
        minimizer=u, energy=relaxed_energy(u, F, bc, weight_rule),
        continuum_energy=_continuum_energy(profile, weight, shift, gamma) if shift > 0 else 0.0,
        diagnostics={"gamma": gamma, "trace_defect": abs(u.trace_b - M)})


def solve_jump_branch(mu, alpha, grid, M, weight_rule="min"):
    """Saturated flux s = m plus one atom of size M - M0 at the weight minimiser."""
    mu, alpha = _check_params(mu, alpha)
    M = float(M)
    rep = m0_report(mu, alpha, grid.a, grid.b)
    M0 = rep.value
    if not (math.isfinite(M0) and M > M0):
        raise BranchError(f"M={M} <= M0={M0}: no jump")
    profile = MuEllipticProfile(mu)
    weight, _ = _weight_for(grid, alpha)
    gamma = substitution_power(mu, alpha)
    values = nodal_primitive(profile, weight, grid, weight.m, gamma)
    # pin the AC part to exactly M0 so that trace(b) = M
    values = values * (M0 / values[-1])
    jump = M - M0
    u = BVFunction1D(grid, values, [(weight.c, jump)])
    F = NonAutonomousIntegrand(profile, weight)
    return OracleSolution(
        kind="jump", mu=mu, alpha=alpha, M=M, M0=M0, C=None, jump_size=jump,
        minimizer=u, energy=relaxed_energy(u, F, (0.0, M), weight_rule),
        continuum_energy=_continuum_energy(profile, weight, weight.m, gamma, jump),
        diagnostics={"gamma": gamma, "route_rel_diff": rep.route_rel_diff,
                     "refinement_rel_diff": rep.refinement_rel_diff,
                     "closed_form_error": rep.closed_form_error})


def classify(mu, alpha, M, a=-1.0, b=1.0):
    """'jump', 'sobolev' or 'degenerate' (|M - M0| <= 1e-12 (1 + M0))."""
    M0 = compute_M0(mu, alpha, a, b)
    M = float(M)
    if math.isfinite(M0):
        if abs(M - M0) <= 1e-12 * (1.0 + M0):
            return "degenerate"
        if M > M0:
            return "jump"
    return "sobolev"


def solve_oracle(mu, alpha, grid, M, weight_rule="min"):
    kind = classify(mu, alpha, M, grid.a, grid.b)
    if kind == "jump":
        return solve_jump_branch(mu, alpha, grid, M, weight_rule)
    if kind == "degenerate":
        raise BranchError("M equals M0; the boundary case is not resolved")
    return solve_sobolev_branch(mu, alpha, grid, M, weight_rule)


def oracle_energy(sol, F=None, weight_rule="min"):
    if F is None:
        F = NonAutonomousIntegrand.example(sol.mu, sol.alpha, sol.minimizer.grid.a,
                                           sol.minimizer.grid.b)
    return relaxed_energy(sol.minimizer, F, (0.0, sol.M), weight_rule)


def competitors(sol, n=100, seed=0):
    """Seeded competitors with the oracle's boundary data.

    Five families are cycled:

    0. smooth sine perturbation of the continuous part;
    1. the singular part (or a random extra atom) moved to a random node;
    2. the singular part split between two random nodes;
    3. an atom-free ramp of 4 to 16 cells centred at c carrying the
       singular part, or an extra ramp taking mass from the profile;
    4. the continuous part rescaled, with the difference at c as an atom
       or left as a boundary defect.

    Every competitor takes the value 0 at a; families that change the
    total rise leave the mismatch to the boundary penalty.
    """
    rng = np.random.default_rng(seed)
    u = sol.minimizer
    grid = u.grid
    x = grid.nodes
    ic = grid.node_index(float(np.clip(0.0, grid.a, grid.b)))
    J = u.total_jump
    scale = 1.0 + abs(sol.M)

    def random_node(exclude=()):
        while True:
            loc = float(x[rng.integers(1, grid.m)])
            if loc not in exclude:
                return loc

    def moved_mass():
        # jump of the oracle, or mass borrowed from the profile in the Sobolev case
        if J > 0.0:
            return u.values, J
        lam = rng.uniform(0.02, 0.3)
        return u.values * (1.0 - lam), lam * u.values[-1]

    out = []
    for i in range(n):
        fam = i % 5
        if fam == 0:
            j = int(rng.integers(1, 6))
            amp = rng.normal() * 0.05 * scale / j
            v = u.values + amp * np.sin(j * np.pi * (x - grid.a) / grid.length)
            out.append(BVFunction1D(grid, v, u.atoms))
        elif fam == 1:
            base, mass = moved_mass()
            out.append(BVFunction1D(grid, base, [(random_node({float(x[ic])}), mass)]))
        elif fam == 2:
            base, mass = moved_mass()
            lam = rng.uniform(0.1, 0.9)
            l1 = random_node()
            l2 = random_node({l1})
            out.append(BVFunction1D(grid, base, [(l1, lam * mass), (l2, (1.0 - lam) * mass)]))
        elif fam == 3:
            base, mass = moved_mass()
            width = 2 * int(rng.integers(2, 9))
            ramp = np.clip((np.arange(grid.m + 1) - (ic - width // 2)) / width, 0.0, 1.0)
            out.append(BVFunction1D(grid, base + mass * ramp))
        else:
            lam = rng.uniform(0.8, 1.2)
            v = u.values * lam
            rest = sol.M - v[-1]
            if rest > 0.0 and rng.random() < 0.5:
                out.append(BVFunction1D(grid, v, [(float(x[ic]), rest)]))
            else:
                out.append(BVFunction1D(grid, v))
    return out
