"""Vanishing-viscosity approximation of the weighted linear-growth problem.

For each k the integrand is stabilised to

    F_k(x, z) = w(x) f(z) + eps_k (1 + z**2),   eps_k = 1 / (2 k**2 A_k),

which is strictly convex with a unique W^{1,2} minimiser under Dirichlet
data.  In one dimension stationarity means the flux
``q = w f'(u') + 2 eps u'`` is constant, so the minimiser is found by
shooting on that constant.  A damped Newton method on the nodal values is
kept as an independent check.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .bv import BVFunction1D, Grid1D, lp_gradient_norm, relaxed_energy, write_columns
from .errors import BracketError, DomainError, NewtonDivergence, SolverFailure

log = logging.getLogger(__name__)

DEFAULT_P_LIST = (1.0, 1.05, 1.2, 2.0)


def _flux(F, W, eps, d):
    return W * F.profile.fprime(d) + 2.0 * eps * d


def regularized_energy(F, eps, u, weight_rule="min"):
    """Discrete energy of the stabilised integrand for an atom-free ``u``."""
    if u.atoms:
        raise DomainError("regularized energy is defined for atom-free functions")
    W = F.weight.cell_weights(u.grid.nodes, weight_rule)
    d = u.slopes
    return float(np.sum(W * F.profile.f(d) + eps * (1.0 + d * d)) * u.grid.dx)


def regularized_gradient(F, eps, u, weight_rule="min"):
    """Gradient of :func:`regularized_energy` with respect to interior nodal values."""
    W = F.weight.cell_weights(u.grid.nodes, weight_rule)
    q = _flux(F, W, eps, u.slopes)
    return q[:-1] - q[1:]


def _invert_flux(profile, W, eps, C, tol=4e-16, max_iter=200):
    """Solve W_i f'(d_i) + 2 eps d_i = C for every cell.

    Newton on y = f'(d) in (-1, 1), safeguarded by a bracket; the map
    y -> W y + 2 eps g(y) is increasing with derivative W + 2 eps / f''(g(y)).
    """
    W = np.asarray(W, dtype=float)
    lo = np.full(W.shape, -1.0)
    hi = np.full(W.shape, 1.0)
    y = np.clip(C / W, -0.5, 0.5)
    scale = np.abs(C) + W
    done = np.zeros(W.shape, dtype=bool)
    for _ in range(max_iter):
        d = profile.g(y)
        r = W * y + 2.0 * eps * d - C
        done = np.abs(r) <= tol * scale
        if np.all(done):
            return d
        pos = r > 0.0
        hi = np.where(pos, y, hi)
        lo = np.where(pos, lo, y)
        slope = W + 2.0 * eps / profile.fsecond(d)
        step = y - r / slope
        bad = ~((step > lo) & (step < hi))
        mid = 0.5 * (lo + hi)
        ynew = np.where(bad, mid, step)
        stalled = (ynew == y) | (hi - lo <= 2.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi))))
        done |= stalled
        if np.all(done):
            return profile.g(np.where(stalled, ynew, y))
        y = np.where(done, y, ynew)
    raise NewtonDivergence("inner flux inversion did not converge", last=profile.g(y))


def solve_shooting(F, eps, grid, bc, weight_rule="min", tol=1e-12, max_iter=200):
    """Minimise the stabilised energy by shooting on the flux constant.

    Returns ``(u, C)`` where the cell slopes solve ``W_i f'(d_i) + 2 eps d_i = C``
    and C is chosen so that the slopes integrate to ``y2 - y1``.
    """
    eps = float(eps)
    if not eps > 0.0:
        raise DomainError("shooting needs eps > 0")
    y1, y2 = map(float, bc)
    target = y2 - y1
    W = F.weight.cell_weights(grid.nodes, weight_rule)
    dx = grid.dx
    ftol = tol * (1.0 + abs(target))

    def phi(C):
        d = _invert_flux(F.profile, W, eps, C)
        return float(np.sum(d) * dx - target), d

    r0, d0 = phi(0.0)
    if abs(r0) <= ftol:
        return BVFunction1D.from_slopes(grid, d0, y1), 0.0

    width = 2.0 * float(np.min(W)) + 1.0
    lo, hi = -width, width
    rlo, _ = phi(lo)
    rhi, _ = phi(hi)
    while rlo > 0.0 or rhi < 0.0:
        width *= 2.0
        if width > 2.0 ** 60:
            raise BracketError("no sign change of the shooting residual up to 2**60")
        if rlo > 0.0:
            lo, (rlo, _) = -width, phi(-width)
        if rhi < 0.0:
            hi, (rhi, _) = width, phi(width)
    # narrow with the known root at C=0 side information
    if r0 < 0.0:
        lo, rlo = 0.0, r0
    else:
        hi, rhi = 0.0, r0

    # Illinois regula falsi with bisection fallback
    side = 0
    best = None
    for _ in range(max_iter):
        C = hi - rhi * (hi - lo) / (rhi - rlo) if rhi != rlo else 0.5 * (lo + hi)
        if not (lo < C < hi):
            C = 0.5 * (lo + hi)
        r, d = phi(C)
        if best is None or abs(r) < abs(best[0]):
            best = (r, C, d)
        if abs(r) <= ftol:
            break
        if r > 0.0:
            hi, rhi = C, r
            if side == 1:
                rlo *= 0.5
            side = 1
        else:
            lo, rlo = C, r
            if side == -1:
                rhi *= 0.5
            side = -1
        if np.nextafter(lo, hi) >= hi:
            break
    r, C, d = best
    if abs(r) > ftol:
        log.debug("shooting stopped at float resolution: residual %.3e", r)
    return BVFunction1D.from_slopes(grid, d, y1), float(C)


def _tridiag_solve(diag, off, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return solve_banded((1, 1), ab, rhs)


def solve_newton(F, eps, grid, bc, init, weight_rule="min", tol=1e-12, max_iter=100):
    """Damped Newton on interior nodal values with a tridiagonal Hessian.

    Stops once the max-norm of the discrete Euler-Lagrange residual
    (flux differences) is below ``tol * (1 + |mean flux|)``.  Raises
    :class:`NewtonDivergence` after ``max_iter`` steps with the last iterate.
    """
    eps = float(eps)
    if not eps > 0.0:
        raise DomainError("Newton solve needs eps > 0")
    y1, y2 = map(float, bc)
    if init.atoms:
        raise DomainError("initial guess must be atom-free")
    if init.grid != grid:
        raise DomainError("initial guess lives on a different grid")
    if abs(init.trace_a - y1) > 1e-12 * (1 + abs(y1)) or abs(init.trace_b - y2) > 1e-12 * (1 + abs(y2)):
        raise DomainError("initial guess must carry the boundary values")
    W = F.weight.cell_weights(grid.nodes, weight_rule)
    dx = grid.dx
    prof = F.profile
    # iterate on cell slopes; a nodal update p changes them by diff(p)/dx
    d = np.array(init.slopes, dtype=float)
    d += (y2 - y1 - float(np.sum(d) * dx)) / grid.length

    def energy(s):
        return float(np.sum(W * prof.f(s) + eps * (1.0 + s * s)) * dx)

    def residual(s):
        q = _flux(F, W, eps, s)
        return q[:-1] - q[1:], q

    g, q = residual(d)
    E = energy(d)
    it = 0
    while True:
        res = float(np.max(np.abs(g))) if g.size else 0.0
        if res <= tol * (1.0 + abs(float(np.mean(q)))):
            return BVFunction1D.from_slopes(grid, d, y1), it
        if it >= max_iter:
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations "
                                   f"(residual {res:.3e})",
                                   last=BVFunction1D.from_slopes(grid, d, y1), residual=res)
        kappa = (W * prof.fsecond(d) + 2.0 * eps) / dx
        p = _tridiag_solve(kappa[:-1] + kappa[1:], -kappa[1:-1], -g)
        dd = np.diff(np.concatenate([[0.0], p, [0.0]])) / dx
        slope = float(g @ p)
        t = 1.0
        while True:
            trial = d + t * dd
            Et = energy(trial)
            if Et <= E + 1e-4 * t * slope:
                break
            if abs(Et - E) <= 64 * np.spacing(abs(E)) + 1e-15 * abs(E):
                gt, _ = residual(trial)
                if np.max(np.abs(gt)) < res:
                    break
            t *= 0.5
            if t < 1e-12:
                break
        d = trial
        E = Et
        g, q = residual(d)
        it += 1


def el_residual(F, eps, u, n_sines=8, hats=True, weight_rule="min"):
    """Largest normalised weak Euler-Lagrange residual over a fixed test bank.

    The bank holds the hat function at every interior node and the
    interpolants of sin(j pi (x - a)/(b - a)), j = 1..n_sines.  Each
    residual |int D_z F_k(x, u') phi' dx| is divided by the W^{1,1} norm
    of phi.
    """
    grid = u.grid
    W = F.weight.cell_weights(grid.nodes, weight_rule)
    q = _flux(F, W, eps, u.slopes)
    dx = grid.dx
    out = 0.0
    if hats and grid.m > 1:
        out = float(np.max(np.abs(q[:-1] - q[1:]))) / (2.0 + dx)
    x = grid.nodes
    for j in range(1, n_sines + 1):
        phi = np.sin(j * np.pi * (x - grid.a) / grid.length)
        phi[0] = phi[-1] = 0.0
        dphi = np.diff(phi)
        num = abs(float(np.sum(q * dphi)))
        ap = np.abs(phi)
        norm = float(np.sum(0.5 * (ap[:-1] + ap[1:])) * dx + np.sum(np.abs(dphi)))
        out = max(out, num / norm)
    return out


@dataclass
class ViscosityConfig:
    grid: Grid1D
    bc: tuple
    k_max: int = 512
    k_schedule: tuple = None
    newton_tol: float = 1e-12
    newton_max_iter: int = 100
    weight_rule: str = "min"
    verify: bool = True
    p_list: tuple = DEFAULT_P_LIST
    lp_window: tuple = None

    def __post_init__(self):
        if int(self.k_max) < 1:
            raise DomainError("k_max must be >= 1")
        self.k_max = int(self.k_max)
        if self.k_schedule is None:
            ks, k = [], 1
            while k <= self.k_max:
                ks.append(k)
                k *= 2
            self.k_schedule = tuple(ks)
        else:
            self.k_schedule = tuple(int(k) for k in self.k_schedule)
        ks = self.k_schedule
        if not ks or ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise DomainError("k_schedule must be strictly increasing positive integers")
        if not (self.newton_tol > 0 and self.newton_max_iter > 0):
            raise DomainError("tolerances must be positive")
        self.bc = tuple(map(float, self.bc))


@dataclass
class ViscosityReport:
    flux_residual: float
    el_residual: float
    energy: object
    gradient_linf: float
    lp_norms: dict
    newton_iterations: int = None
    cross_solver_linf: float = None

    def to_dict(self):
        return {"flux_residual": self.flux_residual, "el_residual": self.el_residual,
                "energy": self.energy.to_dict(), "gradient_linf": self.gradient_linf,
                "lp_norms": {repr(float(p)): v for p, v in self.lp_norms.items()},
                "newton_iterations": self.newton_iterations,
                "cross_solver_linf": self.cross_solver_linf}


@dataclass
class ViscosityState:
    k: int
    A_k: float
    eps_k: float
    u_k: BVFunction1D
    flux_C: float
    report: ViscosityReport = field(repr=False)

    def to_dict(self):
        return {"k": self.k, "A_k": self.A_k, "eps_k": self.eps_k, "flux_C": self.flux_C,
                **self.report.to_dict()}


def dirichlet_mass(u):
    """A = 1 + int (1 + |u'|^2) dx on the grid."""
    d = u.slopes
    return 1.0 + float(np.sum(1.0 + d * d) * u.grid.dx)


def flux_spread(F, eps, u, weight_rule="min"):
    W = F.weight.cell_weights(u.grid.nodes, weight_rule)
    q = _flux(F, W, eps, u.slopes)
    mean = float(np.mean(q))
    return float(np.max(np.abs(q - mean))), mean


def solve_state(F, k, A, cfg, init=None):
    eps = 1.0 / (2.0 * k * k * A)
    grid, bc, rule = cfg.grid, cfg.bc, cfg.weight_rule
    u, C = solve_shooting(F, eps, grid, bc, weight_rule=rule)
    newton_it = linf = None
    if cfg.verify:
        start = BVFunction1D.affine(grid, *bc) if init is None else init
        un, newton_it = solve_newton(F, eps, grid, bc, start, weight_rule=rule,
                                     tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
        linf = float(np.max(np.abs(un.values - u.values)))
    spread, _ = flux_spread(F, eps, u, rule)
    K = cfg.lp_window
    report = ViscosityReport(
        flux_residual=spread,
        el_residual=el_residual(F, eps, u, weight_rule=rule),
        energy=relaxed_energy(u, F, bc, weight_rule=rule),
        gradient_linf=float(np.max(np.abs(u.slopes))),
        lp_norms={float(p): lp_gradient_norm(u, p, K) for p in cfg.p_list},
        newton_iterations=newton_it, cross_solver_linf=linf)
    return ViscosityState(k=k, A_k=A, eps_k=eps, u_k=u, flux_C=C, report=report)


def run_sequence(F, cfg):
    """Solve the stabilised problems along ``cfg.k_schedule``.

    A_k is the discrete Dirichlet mass of the previous iterate (the affine
    interpolant of the boundary data before the first step), so eps_k
    decreases strictly along the schedule.
    """
    prev = BVFunction1D.affine(cfg.grid, *cfg.bc)
    states = []
    for k in cfg.k_schedule:
        A = dirichlet_mass(prev)
        try:
            st = solve_state(F, k, A, cfg, init=prev)
        except (NewtonDivergence, BracketError) as exc:
            raise SolverFailure(f"solve failed at k={k} (mu={F.mu}, alpha={F.alpha}, "
                                f"bc={cfg.bc}): {exc}", k=k) from exc
        log.info("k=%d eps=%.3e C=%.15g E=%.12g max|u'|=%.4g", k, st.eps_k, st.flux_C,
                 st.report.energy.total, st.report.gradient_linf)
        states.append(st)
        prev = st.u_k
    return states


def energy_monotone(states, slack=1e-10):
    """True when the unregularised energy is non-increasing along ``states``."""
    E = [s.report.energy.total for s in states]
    return all(b <= a + slack for a, b in zip(E, E[1:]))


def dump_states(states, out_dir, tag):
    """Write ``run_<tag>/k<k>.csv`` (x, u, slope) and ``k<k>.json`` per state.

    The slope column holds the slope of the cell to the right of each node;
    the last node repeats the last cell slope.
    """
    root = Path(out_dir) / f"run_{tag}"
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for st in states:
        u = st.u_k
        s = u.slopes
        write_columns(root / f"k{st.k}.csv",
                      {"x": u.grid.nodes, "u": u.values, "slope": np.append(s, s[-1])})
        (root / f"k{st.k}.json").write_text(json.dumps(st.to_dict(), indent=2, sort_keys=True) + "\n")
        paths.append(root / f"k{st.k}.csv")
    return paths
