"""Regularity diagnostics along a vanishing-viscosity sequence.

Threshold constants of the Sobolev and dimension estimates, L^p sweeps of
the gradients, translation (Nikolskii) seminorms, the weighted
difference quotient of V_kappa, and jump detection at the weight
minimiser.
"""
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bv import lp_gradient_norm, write_columns
from .errors import BVLabError, DomainError


class NoJump(BVLabError):
    """Raised by :func:`jump_detect` when the data look Sobolev."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _exact(v):
    # decimal literal of the float, so 1.4 is 7/5
    return Fraction(repr(float(v)))


@dataclass(frozen=True)
class Thresholds:
    mu: float
    alpha: float
    n: int
    p_max: float
    mu_sobolev_max: float
    mu_dim_max: float
    dim_bound: float
    kappa_interval: tuple
    autonomous_dim_bound: float

    @property
    def kappa_empty(self):
        return self.kappa_interval is None

    @property
    def vacuous(self):
        """p_max <= 1: no integrability gain beyond BV is predicted."""
        return self.p_max <= 1.0

    @property
    def kappa_mid(self):
        if self.kappa_interval is None:
            return None
        lo, hi = self.kappa_interval
        return 0.5 * (lo + hi)

    def to_dict(self):
        return {"mu": self.mu, "alpha": self.alpha, "n": self.n, "p_max": self.p_max,
                "mu_sobolev_max": self.mu_sobolev_max, "mu_dim_max": self.mu_dim_max,
                "dim_bound": self.dim_bound,
                "kappa_interval": None if self.kappa_interval is None else list(self.kappa_interval),
                "autonomous_dim_bound": self.autonomous_dim_bound, "vacuous": self.vacuous}


def thresholds(mu, alpha, n=1):
    """Threshold constants, computed in rational arithmetic from the decimal inputs.

    The kappa interval is [(mu+1)/2, 1 + alpha/(2n)) intersected with
    (1, 2); ``None`` when empty.
    """
    if not float(mu) > 1.0:
        raise DomainError("mu must exceed 1")
    if not 0.0 < float(alpha) < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    n = int(n)
    m, a = _exact(mu), _exact(alpha)
    p_max = (3 - m) * n / (2 * n - a)
    lo = max((m + 1) / 2, Fraction(1))
    hi = min(1 + a / (2 * n), Fraction(2))
    kappa = (float(lo), float(hi)) if lo < hi else None
    return Thresholds(mu=float(mu), alpha=float(alpha), n=n, p_max=float(p_max),
                      mu_sobolev_max=float(1 + a / n),
                      mu_dim_max=float(Fraction(3 * n) / (3 * n - a)),
                      dim_bound=float(n - a / 2), kappa_interval=kappa,
                      autonomous_dim_bound=float(n - 1))


def v_kappa(xi, kappa):
    """V(xi) = (1 + xi^2)^((1 - kappa)/2) xi, evaluated without overflow."""
    kappa = float(kappa)
    if not 1.0 < kappa < 2.0:
        raise DomainError("kappa must lie in (1, 2)")
    xi = np.asarray(xi, dtype=float)
    return (np.exp((1.0 - kappa) * np.log(np.hypot(1.0, xi))) * xi)[()]


def _window_cells(grid, K):
    lo, hi = float(K[0]), float(K[1])
    if not (grid.a <= lo <= hi <= grid.b):
        raise DomainError("window K must lie inside the grid interval")
    return grid.cells_in((lo, hi)), min(lo - grid.a, grid.b - hi)


def default_h_range(grid, K):
    """Dyadic shifts from 4 dx up to half the distance of K to the boundary."""
    _, dist = _window_cells(grid, K)
    hs, h = [], 4 * grid.dx
    while h <= 0.5 * dist + 1e-12 * grid.dx:
        hs.append(h)
        h *= 2.0
    return hs


def _shift_cells(grid, h):
    s = h / grid.dx
    j = int(round(s))
    if j < 1 or abs(s - j) > 1e-9 * max(1.0, s):
        raise DomainError(f"shift {h!r} is not a positive multiple of the cell size")
    return j


@dataclass
class NikolskiiReport:
    theta: float
    kappa: float
    K: tuple
    values: dict
    sup: float
    weighted: dict = field(default_factory=dict)
    weighted_quantity: float = None

    def to_dict(self):
        return {"theta": self.theta, "kappa": self.kappa, "K": list(self.K),
                "values": {repr(h): v for h, v in self.values.items()}, "sup": self.sup,
                "weighted": {repr(h): v for h, v in self.weighted.items()},
                "weighted_quantity": self.weighted_quantity}


def nikolskii_seminorm(field_, grid, theta, K, h_range=None, kappa=None, mu=None, alpha=None):
    """sup over h of (sum_{x in K} |field(x+h) - field(x)| dx) / h^theta.

    ``field_`` holds one value per cell; x runs over cell midpoints in K
    and h over dyadic multiples of dx no larger than dist(K, boundary).
    When ``kappa``, ``mu`` and ``alpha`` are given, the weighted V_kappa
    quotient is tabulated on the same shifts.
    """
    field_ = np.asarray(field_, dtype=float)
    if field_.shape != (grid.m,):
        raise DomainError("field must hold one value per cell")
    mask, dist = _window_cells(grid, K)
    hs = default_h_range(grid, K) if h_range is None else [float(h) for h in h_range]
    if not hs:
        raise DomainError("empty shift range; enlarge K's distance to the boundary")
    idx = np.flatnonzero(mask)
    values, weighted = {}, {}
    for h in hs:
        if h > dist * (1 + 1e-12):
            raise DomainError(f"shift {h} exceeds dist(K, boundary) = {dist}")
        j = _shift_cells(grid, h)
        diff = np.abs(field_[idx + j] - field_[idx])
        values[h] = float(np.sum(diff) * grid.dx) / h ** theta
        if kappa is not None:
            weighted[h] = weighted_fractional(field_[idx], field_[idx + j], kappa, mu, alpha,
                                              h, grid.dx)
    return NikolskiiReport(theta=float(theta), kappa=None if kappa is None else float(kappa),
                           K=(float(K[0]), float(K[1])), values=values,
                           sup=max(values.values()), weighted=weighted,
                           weighted_quantity=max(weighted.values()) if weighted else None)


def weighted_fractional(d_x, d_xh, kappa, mu, alpha, h, dx):
    """Riemann sum of |V(d(x+h)) - V(d(x))|^2 h^-alpha (1+d(x)^2+d(x+h)^2)^(-(2(1-kappa)+mu)/2)."""
    d0 = np.asarray(d_x, dtype=float)
    d1 = np.asarray(d_xh, dtype=float)
    if d0.shape != d1.shape:
        raise DomainError("paired fields must match")
    tau = v_kappa(d1, kappa) - v_kappa(d0, kappa)
    expo = -(2.0 * (1.0 - kappa) + mu) / 2.0
    damp = np.exp(expo * np.log1p(d0 * d0 + d1 * d1))
    return float(np.sum(tau * tau * damp) * dx) / h ** alpha


def weighted_fractional_sup(field_, grid, kappa, mu, alpha, K, h_range=None):
    """Largest weighted quotient over the dyadic shift range."""
    return nikolskii_seminorm(field_, grid, 0.0, K, h_range, kappa, mu, alpha).weighted_quantity


# ---------------------------------------------------------------------------
# L^p sweeps

def lp_sweep(states, p_list, K=None, quantity="norm"):
    """Table (k, p) -> ||u_k'||_{L^p(K)} (or the integral when quantity='integral').

    Returns ``(table, ratios)`` where ratios[(k, p)] compares state k with
    the previous state of the list.
    """
    if quantity not in ("norm", "integral"):
        raise DomainError("quantity must be 'norm' or 'integral'")
    table, ratios = {}, {}
    prev = None
    for st in states:
        for p in p_list:
            v = lp_gradient_norm(st.u_k, p, K)
            if quantity == "integral":
                v = v ** float(p)
            table[(st.k, float(p))] = v
            if prev is not None:
                ratios[(st.k, float(p))] = v / table[(prev, float(p))]
        prev = st.k
    return table, ratios


def growth_ratio(table, p, k0, k1):
    return table[(k1, float(p))] / table[(k0, float(p))]


def write_lp_csv(path, table):
    ks = sorted({k for k, _ in table})
    ps = sorted({p for _, p in table})
    cols = {"k": ks}
    for p in ps:
        cols[f"p={p:g}"] = [table[(k, p)] for k in ks]
    write_columns(path, cols)


def write_nikolskii_csv(path, reports):
    """One row per shift h; one column per report label (dict label -> report)."""
    hs = sorted({h for r in reports.values() for h in r.values})
    cols = {"h": hs}
    for label, r in reports.items():
        cols[f"seminorm_{label}"] = [r.values.get(h, math.nan) for h in hs]
        if r.weighted:
            cols[f"weighted_{label}"] = [r.weighted.get(h, math.nan) for h in hs]
    write_columns(path, cols)


# ---------------------------------------------------------------------------
# jump detection

@dataclass
class JumpReport:
    location: float
    size: float
    table: dict
    eps_limits: dict
    converged: bool
    statistic: float
    threshold: float

    def to_dict(self):
        return {"location": self.location, "size": self.size,
                "table": [{"k": k, "eps": e, "J": v} for (k, e), v in sorted(self.table.items())],
                "eps_limits": {str(k): v for k, v in self.eps_limits.items()},
                "converged": self.converged, "statistic": self.statistic,
                "threshold": self.threshold}


def _aitken(a, b, c):
    """Limit of a geometric-type sequence a, b, c (None if not contracting)."""
    d1, d2 = b - a, c - b
    if d1 == 0.0:
        return a
    r = d2 / d1
    if not r > 1.0:
        return None
    # J(eps) = S + A eps^beta on dyadic eps gives ratio r = 2^beta
    return a - d1 / (r - 1.0)


def eps_extrapolate(J):
    """Extrapolate J(eps) on increasing dyadic windows to eps -> 0.

    Uses the three smallest windows, where the power law is cleanest;
    falls back to the smallest-window value when the differences do not
    grow (linear data give ratio 2 and extrapolate to ~0).
    """
    J = [float(v) for v in J]
    if len(J) < 3:
        return J[0]
    S = _aitken(*J[:3])
    return J[0] if S is None else S


def jump_detect(states, window_eps=None, c=0.0, accept_ratio=1.02):
    """Locate and size the jump emerging at ``c`` along a viscosity sequence.

    J(k, eps) = u_k(c + eps) - u_k(c - eps) is tabulated on dyadic windows
    (default dx * 2^j, j = 0..4).  For every k the windows are
    extrapolated to eps -> 0; the last two k must agree to ``accept_ratio``
    and a last-three Aitken step in k gives the size.  The location is the
    mean of the midpoints of the cells of maximal slope at the largest k.

    Raises :class:`NoJump` when the eps-extrapolated J at the largest k is
    below 10 dx max|u_1'| (slopes of the first state).
    """
    if len(states) < 3:
        raise DomainError("jump detection needs at least three states")
    grid = states[-1].u_k.grid
    dx = grid.dx
    eps = [dx * 2 ** j for j in range(5)] if window_eps is None else sorted(map(float, window_eps))
    if not (grid.a <= c - eps[-1] and c + eps[-1] <= grid.b):
        raise DomainError("windows leave the domain")
    table, limits = {}, {}
    for st in states:
        J = [float(st.u_k(c + e) - st.u_k(c - e)) for e in eps]
        for e, v in zip(eps, J):
            table[(st.k, e)] = v
        limits[st.k] = eps_extrapolate(J)
    ks = [st.k for st in states]
    s_last = limits[ks[-1]]
    thr = 10.0 * dx * float(np.max(np.abs(states[0].u_k.slopes)))
    slopes = np.abs(states[-1].u_k.slopes)
    top = np.flatnonzero(slopes >= slopes.max() * (1.0 - 1e-12))
    location = float(np.mean(grid.midpoints[top]))
    S = [limits[k] for k in ks[-3:]]
    d1, d2 = S[1] - S[0], S[2] - S[1]
    if d1 != 0.0 and 0.0 <= d2 / d1 < 1.0:
        size = S[2] - d2 * d2 / (d2 - d1)
    else:
        size = S[2]
    conv = abs(S[2]) > 0 and abs(S[2] / S[1]) <= accept_ratio and abs(S[1] / S[2]) <= accept_ratio
    report = JumpReport(location=location, size=float(size), table=table, eps_limits=limits,
                        converged=bool(conv), statistic=float(s_last), threshold=thr)
    if s_last < thr:
        raise NoJump(f"extrapolated J = {s_last:.3g} below threshold {thr:.3g}", report)
    return report


def write_json(path, obj):
    """JSON with sorted keys; non-finite floats as strings."""
    def fix(o):
        if isinstance(o, dict):
            return {str(k): fix(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [fix(v) for v in o]
        if isinstance(o, (float, np.floating)):
            return float(o) if math.isfinite(o) else repr(float(o))
        if isinstance(o, np.integer):
            return int(o)
        return o
    with open(path, "w", newline="\n") as fh:
        json.dump(fix(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
