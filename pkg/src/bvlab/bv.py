"""Discrete one-dimensional BV functions and the relaxed energy.

A :class:`BVFunction1D` is a continuous piecewise-linear function on a
uniform grid plus finitely many jump atoms.  The function value to the
right of an atom includes its jump, so the trace at ``b`` is the last
nodal value plus the sum of all jumps.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    m: int

    def __post_init__(self):
        m = int(self.m)
        if m < 1 or m & (m - 1):
            raise DomainError(f"cell count must be a power of two, got {self.m!r}")
        if not float(self.a) < float(self.b):
            raise DomainError("grid needs a < b")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def dyadic(cls, exp, a=-1.0, b=1.0):
        return cls(a, b, 2 ** int(exp))

    @property
    def dx(self):
        return (self.b - self.a) / self.m

    @property
    def length(self):
        return self.b - self.a

    @property
    def nodes(self):
        x = self.a + self.dx * np.arange(self.m + 1)
        x[-1] = self.b
        return x

    @property
    def midpoints(self):
        return self.a + self.dx * (np.arange(self.m) + 0.5)

    def node_index(self, x):
        """Index of the node nearest to ``x``."""
        return int(np.clip(np.rint((x - self.a) / self.dx), 0, self.m))

    def cells_in(self, K):
        """Boolean mask of cells whose midpoint lies in the closed interval K."""
        lo, hi = K
        mid = self.midpoints
        return (mid >= lo) & (mid <= hi)


@dataclass(frozen=True)
class EnergyBreakdown:
    ac_part: float
    jump_part: float
    boundary_part: float

    @property
    def total(self):
        return self.ac_part + self.jump_part + self.boundary_part

    def to_dict(self):
        return {"ac_part": self.ac_part, "jump_part": self.jump_part,
                "boundary_part": self.boundary_part, "total": self.total}


@dataclass(frozen=True, eq=False)
class BVFunction1D:
    """Piecewise-linear nodal values plus jump atoms ``(location, jump)``.

    ``slope_data`` optionally carries the cell slopes the values were
    built from.  Differencing rounded nodal values quantises slopes to
    spacing(u)/dx, which on fine grids is far above solver tolerances.
    """

    grid: Grid1D
    values: np.ndarray
    atoms: tuple = field(default=())
    slope_data: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.m + 1,):
            raise DomainError(f"expected {self.grid.m + 1} nodal values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("nodal values must be finite")
        v.setflags(write=False)
        atoms = tuple(sorted((float(x), float(j)) for x, j in self.atoms))
        locs = [x for x, _ in atoms]
        if any(not (self.grid.a < x < self.grid.b) for x in locs):
            raise DomainError("atom locations must be strictly interior")
        if len(set(locs)) != len(locs):
            raise DomainError("atom locations must be pairwise distinct")
        if any(not np.isfinite(j) for _, j in atoms):
            raise DomainError("jumps must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "atoms", atoms)
        if self.slope_data is not None:
            sd = np.array(self.slope_data, dtype=float)
            if sd.shape != (self.grid.m,):
                raise DomainError("slope_data must hold one slope per cell")
            sd.setflags(write=False)
            object.__setattr__(self, "slope_data", sd)

    @classmethod
    def from_slopes(cls, grid, slopes, start=0.0, atoms=()):
        slopes = np.asarray(slopes, dtype=float)
        values = np.concatenate([[start], start + np.cumsum(slopes * grid.dx)])
        return cls(grid, values, atoms, slope_data=slopes)

    @classmethod
    def affine(cls, grid, y1, y2):
        return cls(grid, np.linspace(y1, y2, grid.m + 1))

    @property
    def slopes(self):
        if self.slope_data is not None:
            return self.slope_data
        return np.diff(self.values) / self.grid.dx

    @property
    def total_jump(self):
        return float(sum(j for _, j in self.atoms))

    @property
    def trace_a(self):
        return float(self.values[0])

    @property
    def trace_b(self):
        return float(self.values[-1]) + self.total_jump

    def with_values(self, values):
        return BVFunction1D(self.grid, values, self.atoms)

    def __call__(self, x):
        """Evaluate u (right-continuous at atoms)."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid.nodes, self.values)
        for loc, jump in self.atoms:
            out = out + jump * (x >= loc)
        return out[()]

    def left_limit(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid.nodes, self.values)
        for loc, jump in self.atoms:
            out = out + jump * (x > loc)
        return out[()]

    def reflect(self, M):
        """Return x -> M - u(-x) on the mirrored grid (atoms keep their jumps)."""
        g = self.grid
        grid = Grid1D(-g.b, -g.a, g.m)
        values = M - self.values[::-1] - self.total_jump
        atoms = tuple((0.0 - x, j) for x, j in self.atoms)
        return BVFunction1D(grid, values, atoms)

    # serialisation ---------------------------------------------------
    def to_csv(self, path, extra_columns=None):
        """Write ``x,u`` (continuous part) plus a ``.atoms.json`` sidecar."""
        path = Path(path)
        cols = {"x": self.grid.nodes, "u": self.values}
        if extra_columns:
            cols.update(extra_columns)
        write_columns(path, cols)
        sidecar = path.with_suffix(".atoms.json")
        meta = {"a": self.grid.a, "b": self.grid.b, "m": self.grid.m,
                "atoms": [{"location": x, "jump": j} for x, j in self.atoms]}
        sidecar.write_text(json.dumps(meta, indent=2) + "\n")
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        cols = read_columns(path)
        meta = json.loads(path.with_suffix(".atoms.json").read_text())
        grid = Grid1D(meta["a"], meta["b"], meta["m"])
        atoms = [(d["location"], d["jump"]) for d in meta["atoms"]]
        return cls(grid, cols["u"], atoms)


def write_columns(path, cols):
    """Write equal-length columns as CSV with 17 significant digits."""
    names = list(cols)
    data = np.column_stack([np.asarray(cols[n], dtype=float) for n in names])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_columns(path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        rows = [[float(t) for t in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


def ac_energy(F, grid, slopes, weight_rule="min"):
    W = F.weight.cell_weights(grid.nodes, weight_rule)
    return float(np.sum(W * F.profile.f(slopes)) * grid.dx)


def relaxed_energy(u, F, bc, weight_rule="min"):
    """Relaxed functional of ``u`` with Dirichlet data ``bc = (y1, y2)``.

    The absolutely continuous part uses per-cell weights (``weight_rule``,
    see :meth:`HoelderWeight.cell_weights`); atoms and boundary deviations
    are priced by the recession function |z| times the pointwise weight.
    """
    y1, y2 = map(float, bc)
    w = F.weight
    ac = ac_energy(F, u.grid, u.slopes, weight_rule)
    jump = float(sum(w(x) * F.profile.recession(j) for x, j in u.atoms))
    bd = (w(u.grid.a) * F.profile.recession(u.trace_a - y1)
          + w(u.grid.b) * F.profile.recession(u.trace_b - y2))
    return EnergyBreakdown(ac, jump, float(bd))


def total_variation(u):
    return float(np.sum(np.abs(np.diff(u.values))) + sum(abs(j) for _, j in u.atoms))


def lp_gradient_norm(u, p, K=None):
    """L^p norm of the absolutely continuous gradient on the cells of K.

    Returns ``inf`` when p > 1 and an atom lies in K, since |z|**p has
    infinite recession and the jump cannot be priced.
    """
    p = float(p)
    if p < 1.0:
        raise DomainError("p must be >= 1")
    K = (u.grid.a, u.grid.b) if K is None else (float(K[0]), float(K[1]))
    if K[0] < u.grid.a or K[1] > u.grid.b or K[0] > K[1]:
        raise DomainError("K must be a subinterval of [a, b]")
    if p > 1.0 and any(K[0] <= x <= K[1] and j != 0.0 for x, j in u.atoms):
        return float("inf")
    mask = u.grid.cells_in(K)
    s = np.abs(u.slopes[mask])
    return float((np.sum(s ** p) * u.grid.dx) ** (1.0 / p))


def _breakpoints(*fns):
    g = fns[0].grid
    pts = [g.nodes]
    for fn in fns:
        pts.append(np.array([x for x, _ in fn.atoms]))
    return np.unique(np.concatenate(pts))


def l1_distance(u, v):
    """Exact L^1 distance of two piecewise-linear-plus-jump functions."""
    if (u.grid.a, u.grid.b) != (v.grid.a, v.grid.b):
        raise DomainError("functions live on different intervals")
    pts = np.unique(np.concatenate([_breakpoints(u), _breakpoints(v)]))
    left, right = pts[:-1], pts[1:]
    # one-sided limits inside each sub-interval
    d0 = u(left) - v(left)
    d1 = u.left_limit(right) - v.left_limit(right)
    h = right - left
    same = d0 * d1 >= 0.0
    out = np.where(same, 0.5 * h * np.abs(d0 + d1), 0.0)
    cross = ~same
    a0, a1 = np.abs(d0[cross]), np.abs(d1[cross])
    out[cross] = 0.5 * h[cross] * (a0 * a0 + a1 * a1) / (a0 + a1)
    return float(np.sum(out))
