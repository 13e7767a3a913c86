"""scikit-learn style wrappers around the solvers.

Hyperparameters go to ``__init__`` and are only validated in ``fit``;
``fit`` solves the Dirichlet problem (the boundary rise is the
``M`` parameter) and ``predict`` evaluates the fitted function at points.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .bv import Grid1D
from .errors import DomainError
from .integrand import WEIGHT_RULES, NonAutonomousIntegrand
from .oracle import solve_oracle
from .probe import NoJump, jump_detect
from .viscosity import ViscosityConfig, run_sequence


def _validate_common(est):
    if not (1.0 < float(est.mu) < 2.0):
        raise DomainError(f"mu must lie in (1, 2), got {est.mu!r}")
    if not (0.0 < float(est.alpha) < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {est.alpha!r}")
    if not np.isfinite(est.M):
        raise DomainError("M must be finite")
    if int(est.grid_exp) != est.grid_exp or not 1 <= int(est.grid_exp) <= 24:
        raise DomainError(f"grid_exp must be an integer in [1, 24], got {est.grid_exp!r}")
    if est.weight_rule not in WEIGHT_RULES:
        raise DomainError(f"weight_rule must be one of {WEIGHT_RULES}")
    return Grid1D.dyadic(int(est.grid_exp))


class _PointEvalMixin:
    def predict(self, X):
        """Right-continuous values of the fitted function at the points ``X``."""
        check_is_fitted(self, "minimizer_")
        x = column_or_1d(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(x)):
            raise ValueError("points must be finite")
        g = self.minimizer_.grid
        if np.any((x < g.a) | (x > g.b)):
            raise ValueError(f"points must lie in [{g.a}, {g.b}]")
        return np.asarray(self.minimizer_(x), dtype=float)


class ViscosityMinimizer(_PointEvalMixin, BaseEstimator):
    """Vanishing-viscosity approximation of the generalised minimiser.

    Fitted attributes: ``states_`` (one per k), ``minimizer_`` (last
    iterate), ``flux_C_``, ``energy_`` and ``jump_`` (None when the
    detector reports a Sobolev profile).
    """

    def __init__(self, mu=1.4, alpha=0.25, M=20.0, grid_exp=12, k_max=512,
                 weight_rule="min", verify=True):
        self.mu = mu
        self.alpha = alpha
        self.M = M
        self.grid_exp = grid_exp
        self.k_max = k_max
        self.weight_rule = weight_rule
        self.verify = verify

    def fit(self, X=None, y=None):
        grid = _validate_common(self)
        F = NonAutonomousIntegrand.example(self.mu, self.alpha, grid.a, grid.b)
        cfg = ViscosityConfig(grid, (0.0, float(self.M)), k_max=self.k_max,
                              weight_rule=self.weight_rule, verify=self.verify)
        self.states_ = run_sequence(F, cfg)
        last = self.states_[-1]
        self.minimizer_ = last.u_k
        self.flux_C_ = last.flux_C
        self.energy_ = last.report.energy
        self.jump_ = None
        if len(self.states_) >= 3:
            try:
                self.jump_ = jump_detect(self.states_)
            except NoJump:
                pass
        return self


class OracleMinimizer(_PointEvalMixin, BaseEstimator):
    """Semi-analytic minimiser; fitted attributes ``kind_``, ``M0_``, ``C_``,
    ``jump_size_``, ``energy_`` and ``minimizer_``."""

    def __init__(self, mu=1.4, alpha=0.25, M=20.0, grid_exp=12, weight_rule="min"):
        self.mu = mu
        self.alpha = alpha
        self.M = M
        self.grid_exp = grid_exp
        self.weight_rule = weight_rule

    def fit(self, X=None, y=None):
        grid = _validate_common(self)
        sol = solve_oracle(self.mu, self.alpha, grid, self.M, self.weight_rule)
        self.solution_ = sol
        self.kind_ = sol.kind
        self.M0_ = sol.M0
        self.C_ = sol.C
        self.jump_size_ = sol.jump_size
        self.energy_ = sol.energy
        self.minimizer_ = sol.minimizer
        return self
