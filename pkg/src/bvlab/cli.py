"""Command-line entry point: ``bvlab <command> [flags]``.

Commands: solve, oracle, sweep, probe, figure1, verify.  Settings come
from built-in defaults, then a ``key = value`` file (``--config``), then
flags.  Exit codes: 0 all acceptance checks passed, 1 solver failure,
2 configuration error, 3 a configured acceptance check failed.
"""
import argparse
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .bv import Grid1D, l1_distance, relaxed_energy, write_columns
from .errors import BVLabError, SolverFailure
from .integrand import WEIGHT_RULES, NonAutonomousIntegrand, verify_hypotheses
from .oracle import competitors, m0_report, solve_oracle
from .probe import (NoJump, jump_detect, lp_sweep, nikolskii_seminorm, thresholds,
                    write_json, write_lp_csv, write_nikolskii_csv)
from .viscosity import ViscosityConfig, dump_states, energy_monotone, run_sequence

log = logging.getLogger("bvlab")

COMMANDS = ("solve", "oracle", "sweep", "probe", "figure1", "verify")
EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_ACCEPT = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"config error: key '{key}': {message}")
        self.key = key


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


@dataclass
class RunConfig:
    command: str = "solve"
    mu: float = 1.4
    alpha: float = 0.25
    M: float = 20.0
    grid_exp: int = 14
    k_max: int = 512
    out: str = "bvlab_out"
    seed: int = 0
    jobs: int = 0
    weight_rule: str = "min"
    newton_tol: float = 1e-12
    newton_max_iter: int = 100
    verify_newton: bool = True
    p_list: tuple = (1.0, 1.05, 1.2, 2.0)
    window: tuple = (-0.5, 0.5)
    n_competitors: int = 100
    # acceptance settings
    jump_rel_tol: float = 0.02
    l1_tol: float = 0.01
    p1_ratio_max: float = 1.05
    flux_tol: float = 1e-8
    cross_tol: float = 1e-8
    # sweep grid (comma-separated in files and flags)
    mu_list: tuple = (1.1, 1.4)
    alpha_list: tuple = (0.25,)
    M_list: tuple = (20.0,)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        if not 1.0 < self.mu < 2.0:
            raise ConfigError("mu", "must lie in (1, 2)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha", "must lie in (0, 1)")
        if not (math.isfinite(self.M) and self.M >= 0.0):
            raise ConfigError("M", "must be finite and >= 0")
        if not 2 <= self.grid_exp <= 24:
            raise ConfigError("grid_exp", "must lie in [2, 24]")
        if self.k_max < 1:
            raise ConfigError("k_max", "must be >= 1")
        if self.jobs < 0:
            raise ConfigError("jobs", "must be >= 0 (0 = all cores)")
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError("weight_rule", f"must be one of {', '.join(WEIGHT_RULES)}")
        if not self.newton_tol > 0.0:
            raise ConfigError("newton_tol", "must be positive")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter", "must be >= 1")
        if not self.p_list or min(self.p_list) < 1.0:
            raise ConfigError("p_list", "needs values >= 1")
        if len(self.window) != 2 or not -1.0 <= self.window[0] < self.window[1] <= 1.0:
            raise ConfigError("window", "must be two increasing numbers inside [-1, 1]")
        for key in ("mu_list", "alpha_list", "M_list"):
            if not getattr(self, key):
                raise ConfigError(key, "must not be empty")
        if any(not 1.0 < m < 2.0 for m in self.mu_list):
            raise ConfigError("mu_list", "entries must lie in (1, 2)")
        if any(not 0.0 < a < 1.0 for a in self.alpha_list):
            raise ConfigError("alpha_list", "entries must lie in (0, 1)")
        if any(not (math.isfinite(m) and m >= 0.0) for m in self.M_list):
            raise ConfigError("M_list", "entries must be finite and >= 0")
        return self


def _convert(key, raw, typ):
    try:
        if typ is bool:
            low = str(raw).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if typ is tuple:
            return _floats(raw)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {raw!r}") from None


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def read_config_file(path):
    """Parse ``key = value`` lines; '#' starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", "expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES or key == "command":
            raise ConfigError(key, "unknown key")
        out[key] = _convert(key, val, _TYPES[key])
    return out


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file (flags override it)")
    common.add_argument("--mu", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--M", type=float, dest="M")
    common.add_argument("--grid-exp", type=int, dest="grid_exp")
    common.add_argument("--k-max", type=int, dest="k_max")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="parallel sweep points (0 = all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="bvlab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"solve": "vanishing-viscosity sequence with per-k dumps",
             "oracle": "M0 and the semi-analytic minimiser",
             "sweep": "solve + oracle + probes over a (mu, alpha, M) grid",
             "probe": "jump detection, L^p sweep and Nikolskii tables",
             "figure1": "the mu=1.4, alpha=0.25, M=20 pipeline on 2^14 cells up to k=512",
             "verify": "check growth, ellipticity and Hoelder hypotheses"}
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "sweep":
            sp.add_argument("--mu-list", dest="mu_list")
            sp.add_argument("--alpha-list", dest="alpha_list")
            sp.add_argument("--M-list", dest="M_list")
    return p


def build_config(argv):
    args = _parser().parse_args(argv)
    values = {}
    if args.command == "figure1":
        values.update(mu=1.4, alpha=0.25, M=20.0, grid_exp=14, k_max=512)
    if args.config:
        values.update(read_config_file(args.config))
    for key in ("mu", "alpha", "M", "grid_exp", "k_max", "out", "seed", "jobs",
                "mu_list", "alpha_list", "M_list"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _convert(key, v, _TYPES[key]) if _TYPES[key] is tuple else v
    cfg = RunConfig(command=args.command, **values)
    return cfg.validate(), args.verbose


def _echo(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    d = asdict(cfg)
    write_json(out / "config.json", {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()})


# ---------------------------------------------------------------------------
# pipelines

def _run(cfg, mu, alpha, M):
    grid = Grid1D.dyadic(cfg.grid_exp)
    F = NonAutonomousIntegrand.example(mu, alpha, grid.a, grid.b)
    vcfg = ViscosityConfig(grid, (0.0, M), k_max=cfg.k_max, newton_tol=cfg.newton_tol,
                           newton_max_iter=cfg.newton_max_iter, weight_rule=cfg.weight_rule,
                           verify=cfg.verify_newton, p_list=cfg.p_list)
    return grid, F, run_sequence(F, vcfg)


def _solver_checks(cfg, states, M):
    return {
        "flux_constancy": all(s.report.flux_residual <= cfg.flux_tol * (1 + abs(s.flux_C))
                              for s in states),
        "cross_solver": all(s.report.cross_solver_linf is None
                            or s.report.cross_solver_linf <= cfg.cross_tol * (1 + abs(M))
                            for s in states),
        "energy_monotone": energy_monotone(states),
    }


def pipeline(cfg, mu, alpha, M, out, tag):
    """Full solve + oracle + probes for one parameter point; returns the summary."""
    grid, F, states = _run(cfg, mu, alpha, M)
    dump_states(states, out, tag)
    summary = {"mu": mu, "alpha": alpha, "M": M, "grid_exp": cfg.grid_exp, "k_max": cfg.k_max}
    checks = _solver_checks(cfg, states, M)

    sol = solve_oracle(mu, alpha, grid, M, cfg.weight_rule)
    sol.to_json(out / f"oracle_{tag}.json")
    sol.minimizer.to_csv(out / f"oracle_{tag}.csv")
    summary["oracle_kind"] = sol.kind
    summary["M0"] = sol.M0
    summary["l1_to_oracle"] = l1_distance(states[-1].u_k, sol.minimizer)

    # exact energies of piecewise-linear competitors against the exact oracle energy
    cont = sol.continuum_energy
    comp = [relaxed_energy(v, F, (0.0, M), "mean").total
            for v in competitors(sol, cfg.n_competitors, cfg.seed)]
    summary["competitor_margin"] = min(comp) - cont if comp else math.inf
    checks["oracle_beats_competitors"] = summary["competitor_margin"] >= -1e-9

    if len(states) >= 3:
        try:
            rep = jump_detect(states)
            write_json(out / f"jump_{tag}.json", rep.to_dict())
            summary["jump"] = {"location": rep.location, "size": rep.size}
            if sol.kind == "jump":
                rel = abs(rep.size - sol.jump_size) / sol.jump_size
                summary["jump"]["rel_error"] = rel
                checks["jump_size"] = rel <= cfg.jump_rel_tol
                checks["jump_location"] = abs(rep.location - 0.0) <= grid.dx
                checks["l1_to_oracle"] = summary["l1_to_oracle"] <= cfg.l1_tol * abs(M) * grid.length
            else:
                checks["no_jump"] = False
        except NoJump as exc:
            write_json(out / f"jump_{tag}.json", exc.report.to_dict())
            summary["jump"] = None
            checks["no_jump"] = sol.kind != "jump"

    table, _ = lp_sweep(states, cfg.p_list, cfg.window)
    write_lp_csv(out / f"lp_{tag}.csv", table)
    ks = [s.k for s in states]
    if len(ks) >= 2:
        checks["p1_bounded"] = table[(ks[-1], 1.0)] <= cfg.p1_ratio_max * table[(ks[-2], 1.0)] \
            if 1.0 in cfg.p_list else True

    th = thresholds(mu, alpha, 1)
    summary["thresholds"] = th.to_dict()
    reps = {}
    for st in states[-4:]:
        reps[f"k{st.k}"] = nikolskii_seminorm(st.u_k.slopes, grid, alpha / 2, cfg.window,
                                              kappa=th.kappa_mid, mu=mu, alpha=alpha)
    write_nikolskii_csv(out / f"nikolskii_{tag}.csv", reps)
    summary["checks"] = checks
    summary["passed"] = all(checks.values())
    write_json(out / f"summary_{tag}.json", summary)
    return summary


def _tag(mu, alpha, M):
    return f"mu{mu:g}_alpha{alpha:g}_M{M:g}"


def _point(args):
    cfg, mu, alpha, M = args
    out = Path(cfg.out) / _tag(mu, alpha, M)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return pipeline(cfg, mu, alpha, M, out, "point")
    except SolverFailure as exc:
        return {"mu": mu, "alpha": alpha, "M": M, "error": str(exc), "k": exc.k, "passed": False}


def cmd_verify(cfg, out):
    F = NonAutonomousIntegrand.example(cfg.mu, cfg.alpha)
    rep = verify_hypotheses(F, seed=cfg.seed)
    write_json(out / "hypotheses.json", rep.to_dict())
    return EXIT_OK if rep.all_pass else EXIT_ACCEPT


def cmd_oracle(cfg, out):
    grid = Grid1D.dyadic(cfg.grid_exp)
    rep = m0_report(cfg.mu, cfg.alpha, grid.a, grid.b)
    sol = solve_oracle(cfg.mu, cfg.alpha, grid, cfg.M, cfg.weight_rule)
    d = sol.to_dict()
    d["quadrature"] = rep.to_dict()
    write_json(out / "oracle.json", d)
    sol.minimizer.to_csv(out / "oracle_minimizer.csv")
    ok = not rep.finite or (rep.route_rel_diff <= 1e-8 and rep.refinement_rel_diff <= 1e-8)
    return EXIT_OK if ok else EXIT_ACCEPT


def cmd_solve(cfg, out):
    grid, F, states = _run(cfg, cfg.mu, cfg.alpha, cfg.M)
    dump_states(states, out, _tag(cfg.mu, cfg.alpha, cfg.M))
    checks = _solver_checks(cfg, states, cfg.M)
    write_json(out / "solve.json", {"states": [s.to_dict() for s in states], "checks": checks})
    return EXIT_OK if all(checks.values()) else EXIT_ACCEPT


def cmd_probe(cfg, out):
    s = pipeline(cfg, cfg.mu, cfg.alpha, cfg.M, out, _tag(cfg.mu, cfg.alpha, cfg.M))
    return EXIT_OK if s["passed"] else EXIT_ACCEPT


def cmd_figure1(cfg, out):
    s = pipeline(cfg, cfg.mu, cfg.alpha, cfg.M, out, "fig1")
    return EXIT_OK if s["passed"] else EXIT_ACCEPT


def cmd_sweep(cfg, out):
    points = [(cfg, m, a, M) for m, a, M in itertools.product(cfg.mu_list, cfg.alpha_list, cfg.M_list)]
    jobs = cfg.jobs or os.cpu_count() or 1
    if jobs == 1 or len(points) == 1:
        results = [_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as ex:
            results = list(ex.map(_point, points))
    write_json(out / "sweep.json", {"points": results})
    cols = {"mu": [r["mu"] for r in results], "alpha": [r["alpha"] for r in results],
            "M": [r["M"] for r in results], "passed": [float(r["passed"]) for r in results]}
    write_columns(out / "sweep.csv", cols)
    failed = [r for r in results if "error" in r]
    if failed:
        for r in failed:
            print(f"solver failure: {r['error']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_ACCEPT


HANDLERS = {"verify": cmd_verify, "oracle": cmd_oracle, "solve": cmd_solve,
            "probe": cmd_probe, "figure1": cmd_figure1, "sweep": cmd_sweep}


def dispatch(cfg):
    out = Path(cfg.out)
    _echo(cfg, out)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except SolverFailure as exc:
        print(f"solver failure at k={exc.k} (mu={cfg.mu}, alpha={cfg.alpha}, M={cfg.M}): {exc}",
              file=sys.stderr)
        return EXIT_SOLVER
    except BVLabError as exc:
        print(f"solver failure (mu={cfg.mu}, alpha={cfg.alpha}, M={cfg.M}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    try:
        cfg, verbose = build_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
