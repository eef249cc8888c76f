"""Batch command-line driver.

One mode per invocation (the subcommand), one config file per run, artifacts
written under the output directory: ``manifest.txt`` (an echo of the
effective config, itself a valid config file, plus version and timing
comments), field tables under ``fields/``, reports under ``reports/``, and
the policy tables at the top level.  All numeric output uses shortest
round-trip float formatting, so identical configs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import MODES, RunConfig, parse_config
from .conjugate import (ConjugateHamiltonian, conjugate, conjugate_derivative,
                        potential)
from .degenerate import solve_degenerate
from .grid import Grid1D
from .montecarlo import SimConfig, compare_policies
from .problem import ControlProblem
from .resolvent import ResolventConfig
from .stepper import energy_report, mild_solve, refine_until
from .twodim import Grid2D, Problem2D, mild_solve_2d, solve_L
from .value import reconstruct_value, synthesize_feedback

__all__ = ["main", "run"]


def _fmt(value) -> str:
    return repr(float(value))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def _write_csv(path: Path, comment: str, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {comment}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _field_rows(times, xs, tables):
    for t, table in zip(times, tables):
        for x, v in zip(xs, table):
            yield (t, x, v)


def _build_problem(cfg: RunConfig) -> ControlProblem:
    return ControlProblem(
        sigma=cfg.sigma, g=cfg.g, g0=cfg.g0, cost=cfg.cost, horizon=cfg.T,
        f=cfg.f, f_x=cfg.f_x, f_xx=cfg.f_xx,
        g_xx=cfg.g_xx, g0_xx=cfg.g0_xx,
        sigma_x=cfg.sigma_x, sigma_xx=cfg.sigma_xx)


def _solver_cfg(cfg: RunConfig, eps: float) -> ResolventConfig:
    return ResolventConfig(lam=1.0 / eps, tol_res=cfg.tol_res,
                           max_iter=cfg.max_iter)


def _inner_slice(grid: Grid1D) -> slice:
    # reconstructed value tables are reported on the inner 80% of the mesh
    margin = int(round(0.1 * (grid.n - 1)))
    return slice(margin, grid.n - margin)


def _run_solve(cfg: RunConfig, out: Path, quiet: bool) -> None:
    problem = _build_problem(cfg).discretize(Grid1D(cfg.L, cfg.n))
    sol = mild_solve(problem, cfg.eps, cfg=_solver_cfg(cfg, cfg.eps))
    grid = sol.grid
    _write_csv(out / "fields" / "y.csv",
               "transformed state snapshots; columns: time, state, value",
               ["t", "x", "y"],
               _field_rows(sol.times, grid.x, sol.snapshots))
    report = energy_report(sol)
    _write_csv(out / "reports" / "energy.csv",
               "per-step energy series; columns: time, potential, dissipation",
               ["t", "potential", "dissipation"],
               zip(sol.step_times, sol.energy_potential, sol.dissipation))
    _write_text(out / "reports" / "summary.txt",
                f"steps = {len(sol.step_times) - 1}\n"
                f"partial_step = {_fmt(sol.partial_step)}\n"
                f"snapshot_stride = {sol.stride}\n"
                f"potential_max = {_fmt(report.potential_max)}\n"
                f"dissipation_total = {_fmt(report.dissipation_total)}\n"
                f"implied_constant = {_fmt(report.implied_constant)}\n")
    if not quiet:
        print(f"solved {len(sol.step_times) - 1} steps; artifacts in {out}")


def _value_tables(cfg: RunConfig):
    problem = _build_problem(cfg).discretize(Grid1D(cfg.L, cfg.n))
    sol = mild_solve(problem, cfg.eps, cfg=_solver_cfg(cfg, cfg.eps))
    return problem, sol, reconstruct_value(sol, horizon=cfg.T)


def _run_value(cfg: RunConfig, out: Path, quiet: bool) -> None:
    _, sol, vf = _value_tables(cfg)
    inner = _inner_slice(vf.grid)
    xs = vf.grid.x[inner]
    _write_csv(out / "fields" / "value.csv",
               "value function on the inner 80% of the mesh; "
               "columns: time, state, value",
               ["t", "x", "phi"],
               _field_rows(vf.times, xs, vf.phi[:, inner]))
    _write_csv(out / "fields" / "value_slope.csv",
               "space derivative of the value on the inner 80%; "
               "columns: time, state, value",
               ["t", "x", "phi_x"],
               _field_rows(vf.times, xs, vf.phi_x[:, inner]))
    if not quiet:
        sup_phi, sup_slope = vf.sup_norms()
        print(f"value reconstructed; sup|phi| = {sup_phi:.6g}, "
              f"sup|phi_x| = {sup_slope:.6g}")


def _policy_of(cfg: RunConfig):
    problem, sol, vf = _value_tables(cfg)
    return problem, synthesize_feedback(vf, problem.operands)


def _write_policy(policy, out: Path) -> None:
    grid = policy.grid
    _write_csv(out / "policy.csv",
               "feedback control table; columns: time, state, control",
               ["t", "x", "u"],
               _field_rows(policy.times, grid.x, policy.u))
    lines = [
        "# feedback control table",
        f"# horizon = {_fmt(policy.horizon)}",
        f"# half_width = {_fmt(grid.half_width)}",
        f"# nodes = {grid.n}",
        f"# times = {len(policy.times)}",
        "# row format: t u_0 u_1 ... u_{n-1}",
    ]
    for t, row in zip(policy.times, policy.u):
        lines.append(" ".join([_fmt(t), *(_fmt(u) for u in row)]))
    _write_text(out / "policy.txt", "\n".join(lines) + "\n")


def _run_policy(cfg: RunConfig, out: Path, quiet: bool) -> None:
    _, policy = _policy_of(cfg)
    _write_policy(policy, out)
    if not quiet:
        print(f"policy table written; max control = {float(policy.u.max()):.6g}")


def _run_simulate(cfg: RunConfig, out: Path, quiet: bool) -> None:
    problem = _build_problem(cfg)
    _, policy = _policy_of(cfg)
    _write_policy(policy, out)
    sim = SimConfig(n_paths=cfg.paths,
                    dt=cfg.dt if cfg.dt is not None else cfg.T / 1000.0,
                    seed=cfg.seed, x0=cfg.x0)
    comparison = compare_policies(problem, policy, cfg.baselines, sim,
                                  keep_samples=cfg.dump_paths)
    if cfg.dump_paths:
        rows = []
        for r in comparison.rows():
            rows.extend((r.label, i, c) for i, c in enumerate(r.samples))
        _write_csv(out / "reports" / "path_costs.csv",
                   "per-path cost samples; columns: policy, path index, cost",
                   ["label", "path", "cost"], rows)
    _write_csv(out / "reports" / "mc_comparison.csv",
               "cost estimates under common random numbers; "
               "columns: label, mean, stderr, ci bounds, paths, excluded",
               ["label", "mean", "stderr", "ci_low", "ci_high",
                "n_paths", "n_excluded"],
               [(r.label, r.mean, r.stderr, r.ci_low, r.ci_high,
                 r.n_paths, r.n_excluded) for r in comparison.rows()])
    best = comparison.best_baseline
    _write_text(out / "reports" / "summary.txt",
                f"feedback_mean = {_fmt(comparison.feedback.mean)}\n"
                f"best_baseline = {best.label}\n"
                f"best_baseline_mean = {_fmt(best.mean)}\n"
                f"feedback_beats_baselines = {comparison.feedback_beats_baselines}\n"
                f"intervals_separated = {comparison.intervals_separated}\n")
    if not quiet:
        print(f"feedback {comparison.feedback.mean:.6g} "
              f"vs best baseline {best.mean:.6g} ({best.label})")


def _run_sweep_eps(cfg: RunConfig, out: Path, quiet: bool) -> None:
    problem = _build_problem(cfg).discretize(Grid1D(cfg.L, cfg.n))
    result = refine_until(problem, cfg.refine_tol, cfg.eps,
                          cfg=_solver_cfg(cfg, cfg.eps),
                          max_levels=cfg.refine_levels)
    rows = [(level, eps, gap) for level, (eps, gap) in
            enumerate(zip(result.eps_levels[1:], result.gaps), start=1)]
    _write_csv(out / "reports" / "eps_sweep.csv",
               "step-halving certificate; columns: level, step, "
               "sup-time L1 gap to previous level",
               ["level", "eps", "gap"], rows)
    sol = result.solution
    _write_csv(out / "fields" / "y_finest.csv",
               "finest-run snapshots; columns: time, state, value",
               ["t", "x", "y"],
               _field_rows(sol.times, sol.grid.x, sol.snapshots))
    _write_text(out / "reports" / "summary.txt",
                f"converged = {result.converged}\n"
                f"finest_eps = {_fmt(result.eps_levels[-1])}\n"
                f"last_gap = {_fmt(result.gaps[-1])}\n")
    if not quiet:
        print(f"gaps: {', '.join(f'{g:.3e}' for g in result.gaps)}")


def _run_sweep_degenerate(cfg: RunConfig, out: Path, quiet: bool) -> None:
    grid = Grid1D(cfg.L, cfg.n)
    control = _build_problem(cfg)
    vol = control.volatility_data(grid)
    initial, source = control.transformed_data(grid)
    conj = (ConjugateHamiltonian.quadratic(cfg.cost.alpha1, cfg.cost.alpha2)
            if cfg.cost.kind == "quadratic"
            else ConjugateHamiltonian.for_cost(cfg.cost))
    sweep = solve_degenerate(grid, conj, vol, initial, source, cfg.T, cfg.eps,
                             ladder=cfg.ladder,
                             drift=control.drift_data(grid))
    rows = []
    for i, level in enumerate(sweep.levels):
        rep = sweep.bound_reports[i]
        gap = sweep.gaps[i - 1] if i > 0 else float("nan")
        rows.append((level, gap, float(np.max(rep.bounds)),
                     float(np.max(rep.y_inf)), str(rep.passed)))
    _write_csv(out / "reports" / "degenerate_sweep.csv",
               "regularization ladder; columns: weight, sup-time L1 gap to "
               "previous level, sup bound, sup |y|, bound check",
               ["eps_reg", "gap_prev", "bound", "max_abs_y", "passed"], rows)
    _write_text(out / "reports" / "summary.txt",
                f"gaps_monotone = {sweep.gaps_monotone}\n"
                f"bounds_passed = {all(r.passed for r in sweep.bound_reports)}\n")
    if not quiet:
        print(f"ladder gaps: {', '.join(f'{g:.3e}' for g in sweep.gaps)}")


def _run_solve_2d(cfg: RunConfig, out: Path, quiet: bool) -> None:
    grid2 = Grid2D(cfg.L2, cfg.n2)
    X, Y = grid2.mesh
    b = cfg.a_matrix @ cfg.a_matrix.T

    def l_of(parts):
        pxx, pxy, pyy = (np.asarray(p(X, Y), dtype=float) + np.zeros_like(X)
                         for p in parts)
        return b[0, 0] * pxx + 2.0 * b[0, 1] * pxy + b[1, 1] * pyy

    conj = (ConjugateHamiltonian.quadratic(cfg.cost.alpha1, cfg.cost.alpha2)
            if cfg.cost.kind == "quadratic"
            else ConjugateHamiltonian.for_cost(cfg.cost))
    problem = Problem2D(
        grid=grid2, a=cfg.a_matrix,
        sigma0=np.asarray(cfg.sigma0_2d(X, Y), dtype=float) + np.zeros_like(X),
        initial=-l_of(cfg.g0_2d_parts),
        source=-l_of(cfg.g_2d_parts),
        horizon=cfg.T2, conj=conj)
    sol = mild_solve_2d(problem, cfg.eps, tol_res=cfg.tol_res)

    def rows_of(table, margin=0):
        n = grid2.n
        for i in range(margin, n - margin):
            for j in range(margin, n - margin):
                yield (i, j, grid2.x[i], grid2.x[j], table[i, j])

    _write_csv(out / "fields" / "y2d_initial.csv",
               "initial transformed state; columns: i, j, x, y, value",
               ["i", "j", "x", "y", "value"], rows_of(sol.snapshots[0]))
    _write_csv(out / "fields" / "y2d_final.csv",
               "final transformed state; columns: i, j, x, y, value",
               ["i", "j", "x", "y", "value"], rows_of(sol.final))
    phi = solve_L(problem, sol.final)
    inner = int(round(0.1 * (grid2.n - 1)))
    _write_csv(out / "fields" / "value2d_final.csv",
               "reconstructed value at the initial time, inner 80% of the "
               "mesh; columns: i, j, x, y, value",
               ["i", "j", "x", "y", "value"], rows_of(phi, margin=inner))
    _write_csv(out / "reports" / "mass.csv",
               "discrete integral per step; columns: time, mass",
               ["t", "mass"], zip(sol.times, sol.masses))
    if not quiet:
        drift = abs(sol.masses[-1] - sol.masses[0])
        print(f"2-D run complete; mass drift {drift:.3e}")


def _run_conjugate_table(cfg: RunConfig, out: Path, quiet: bool) -> None:
    ps = np.linspace(cfg.p_min, cfg.p_max, cfg.p_nodes)
    rows = [(p, conjugate(cfg.cost, p), conjugate_derivative(cfg.cost, p),
             potential(cfg.cost, p)) for p in ps]
    _write_csv(out / "reports" / "conjugate_table.csv",
               "conjugate of the running cost; columns: argument, value, "
               "derivative, potential",
               ["p", "value", "derivative", "potential"], rows)
    if not quiet:
        print(f"conjugate table with {cfg.p_nodes} rows written")


_RUNNERS = {
    "solve": _run_solve,
    "value": _run_value,
    "policy": _run_policy,
    "simulate": _run_simulate,
    "sweep-eps": _run_sweep_eps,
    "sweep-degenerate": _run_sweep_degenerate,
    "solve-2d": _run_solve_2d,
    "conjugate-table": _run_conjugate_table,
}


def _write_manifest(cfg: RunConfig, out: Path, elapsed: float) -> None:
    text = (f"# mildhjb manifest\n"
            f"# version: {__version__}\n"
            f"# python: {sys.version.split()[0]}"
            f" numpy: {np.__version__} scipy: {scipy.__version__}\n"
            f"# elapsed_seconds: {elapsed:.3f}\n"
            f"# the remainder is the effective config; rerun with\n"
            f"#   mildhjb {cfg.mode} --config manifest.txt\n"
            + cfg.echo())
    _write_text(out / "manifest.txt", text)


def run(mode: str, config_path: str, out_dir: str | None = None,
        seed: int | None = None, quiet: bool = False) -> int:
    """Execute one mode; returns the process exit code."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    cfg, errors = parse_config(text, mode_override=mode)
    if errors:
        print("error: config validation failed", file=sys.stderr)
        for err in errors:
            print(f"  {err}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg.seed = seed
        cfg.raw.setdefault("output", {})["seed"] = str(seed)
    if out_dir is not None:
        cfg.out_dir = out_dir
    out = Path(cfg.out_dir)
    started = time.perf_counter()
    try:
        _RUNNERS[cfg.mode](cfg, out, quiet)
    except Exception as exc:  # solver/runtime failures get a structured block
        print(f"error: {cfg.mode} run failed", file=sys.stderr)
        print(f"  type: {type(exc).__name__}", file=sys.stderr)
        print(f"  detail: {exc}", file=sys.stderr)
        return 1
    _write_manifest(cfg, out, time.perf_counter() - started)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mildhjb",
        description="stochastic volatility-control solver and validator")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="run-config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    return run(args.mode, args.config, out_dir=args.out, seed=args.seed,
               quiet=args.quiet)


if __name__ == "__main__":
    raise SystemExit(main())
