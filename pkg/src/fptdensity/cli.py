"""Batch front end: solve / simulate / validate / compare on scenario files.

Exit codes: 0 success, 2 solver failure (diverged or non-contracting
Picard window), 3 configuration or precondition error, 4 validation
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .analytic import disk_fpt_density, halfplane_joint_density
from .errors import (
    FptError,
    MoreTermsNeededError,
    PreconditionError,
    SolverDivergedError,
    TooFewHitsError,
    WindowTooLongError,
)
from .geometry import lemma1_constant, lemma2_integral, MovingDomain, FlowMap, circle, zero_field
from .io import (
    write_compare_csv,
    write_density_csv,
    write_hits_csv,
    write_json,
    write_mass_balance_csv,
    write_survival_csv,
    write_validation_csv,
)
from .montecarlo import ks_compare, simulate
from .scenarios import Scenario, load_scenario
from .survival import mass_balance, survival_curve
from .volterra import SourceSpec, jump_relation_probe, residual, solve

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3
EXIT_VALIDATION = 4


def _solve_scenario(scenario: Scenario):
    t0 = time.perf_counter()
    sol = solve(scenario.domain, scenario.source, scenario.solver,
                picard_seed=scenario.picard_seed)
    return sol, time.perf_counter() - t0


def cmd_solve(scenario: Scenario, out_dir, threads: int) -> int:
    sol, runtime = _solve_scenario(scenario)
    res = residual(sol)
    write_density_csv(os.path.join(out_dir, "density.csv"), scenario, sol)
    write_json(os.path.join(out_dir, "solve_summary.json"), {
        "scenario": scenario.to_dict(),
        "residual": res,
        "sup_density": sol.sup_norm(),
        "cdf_at_horizon": float(sol.cumulative_flux(scenario.domain.horizon)),
        "picard_iterations": sol.picard_iters,
        "runtime_seconds": runtime,
    })
    print(f"solve: residual {res:.3e}, sup p {sol.sup_norm():.6g}, "
          f"wrote density.csv ({runtime:.1f}s)")
    return EXIT_OK


def cmd_simulate(scenario: Scenario, out_dir, threads: int) -> int:
    t0 = time.perf_counter()
    res = simulate(scenario.domain, np.asarray(scenario.source.center),
                   scenario.mc, threads=threads)
    runtime = time.perf_counter() - t0
    write_hits_csv(os.path.join(out_dir, "hits.csv"), scenario, res)
    write_json(os.path.join(out_dir, "mc_summary.json"), {
        "scenario": scenario.to_dict(),
        "paths": res.n_paths,
        "hits": res.n_hits,
        "survivors": res.survivors,
        "seed": res.seed,
        "dkw_band_99": res.dkw_band(),
        "runtime_seconds": runtime,
    })
    print(f"simulate: {res.n_hits} hits / {res.n_paths} paths "
          f"({res.survivors} survivors), wrote hits.csv ({runtime:.1f}s)")
    return EXIT_OK


def _validate_rows(scenario: Scenario, threads: int):
    domain = scenario.domain
    rows = []

    def row(name, value, threshold, ok):
        rows.append((name, float(value), float(threshold), bool(ok)))

    # flow identities
    rng = np.random.default_rng(7)
    pts = domain.boundary.point(rng.uniform(0, 2 * np.pi, 8))
    horizon = domain.horizon
    t_mid, t_end = 0.37 * horizon, horizon
    fl = domain.flow
    ident = float(np.max(np.abs(fl.advance(pts, t_mid, t_mid) - pts)))
    via = fl.advance(fl.advance(pts, 0.0, t_mid), t_mid, t_end)
    comp = float(np.max(np.linalg.norm(via - fl.advance(pts, 0.0, t_end), axis=-1)))
    back = fl.inverse(fl.advance(pts, 0.0, t_end), t_end, 0.0)
    inv = float(np.max(np.linalg.norm(back - pts, axis=-1)))
    row("flow_identity", ident, 1e-8, ident <= 1e-8)
    row("flow_composition", comp, 1e-8, comp <= 1e-8)
    row("flow_inversion", inv, 1e-8, inv <= 1e-8)

    # outward normals
    eps = 1e-6 * domain.diameter
    ok_out = True
    for t in (0.0, 0.5 * horizon, horizon):
        sl = domain.boundary_at(t, min(scenario.solver.nodes, 64))
        outside = domain.contains(sl.nodes + eps * sl.normals, t)
        inside = domain.contains(sl.nodes - eps * sl.normals, t)
        ok_out &= not np.any(outside) and bool(np.all(inside))
    row("normals_outward", float(ok_out), 1.0, ok_out)

    # chord-normal curvature bound (equals 1/(2R) on circles)
    sl0 = domain.boundary_at(0.0, max(scenario.solver.nodes, 64))
    c1 = lemma1_constant(sl0)
    kmax = float(np.max(np.abs(sl0.curvature)))
    if domain.boundary.kind == "circle":
        target = 0.5 / domain.boundary.params[0]
        ok = abs(c1 - target) <= 0.02 * target
        row("lemma1_chord_normal", c1, 1.02 * target, ok)
    else:
        ok = c1 <= 0.55 * kmax
        row("lemma1_chord_normal", c1, 0.55 * kmax, ok)

    # surface gaussian integral at t - s = 1e-4
    t_ref = min(0.5, horizon)
    sl_ref = domain.boundary_at(t_ref, 64)
    val = lemma2_integral(domain, sl_ref.nodes[0], t_ref, t_ref - 1e-4, m=2048)
    row("lemma2_surface_gaussian", abs(val - 1.0), 5e-3, abs(val - 1.0) <= 5e-3)

    # jump relation on the static unit circle (kernel machinery check)
    ref = MovingDomain(boundary=circle(1.0), marker=(0.0, 0.0),
                       flow=FlowMap(zero_field()), horizon=0.5)
    sl_j = ref.boundary_at(0.5, 64)
    offs, target = jump_relation_probe(ref, sl_j.nodes[0], sl_j.normals[0], 0.5,
                                       offsets=(1e-2, 1e-3, 1e-4))
    gaps = np.abs(offs - target)
    shrink_ok = gaps[1] <= gaps[0] / 3.0 and gaps[2] <= gaps[1] / 3.0
    row("jump_relation_gap", gaps[-1], 5e-3, gaps[-1] <= 5e-3 and shrink_ok)

    # oracle comparisons and conservation need the solved density
    sol, _ = _solve_scenario(scenario)
    if domain.boundary.kind == "circle" and domain.is_static() and \
            np.allclose(scenario.source.center, 0.0) and scenario.source.kind == "point":
        radius = domain.boundary.params[0]
        ts = np.linspace(0.1 * horizon, horizon, 19)
        f = disk_fpt_density(radius, ts)
        per = 2.0 * np.pi * radius
        got = np.array([per * float(np.mean(sol.slice_values(t))) for t in ts])
        err = float(np.max(np.abs(got / f - 1.0)))
        row("disk_bessel_oracle", err, 0.01, err <= 0.01)
    if domain.boundary.kind == "flat_capsule" and domain.is_static():
        y0 = scenario.source.center[1]
        sl = sol.grid[0]
        on_line = np.abs(sl.nodes[:, 1]) < 1e-12
        xs = sl.nodes[on_line, 0]
        worst = 0.0
        for k in range(1, len(sol.times)):
            oracle = halfplane_joint_density(y0, xs, sol.times[k])
            mask = oracle > 1e-4
            if mask.any():
                rel = np.abs(sol.values[k][on_line][mask] / oracle[mask] - 1.0)
                worst = max(worst, float(np.max(rel)))
        row("halfplane_images_oracle", worst, 0.02, worst <= 0.02)

    curve = survival_curve(sol, n_times=32)
    defect = float(np.max(np.abs(curve.conservation_defect())))
    row("conservation_survival_plus_cdf", defect, 1e-3, defect <= 1e-3)

    # mass balance with a small bump source
    bump = SourceSpec.bump(scenario.source.center, m=8.0)
    try:
        bump.validate_inside(domain)
    except PreconditionError:
        bump = None
    mb_report = None
    if bump is not None:
        cfg_mb = scenario.solver
        if cfg_mb.dt < 4e-3:
            steps = max(2, int(round(horizon / 4e-3)))
            from dataclasses import replace
            cfg_mb = replace(cfg_mb, dt=horizon / steps)
        p_b = solve(domain, bump, cfg_mb)
        mb_report = mass_balance((0.0, horizon), bump, p_b)
        row("mass_balance_df", mb_report.df_error, 1e-3, mb_report.df_error <= 1e-3)
        row("mass_balance_flux", mb_report.flux_error, 1e-2, mb_report.flux_error <= 1e-2)
    return rows, sol, curve, mb_report


def cmd_validate(scenario: Scenario, out_dir, threads: int) -> int:
    rows, sol, curve, mb_report = _validate_rows(scenario, threads)
    write_validation_csv(os.path.join(out_dir, "validation.csv"), scenario, rows)
    write_survival_csv(os.path.join(out_dir, "survival.csv"), scenario, curve)
    if mb_report is not None:
        write_mass_balance_csv(os.path.join(out_dir, "mass_balance.csv"),
                               scenario, [mb_report])
    width = max(len(r[0]) for r in rows)
    all_ok = True
    for name, value, threshold, ok in rows:
        all_ok &= ok
        print(f"{name:<{width}}  value {value:.4e}  threshold {threshold:.4e}  "
              f"{'pass' if ok else 'FAIL'}")
    print(f"validate: {'all rows pass' if all_ok else 'FAILURES PRESENT'}")
    return EXIT_OK if all_ok else EXIT_VALIDATION


def cmd_compare(scenario: Scenario, out_dir, threads: int) -> int:
    sol, solve_time = _solve_scenario(scenario)
    t0 = time.perf_counter()
    mc_res = simulate(scenario.domain, np.asarray(scenario.source.center),
                      scenario.mc, threads=threads)
    mc_time = time.perf_counter() - t0
    report = ks_compare(mc_res, lambda t: sol.cumulative_flux(t))
    curve = survival_curve(sol, n_times=32)
    defect = float(np.max(np.abs(curve.conservation_defect())))
    times = np.linspace(0.0, scenario.mc.horizon, 201)
    write_compare_csv(os.path.join(out_dir, "compare.csv"), scenario, times,
                      sol.cumulative_flux(times), mc_res.empirical_cdf(times))
    write_survival_csv(os.path.join(out_dir, "survival.csv"), scenario, curve)
    conservation_ok = defect <= 1e-3
    write_json(os.path.join(out_dir, "compare_summary.json"), {
        "scenario": scenario.to_dict(),
        "ks_statistic": report.statistic,
        "dkw_threshold_99": report.threshold,
        "ks_passed": report.passed,
        "hits": report.n_hits,
        "survivors": mc_res.survivors,
        "conservation_defect": defect,
        "conservation_passed": conservation_ok,
        "solve_seconds": solve_time,
        "mc_seconds": mc_time,
    })
    print(f"compare: KS {report.statistic:.5f} vs DKW {report.threshold:.5f} "
          f"({'pass' if report.passed else 'FAIL'}); conservation defect "
          f"{defect:.2e} ({'pass' if conservation_ok else 'FAIL'})")
    return EXIT_OK if (report.passed and conservation_ok) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fptdensity",
        description="First-passage-time densities through smooth moving boundaries")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("simulate", cmd_simulate),
                     ("validate", cmd_validate), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file or bundled scenario name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the Monte Carlo seed")
        p.add_argument("--threads", type=int, default=None,
                       help="Monte Carlo block threads (default: FPT_THREADS or 1)")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("FPT_THREADS", "1"))
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
        os.makedirs(args.out, exist_ok=True)
        return args.handler(scenario, args.out, threads)
    except (WindowTooLongError, SolverDivergedError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PreconditionError, TooFewHitsError, MoreTermsNeededError,
            json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
