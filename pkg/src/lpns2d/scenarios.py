"""Scenario pipelines behind the CLI; each writes its artifacts and returns a flat summary."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .config import RunConfig
from .estimates import (
    SmallnessReport,
    critical_velocity_spec,
    gnuplot_script,
    smallness_eta,
    stokes_estimate_ratio,
    weights_from_ns,
    write_bootstrap,
    write_eta_report,
    write_weights,
)
from .inhom_solver import ViscosityLaw
from .littlewood_paley import besov_norm, build_partition, cumulative_trapezoid, norm_series, write_norm_csv
from .ns_solver import default_dt, solve_stokes, solve_wbar, taylor_green, taylor_green_pressure
from .patch import PatchScenario, PatchShape, init_patch, run_patch_scenario
from .spectral import Grid, gradient, lp_norm, to_physical, to_spectral, write_snapshot

log = logging.getLogger(__name__)


def make_law(cfg: RunConfig) -> ViscosityLaw:
    if cfg.law == "constant":
        return ViscosityLaw.constant(cfg.mu)
    if cfg.law == "linear":
        return ViscosityLaw.linear(cfg.mu)
    return ViscosityLaw.polynomial(cfg.law_coefficients)


def make_shape(cfg: RunConfig) -> PatchShape:
    axes = tuple(cfg.semi_axes) if len(cfg.semi_axes) == 2 else (cfg.radius, cfg.radius)
    return PatchShape(kind=cfg.shape, radius=cfg.radius, semi_axes=axes)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_plot(out: Path, csv_name: str, title: str, columns, logscale: bool = False) -> None:
    stem = csv_name.rsplit(".", 1)[0]
    (out / f"{stem}.gp").write_text(gnuplot_script(csv_name, title, columns, logscale))


def lp3_reference(amplitude: float) -> float:
    """Box average of |u|^3 for the unit Taylor-Green field, from a fine periodic quadrature."""
    m = 1024
    x = np.arange(m) * 2 * np.pi / m
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    mod = np.hypot(np.sin(x1) * np.cos(x2), np.cos(x1) * np.sin(x2))
    return amplitude**3 * float(np.mean(mod**3))


# --- classical-ns ---------------------------------------------------------


def run_classical(cfg: RunConfig, out: Path) -> dict:
    grid = Grid(cfg.n, cfg.L)
    part = build_partition(grid)
    u0 = taylor_green(grid, cfg.u0_amp, cfg.u0_wavenumber)
    traj = solve_wbar(u0, cfg.mu, cfg.T, cfg.dt)
    k2 = cfg.u0_wavenumber**2
    l20 = lp_norm(u0, 2)
    rows, errors, p_err = [], [], []
    for s in traj:
        w = s.w
        l2 = lp_norm(w, 2)
        exact = l20 * math.exp(-2 * cfg.mu * k2 * s.t)
        rel = abs(l2 - exact) / exact
        errors.append(rel)
        pe = taylor_green_pressure(grid, cfg.u0_amp, cfg.u0_wavenumber, cfg.mu, s.t)
        perr = float(np.max(np.abs(to_physical(s.p).real - pe)))
        p_err.append(perr)
        rows.append((s.t, l2, exact, rel, perr))
    write_rows(out / "decay.csv", ["t", "l2_norm", "exact_l2", "rel_error", "pressure_max_error"], rows)
    write_plot(out, "decay.csv", "Taylor-Green decay", [(2, "computed"), (3, "exact")], logscale=True)

    final = traj[-1].w
    # equal-weight quadrature of |u|^3 converges algebraically (|u| has kinks)
    ref = lp3_reference(cfg.u0_amp) * math.exp(-6 * cfg.mu * k2 * traj[-1].t)
    lp3 = float(np.mean(np.hypot(*to_physical(final).real) ** 3))
    lp3_err = abs(lp3 - ref) / ref if ref else 0.0

    ws = weights_from_ns(traj, cfg.mu, cfg.p, part, cfg.lambda1, cfg.lambda2)
    write_weights(out / "weights.csv", ws)
    write_plot(out, "weights.csv", "weights", [(2, "f1"), (3, "f2")])
    series = norm_series([s.w for s in traj], traj.times, critical_velocity_spec(cfg.p), part)
    write_norm_csv(out / "norms.csv", series)
    write_snapshot(out / "w_final.field", final)
    return {
        "steps": len(traj) - 1,
        "dt": traj.dt,
        "final_rel_error": errors[-1],
        "max_rel_error": max(errors),
        "max_pressure_error": max(p_err),
        "lp3_quadrature_error": lp3_err,
    }


# --- smallness ------------------------------------------------------------


def eta_for(cfg: RunConfig) -> SmallnessReport:
    grid = Grid(cfg.n, cfg.L)
    part = build_partition(grid)
    a0, _ = init_patch(make_shape(cfg), cfg.sigma, grid, cfg.molly_cells, cfg.markers)
    u0 = taylor_green(grid, cfg.u0_amp, cfg.u0_wavenumber)
    return smallness_eta(a0, u0, make_law(cfg).mu0, cfg.p, cfg.q, cfg.C0, cfg.c0, part)


def run_smallness(cfg: RunConfig, out: Path) -> dict:
    rep = eta_for(cfg)
    write_eta_report(out / "eta_report.csv", rep)
    write_plot(out, "eta_report.csv", "smallness functional (configured constants)", [(6, "eta"), (7, "threshold")])
    return {
        "a0_norm": rep.a0_norm,
        "u0_norm": rep.u0_norm,
        "eta": rep.eta,
        "threshold": rep.threshold,
        "satisfied": rep.satisfied,
    }


# --- density patch --------------------------------------------------------


def patch_scenario(cfg: RunConfig) -> PatchScenario:
    return PatchScenario(
        n=cfg.n, box_length=cfg.L, sigma=cfg.sigma, shape=make_shape(cfg), molly_cells=cfg.molly_cells,
        markers=cfg.markers, marker_substeps=cfg.marker_substeps, u0_amplitude=cfg.u0_amp,
        u0_wavenumber=cfg.u0_wavenumber, mu=cfg.mu, law=make_law(cfg), p=cfg.p, q=cfg.q, T=cfg.T, dt=cfg.dt,
        kappa=cfg.kappa, c2=cfg.c2, C0=cfg.C0, c0=cfg.c0, dictionary_size=cfg.dictionary_size,
        lambda1=cfg.lambda1, lambda2=cfg.lambda2,
    )


def run_density_patch(cfg: RunConfig, out: Path) -> dict:
    rep = run_patch_scenario(patch_scenario(cfg))
    write_rows(
        out / "patch_summary.csv", ["t", "area", "max_turning", "multiplier_estimate"],
        zip(rep.times, rep.area, rep.max_turning, rep.multiplier),
    )
    write_plot(out, "patch_summary.csv", "patch diagnostics", [(2, "area"), (3, "max turning")])
    mdir = out / "markers"
    mdir.mkdir(exist_ok=True)
    for k, pt in enumerate(rep.patches):
        write_rows(
            mdir / f"markers_{k:04d}.csv", ["t", "marker_index", "x1", "x2"],
            ((pt.t, i, x, y) for i, (x, y) in enumerate(pt.markers.T)),
        )
    gaps = [g for g, _ in rep.consistency]
    budgets = [b for _, b in rep.consistency]
    write_rows(
        out / "v_norm.csv", ["t", "v_l2", "transport_gap_l1", "transport_budget_l1", "simple"],
        zip(rep.times, rep.v_l2, gaps, budgets, rep.simple),
    )
    write_plot(out, "v_norm.csv", "correction velocity", [(2, "||v||_2")])
    write_eta_report(out / "eta_report.csv", rep.eta)
    write_plot(out, "eta_report.csv", "smallness functional (configured constants)", [(6, "eta"), (7, "threshold")])
    if rep.bootstrap is not None:
        write_bootstrap(out / "bootstrap.csv", rep.bootstrap)
        write_plot(out, "bootstrap.csv", "bootstrap composite", [(2, "composite"), (3, "threshold")])
    write_weights(out / "weights.csv", rep.weights)
    write_plot(out, "weights.csv", "weights", [(2, "f1"), (3, "f2")])
    if rep.states:
        write_snapshot(out / "a_final.field", rep.states[-1].a)
    boot = rep.bootstrap
    return {
        "outcome": rep.outcome,
        "samples": len(rep.times),
        "area_drift": rep.area_drift,
        "turning_growth": float(rep.max_turning.max() / rep.max_turning[0]) if rep.max_turning.size else 0.0,
        "all_simple": bool(rep.simple.all()),
        "mass_drift": rep.mass_drift,
        "range_excess": rep.range_excess,
        "max_v_l2": float(rep.v_l2.max()) if rep.v_l2.size else 0.0,
        "bootstrap_peak": boot.peak if boot else 0.0,
        "upsilon": boot.upsilon if boot else None,
        "fitted_Cbar": boot.fitted_Cbar if boot else None,
        "eta": rep.eta.eta,
        "eta_satisfied": rep.eta.satisfied,
        "max_transport_gap_ratio": max((g / b for g, b in rep.consistency if b > 0), default=0.0),
        "error": rep.error,
    }


# --- stokes ---------------------------------------------------------------


def run_stokes(cfg: RunConfig, out: Path) -> dict:
    """Forced Stokes flow against the mode-by-mode exact solution."""
    grid = Grid(cfg.n, cfg.L)
    part = build_partition(grid)
    nu = cfg.mu
    k = cfg.u0_wavenumber
    u0 = taylor_green(grid, cfg.u0_amp, k)
    g_sol = taylor_green(grid, 1.0, 2 * k)
    x1, x2 = grid.coordinates()
    grad_phi = gradient(to_spectral(np.cos(k * x1) * np.sin(k * x2), grid))
    g0 = g_sol + grad_phi

    def g(t):
        return g0 * math.exp(-t)

    lam = nu * 8 * k * k  # |xi|^2 of the forcing modes times nu

    def exact(t):
        if abs(lam - 1.0) < 1e-12:
            growth = t * math.exp(-t)
        else:
            growth = (math.exp(-t) - math.exp(-lam * t)) / (lam - 1.0)
        return u0 * math.exp(-2 * nu * k * k * t) + g_sol * growth

    # the forcing varies on unit time scales, so cap the advective default step
    dt = cfg.dt or min(default_dt(u0), 0.01)
    samples = solve_stokes(u0, g, nu, cfg.T, dt)
    rows, uerr, perr = [], [], []
    for s in samples:
        ex = exact(s.t)
        e = lp_norm(s.u - ex, 2) / max(lp_norm(ex, 2), 1e-300)
        pe = lp_norm(s.grad_Pi - grad_phi * math.exp(-s.t), 2) / lp_norm(grad_phi, 2)
        uerr.append(e)
        perr.append(pe)
        rows.append((s.t, e, pe))
    write_rows(out / "stokes.csv", ["t", "u_rel_error", "grad_pi_rel_error"], rows)
    write_plot(out, "stokes.csv", "Stokes validation", [(2, "velocity error"), (3, "pressure error")], logscale=True)
    spec = critical_velocity_spec(cfg.p)
    times = np.array([s.t for s in samples])
    g_norms = norm_series([g(t) for t in times], times, spec, part).besov_series()
    g_l1 = float(cumulative_trapezoid(g_norms, times)[-1]) if times.size > 1 else 0.0
    ratio = stokes_estimate_ratio(samples, g_l1, besov_norm(u0, spec, part), nu, spec, part)
    return {
        "steps": len(samples) - 1,
        "max_u_rel_error": max(uerr),
        "max_grad_pi_rel_error": max(perr),
        "estimate_ratio": ratio,
    }


RUNNERS = {
    "classical-ns": run_classical,
    "smallness-sweep": run_smallness,
    "density-patch": run_density_patch,
    "stokes-validation": run_stokes,
}


def run_scenario(cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.scenario](cfg, out)
