"""One test per acceptance criterion; each records a PASS/FAIL line for the session summary."""

from __future__ import annotations

import math
import time
from itertools import product as pairs

import numpy as np
import pytest
from conftest import record

from lpns2d.cli import main
from lpns2d.estimates import scaling_invariance_check
from lpns2d.harness import CellularFlow, bernstein_fit, heat_decay_fit
from lpns2d.inhom_solver import CoupledSettings, ViscosityLaw, momentum_residual, pressure_fixed_point, run_coupled
from lpns2d.littlewood_paley import bony_terms, build_partition, dyadic_block
from lpns2d.ns_solver import solve_wbar, taylor_green
from lpns2d.patch import PatchScenario, PatchShape, PatchState, advance_markers, run_patch_scenario, seed_markers
from lpns2d.spectral import (
    Grid,
    divergence,
    gradient,
    l2_norm_spectral,
    laplacian,
    leray_project,
    lp_norm,
    perp_gradient,
    product,
    to_spectral,
    zeros,
)


def test_01_partition_of_unity():
    start = time.perf_counter()
    part = build_partition(Grid(256))
    res = part.residual()
    elapsed = time.perf_counter() - start
    ok = res < 1e-12 and elapsed < 1.0
    record(1, "partition of unity", ok, f"residual {res:.1e}, build {elapsed:.2f} s at n=256")
    assert ok


def test_02_almost_orthogonality(part64, rng):
    g = part64.grid
    worst = 0.0
    for _ in range(50):
        u = to_spectral(rng.standard_normal(g.shape), g)
        norm = l2_norm_spectral(u)
        blocks = {j: dyadic_block(u, j, part64) for j in part64.shells}
        for j, k in pairs(part64.shells, part64.shells):
            if abs(j - k) >= 2:
                worst = max(worst, l2_norm_spectral(dyadic_block(blocks[k], j, part64)) / norm)
    ok = worst < 1e-12
    record(2, "almost orthogonality", ok, f"max |D_j D_k u|/|u| = {worst:.1e} over 50 fields")
    assert ok


def test_03_bony_reconstruction(part64, rng):
    g = part64.grid
    worst = 0.0
    for _ in range(100):
        u = to_spectral(rng.standard_normal(g.shape), g)
        v = to_spectral(rng.standard_normal(g.shape), g)
        tu, tv, r = bony_terms(u, v, part64)
        uv = product(u, v)
        worst = max(worst, l2_norm_spectral(tu + tv + r - uv) / l2_norm_spectral(uv))
    ok = worst < 1e-10
    record(3, "Bony reconstruction", ok, f"max relative residual {worst:.1e} over 100 pairs")
    assert ok


def test_04_bernstein_stability(part128, rng):
    lo, hi = part128.j_min + 1, part128.j_max - 1
    spreads = {}
    for p2, p1 in [(1.0, 2.0), (2.0, 4.0), (2.0, math.inf)]:
        spreads[(p2, p1)] = bernstein_fit(part128, p2, p1, 200, rng).spread(lo, hi)
    ok = max(spreads.values()) < 4
    detail = ", ".join(f"(p2,p1)=({a:g},{b:g}): {s:.2f}" for (a, b), s in spreads.items())
    record(4, "Bernstein constant stability", ok, f"spread {detail}")
    assert ok


def test_05_heat_decay(part128, rng):
    fit = heat_decay_fit(part128, rng)
    # the lowest shell holds only a few lattice modes below its nominal annulus
    c = fit.window(part128.j_min + 1, part128.j_max)
    ok = c.min() > 0.05 and c.max() <= 1.0 + 1e-9
    record(5, "heat-kernel shell decay", ok, f"rate/4^j in [{c.min():.3f}, {c.max():.3f}], shells j_min+1..j_max")
    assert ok


def test_06_taylor_green():
    start = time.perf_counter()
    grid = Grid(128)
    u0 = taylor_green(grid)
    traj = solve_wbar(u0, 1.0, 1.0)
    l2 = lp_norm(traj[-1].w, 2)
    exact = lp_norm(u0, 2) * np.exp(-2.0 * traj[-1].t)
    rel = abs(l2 - exact) / exact
    elapsed = time.perf_counter() - start
    ok = rel < 1e-6 and elapsed < 30 and traj[-1].t == pytest.approx(1.0)
    record(6, "Taylor-Green regression", ok, f"relative error {rel:.1e} at t=1, {elapsed:.1f} s")
    assert ok


def test_07_manufactured_pressure(grid64):
    x1, x2 = grid64.coordinates()
    L = grid64.box_length
    a = to_spectral(0.2 * np.sin(2 * np.pi * x1 / L) * np.cos(4 * np.pi * x2 / L), grid64)
    pi_star = to_spectral(np.cos(2 * np.pi * (x1 + 2 * x2) / L) + 0.5 * np.sin(6 * np.pi * x2 / L), grid64)
    rhs = laplacian(pi_star) * -1.0 - divergence(product(a, gradient(pi_star)))
    pi, info = pressure_fixed_point(a, rhs, tol=1e-13)
    rel = lp_norm(gradient(pi) - gradient(pi_star), 2) / lp_norm(gradient(pi_star), 2)
    ok = rel < 1e-8 and info.rate <= info.a_sup + 0.1
    record(7, "manufactured pressure", ok, f"grad error {rel:.1e}, contraction {info.rate:.3f} vs |a|_inf {info.a_sup:.3f}")
    assert ok


def test_08_homogeneous_limit():
    grid = Grid(64)
    ns = solve_wbar(taylor_green(grid), 1.0, 1.0)
    states = run_coupled(zeros(grid), ns, CoupledSettings(ViscosityLaw.linear()))
    peak = max(lp_norm(s.v, 2) for s in states)
    ok = peak <= 1e-10 and states[-1].t == pytest.approx(1.0)
    record(8, "homogeneous-limit exactness", ok, f"max |v|_2 = {peak:.1e} on [0,1]")
    assert ok


def test_09_transport_conservation(default_patch_report):
    rep = default_patch_report
    ok = rep.mass_drift < 1e-6 and rep.range_excess <= 1e-6
    record(9, "transport conservation", ok, f"mass drift {rep.mass_drift:.1e}, range excess {rep.range_excess:.1e}")
    assert ok


def test_10_patch_conservation(default_patch_report):
    rep = default_patch_report
    turning = rep.max_turning
    ok = (
        rep.area_drift < 1e-3
        and rep.patches[0].count == 512
        and np.all(np.isfinite(turning))
        and turning.max() <= 10 * turning[0]
    )
    record(10, "patch conservation", ok, f"area drift {rep.area_drift:.1e}, max turning {turning.max() / turning[0]:.2f}x initial")
    assert ok


def test_11_scaling_invariance():
    grid = Grid(128)
    x1, x2 = grid.coordinates()
    c = grid.box_length / 2
    env = np.exp(-((x1 - c) ** 2 + (x2 - c) ** 2) / 72.0)
    k = 2 * np.pi * 8 / grid.box_length
    u0 = leray_project(perp_gradient(to_spectral(env * np.cos(k * x1), grid)))
    a0 = to_spectral(0.1 * env * np.cos(k * x2), grid)
    ratios = []
    for mode in ("rescaled-grid", "same-grid"):
        rep = scaling_invariance_check(a0, u0, 2.0, 3.5, 3.5, mode)
        ratios += [rep.velocity_ratio, rep.density_ratio]
    ok = all(0.98 <= r <= 1.02 for r in ratios)
    record(11, "scaling invariance", ok, "ratios " + ", ".join(f"{r:.4f}" for r in ratios) + " (ell=2, both modes)")
    assert ok


def test_12_bootstrap_coherence(default_patch_report):
    rep = default_patch_report
    boot = rep.bootstrap
    below = rep.outcome == "below-threshold" and not boot.crossed and boot.peak < boot.threshold
    strong = run_patch_scenario(PatchScenario(sigma=0.4))
    if strong.outcome == "crossing":
        classified = strong.bootstrap is not None and strong.bootstrap.crossed
    else:
        classified = strong.outcome == "contraction-failure" and bool(strong.error)
    ok = below and classified
    record(
        12, "bootstrap coherence", ok,
        f"sigma=0.02 peak {boot.peak:.3f} < {boot.threshold:.3f} (eta {rep.eta.eta:.3g} vs threshold {rep.eta.threshold:.3g}); "
        f"sigma=0.4 -> {strong.outcome}",
    )
    assert ok


def _richardson_order(values):
    d1 = lp_norm(values[0] - values[1], 2)
    d2 = lp_norm(values[1] - values[2], 2)
    return float(np.log2(d1 / d2))


def test_13_temporal_convergence():
    grid = Grid(64, 4 * np.pi)
    x1, x2 = grid.coordinates()
    c = grid.box_length / 2
    a0 = to_spectral(-0.1 * np.exp(-((x1 - c) ** 2 + (x2 - c) ** 2) / 4.0), grid)
    law = ViscosityLaw.linear()
    finals, residuals = [], []
    for dt in (0.04, 0.02, 0.01):
        ns = solve_wbar(taylor_green(grid), 1.0, 0.32, dt)
        states = run_coupled(a0, ns, CoupledSettings(law))
        finals.append(states[-1].v)
        residuals.append(momentum_residual(states, law).max())
    coupled = _richardson_order(finals)
    residual_order = float(np.log2(residuals[1] / residuals[2]))

    flow = CellularFlow(box=8 * np.pi, eps=1.0)

    def sampler(t, pts):
        return np.cos(t) * np.stack(flow.velocity(pts[0], pts[1]))

    start = seed_markers(PatchShape(radius=3.0), (10.0, 9.0), 256)
    ends = []
    for steps in (8, 16, 32, 512):
        patch = PatchState(start, 0.0, 0.0, 1.0)
        for _ in range(steps):
            patch = advance_markers(patch, sampler, 1.0 / steps)
        ends.append(patch.markers)
    err = [np.max(np.abs(e - ends[-1])) for e in ends[:3]]
    marker = float(np.log2(err[1] / err[2]))
    ok = coupled >= 1.7 and residual_order >= 1.7 and marker >= 3.5
    record(13, "temporal convergence", ok, f"coupled Richardson {coupled:.2f}, residual {residual_order:.2f}, marker RK4 {marker:.2f}")
    assert ok


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_14_reproducibility(tmp_path):
    same = True
    files = 0
    for scenario, extra in (("classical-ns", []), ("density-patch", ["--n", "64", "--T", "0.5"])):
        trees = []
        for k in range(2):
            out = tmp_path / f"{scenario}_{k}"
            code = main(["run", "--scenario", scenario, "--deterministic", "--seed", "7", "--out", str(out), *extra])
            assert code == 0
            trees.append(_tree(out))
        same = same and trees[0] == trees[1]
        files += len(trees[0])
    record(14, "reproducibility", same, f"{files} files byte-identical across repeated deterministic runs")
    assert same
