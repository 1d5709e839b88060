from __future__ import annotations

import math

import numpy as np
import pytest

from lpns2d.errors import DomainError, StabilityError, ValidationError
from lpns2d.littlewood_paley import NormSpec
from lpns2d.ns_solver import (
    classical_pressure,
    export_trajectory,
    heat_flow,
    kinetic_energy,
    solve_stokes,
    solve_wbar,
    taylor_green,
    taylor_green_pressure,
    wbar_energy_budget,
)
from lpns2d.spectral import (
    Grid,
    divergence_residual,
    gradient,
    l2_norm_spectral,
    leray_project,
    lp_norm,
    perp_gradient,
    to_physical,
    to_spectral,
)


@pytest.fixture(scope="module")
def small():
    return Grid(64, 2 * np.pi * 2)


def random_solenoidal(grid, rng, scale=1.0, band=3.0):
    noise = to_spectral(rng.standard_normal(grid.shape), grid)
    envelope = np.exp(-grid.k_squared / band**2)
    psi = noise.with_coeffs(noise.coeffs * envelope)
    u = perp_gradient(psi)
    sup = float(np.max(np.abs(to_physical(u))))
    return leray_project(u * (scale / sup))


class TestHeat:
    def test_zero_time_is_identity(self, small):
        u = taylor_green(small)
        assert np.array_equal(heat_flow(u, 1.0, 0.0).coeffs, u.coeffs)

    def test_taylor_green_decay(self, small):
        u = taylor_green(small)
        out = heat_flow(u, 0.7, 0.3)
        assert np.allclose(out.coeffs, u.coeffs * math.exp(-2 * 0.7 * 0.3), atol=1e-9)

    def test_domain(self, small):
        u = taylor_green(small)
        with pytest.raises(DomainError):
            heat_flow(u, 1.0, -1.0)
        with pytest.raises(DomainError):
            heat_flow(u, 0.0, 1.0)


class TestWbar:
    def test_taylor_green_is_exact(self, small):
        traj = solve_wbar(taylor_green(small), 1.0, 0.5, 0.05)
        for s in traj:
            assert l2_norm_spectral(s.w_bar) < 1e-10 * l2_norm_spectral(s.w_L)

    def test_taylor_green_pressure(self, small):
        traj = solve_wbar(taylor_green(small, 0.8), 0.5, 0.2, 0.05)
        s = traj[-1]
        exact = taylor_green_pressure(small, 0.8, 1.0, 0.5, s.t)
        exact = exact - exact.mean()
        assert np.max(np.abs(to_physical(s.p) - exact)) < 1e-10

    def test_rejects_divergent_data(self, small, rng):
        u = to_spectral(rng.standard_normal((2, *small.shape)), small)
        with pytest.raises(ValidationError):
            solve_wbar(u, 1.0, 0.1)

    def test_rejects_bad_parameters(self, small):
        u = taylor_green(small)
        with pytest.raises(DomainError):
            solve_wbar(u, -1.0, 0.1)
        with pytest.raises(DomainError):
            solve_wbar(u, 1.0, 0.1, 0.0)

    def test_cfl_guard(self, small):
        u = taylor_green(small, 100.0)
        with pytest.raises(StabilityError) as info:
            solve_wbar(u, 1.0, 1.0, 0.5)
        assert info.value.advisory_dt > 0

    def test_zero_horizon(self, small):
        traj = solve_wbar(taylor_green(small), 1.0, 0.0, 0.1)
        assert len(traj) == 1 and traj[0].t == 0.0

    def test_general_flow_stays_solenoidal_and_obeys_budget(self, small, rng):
        u0 = random_solenoidal(small, rng, scale=1.0)
        traj = solve_wbar(u0, 1.0, 1.0, 0.05)
        assert len(traj) == 21
        for s in traj:
            assert divergence_residual(s.w) < 1e-10
        lhs, rhs = wbar_energy_budget(traj)
        assert np.all(lhs <= rhs * 1.05 + 1e-12)
        # the perturbation is genuinely nonzero for non-Taylor-Green data
        assert l2_norm_spectral(traj[-1].w_bar) > 0

    def test_energy_decays(self, small, rng):
        u0 = random_solenoidal(small, rng, scale=1.0)
        traj = solve_wbar(u0, 1.0, 1.0, 0.05)
        energies = [kinetic_energy(s.w) for s in traj]
        assert np.all(np.diff(energies) <= 1e-12 * energies[0])

    def test_tiny_perturbation_stays_close(self, small, rng):
        u0 = random_solenoidal(small, rng, scale=1.0)
        du = random_solenoidal(small, rng, scale=1e-8)
        a = solve_wbar(u0, 1.0, 1.0, 0.05)
        b = solve_wbar(u0 + du, 1.0, 1.0, 0.05)
        gap = max(float(np.max(np.abs(to_physical(sa.w - sb.w)))) for sa, sb in zip(a, b))
        assert gap <= 1e-6

    def test_forward_stability(self, small, rng):
        # perturbing u0 by eps moves the solution by O(eps)
        u0 = random_solenoidal(small, rng, scale=1.0)
        du = random_solenoidal(small, rng, scale=1.0)
        base = solve_wbar(u0, 1.0, 0.5, 0.05)[-1].w
        ratios = []
        for eps in (1e-3, 1e-4):
            moved = solve_wbar(u0 + du * eps, 1.0, 0.5, 0.05)[-1].w
            ratios.append(l2_norm_spectral(moved - base) / (eps * l2_norm_spectral(du)))
        assert max(ratios) < 10
        assert ratios[0] == pytest.approx(ratios[1], rel=0.05)

    def test_export(self, tmp_path, small):
        from lpns2d.littlewood_paley import build_partition

        traj = solve_wbar(taylor_green(small), 1.0, 0.1, 0.05)
        index = export_trajectory(traj, tmp_path, NormSpec(-0.5, 4, 1), build_partition(small))
        lines = index.read_text().splitlines()
        assert lines[0] == "t,file,l2_energy,besov_norm"
        assert len(lines) == 1 + len(traj)
        assert (tmp_path / "w_0002.field").exists()


def test_classical_pressure_of_gradient_flow(small):
    # for TG the pressure solves -Delta p = div(w . grad w) with the closed form
    u = taylor_green(small)
    p = classical_pressure(u)
    exact = taylor_green_pressure(small, 1.0, 1.0, 1.0, 0.0)
    assert np.max(np.abs(to_physical(p) - (exact - exact.mean()))) < 1e-10


class TestStokes:
    def test_unforced_is_heat(self, small, rng):
        u0 = random_solenoidal(small, rng)
        out = solve_stokes(u0, None, 0.5, 0.4, 0.1)
        assert l2_norm_spectral(out[-1].u - heat_flow(u0, 0.5, 0.4)) < 1e-12 * l2_norm_spectral(u0)

    def test_gradient_forcing_is_pressure(self, small, rng):
        phi = to_spectral(np.sin(2 * np.pi * small.coordinates()[0] / small.box_length), small)
        g = lambda t: gradient(phi) * math.exp(-t)  # noqa: E731
        u0 = taylor_green(small)
        out = solve_stokes(u0, g, 1.0, 0.3, 0.1)
        assert l2_norm_spectral(out[-1].u - heat_flow(u0, 1.0, 0.3)) < 1e-10
        assert l2_norm_spectral(out[-1].grad_Pi - g(out[-1].t)) < 1e-10

    def test_second_order(self, small):
        # forced TG mode: u = e^{-t} u_TG solves d_t u - Delta u = e^{-t} u_TG
        u0 = taylor_green(small)
        g = lambda t: u0 * math.exp(-t)  # noqa: E731
        errs = []
        for dt in (0.1, 0.05, 0.025):
            out = solve_stokes(u0, g, 1.0, 1.0, dt)
            errs.append(lp_norm(out[-1].u - u0 * math.exp(-1.0), 2))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)
