"""Constant-density Navier-Stokes split as w = w_L + w_bar, plus a linear Stokes solver.

w_L = exp(mu t Delta) u0 is evaluated exactly at every stage time.  The
perturbation w_bar starts from zero and is advanced with an integrating-factor
RK2 (Heun) scheme: diffusion is integrated exactly, the Leray-projected
nonlinearity P[(w . grad) w] explicitly.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import DomainError, StabilityError, ValidationError
from .littlewood_paley import DyadicPartition, NormSpec, besov_norm, cumulative_trapezoid
from .spectral import (
    Grid,
    SpectralField,
    advection,
    derivative,
    divergence,
    divergence_residual,
    gradient,
    inverse_laplacian,
    leray_project,
    lp_norm,
    pointwise_modulus,
    to_spectral,
    write_snapshot,
    zeros,
)

log = logging.getLogger(__name__)

SOLENOIDAL_TOL = 1e-10
CFL_LIMIT = 0.5


@dataclass
class NSState:
    w_L: SpectralField
    w_bar: SpectralField
    p: SpectralField
    t: float
    mu: float

    @property
    def w(self) -> SpectralField:
        return self.w_L + self.w_bar

    @property
    def grad_p(self) -> SpectralField:
        return gradient(self.p)


@dataclass
class NSTrajectory:
    u0: SpectralField
    mu: float
    dt: float
    states: list[NSState] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[NSState]:
        return iter(self.states)

    def __getitem__(self, i: int) -> NSState:
        return self.states[i]


def check_solenoidal(u: SpectralField, tol: float = 1e-8, what: str = "velocity") -> None:
    if u.comps != 2:
        raise ValidationError(f"{what} must be a 2-component field")
    res = divergence_residual(u)
    if res > tol:
        raise ValidationError(f"{what} is not solenoidal (relative divergence {res:.2e} > {tol:.0e})")


def heat_flow(u0: SpectralField, mu: float, t: float) -> SpectralField:
    """exp(mu t Delta) u0, applied mode by mode."""
    if t < 0:
        raise DomainError(f"heat flow needs t >= 0, got {t}")
    if mu <= 0:
        raise DomainError(f"viscosity must be positive, got {mu}")
    return u0.with_coeffs(u0.coeffs * np.exp(-mu * t * u0.grid.k_squared), solenoidal=u0.solenoidal)


def classical_pressure(w: SpectralField) -> SpectralField:
    """Solve -Delta p = div((w . grad) w), zero mode of p set to 0."""
    rhs = divergence(advection(w, w))
    return inverse_laplacian(rhs) * -1.0


def default_dt(u0: SpectralField) -> float:
    sup = float(pointwise_modulus(u0).max())
    return 0.25 * u0.grid.spacing / max(1.0, sup)


def _steps(T: float, dt: float) -> tuple[int, float]:
    if dt <= 0:
        raise DomainError(f"time step must be positive, got {dt}")
    if T < 0:
        raise DomainError(f"horizon must be nonnegative, got {T}")
    count = max(1, math.ceil(T / dt - 1e-12)) if T > 0 else 0
    return count, (T / count if count else dt)


def _check_cfl(w: SpectralField, dt: float) -> None:
    sup = float(pointwise_modulus(w).max())
    h = w.grid.spacing
    if sup * dt / h > CFL_LIMIT:
        advisory = 0.25 * h / max(sup, 1.0)
        raise StabilityError(
            f"CFL number {sup * dt / h:.3f} exceeds {CFL_LIMIT}; try dt <= {advisory:.4g}", advisory
        )


def solve_wbar(
    u0: SpectralField, mu: float, T: float, dt: float | None = None
) -> NSTrajectory:
    """Advance w_bar on [0, T]; every step is recorded."""
    check_solenoidal(u0, what="u0")
    if mu <= 0:
        raise DomainError(f"viscosity must be positive, got {mu}")
    u0 = leray_project(u0)
    dt = default_dt(u0) if dt is None else dt
    count, dt = _steps(T, dt)
    grid = u0.grid
    decay = np.exp(-mu * dt * grid.k_squared)

    def rhs(wbar: SpectralField, t: float) -> SpectralField:
        w = heat_flow(u0, mu, t) + wbar
        return leray_project(advection(w, w)) * -1.0

    def record(wbar: SpectralField, t: float) -> NSState:
        wl = heat_flow(u0, mu, t)
        return NSState(wl, wbar, classical_pressure(wl + wbar), t, mu)

    traj = NSTrajectory(u0, mu, dt)
    wbar = zeros(grid, 2)
    traj.states.append(record(wbar, 0.0))
    for k in range(count):
        t = k * dt
        _check_cfl(traj.states[-1].w, dt)
        n0 = rhs(wbar, t)
        pred = wbar.with_coeffs(decay * (wbar.coeffs + dt * n0.coeffs))
        n1 = rhs(pred, t + dt)
        new = decay * wbar.coeffs + 0.5 * dt * (decay * n0.coeffs + n1.coeffs)
        wbar = leray_project(wbar.with_coeffs(new))
        traj.states.append(record(wbar, (k + 1) * dt))
    return traj


@dataclass
class StokesSample:
    t: float
    u: SpectralField
    grad_Pi: SpectralField


def solve_stokes(
    u0: SpectralField,
    g: Callable[[float], SpectralField] | None,
    nu: float,
    T: float,
    dt: float,
) -> list[StokesSample]:
    """d_t u - nu Delta u + grad Pi = g, div u = 0.

    Diffusion is integrated exactly; the projected forcing P g enters through
    the trapezoidal integrating-factor rule, and grad Pi = (I - P) g.
    """
    check_solenoidal(u0, what="u0")
    if nu <= 0:
        raise DomainError(f"viscosity must be positive, got {nu}")
    count, dt = _steps(T, dt)
    decay = np.exp(-nu * dt * u0.grid.k_squared)
    zero = zeros(u0.grid, 2)

    def forcing(t: float) -> tuple[SpectralField, SpectralField]:
        if g is None:
            return zero, zero
        gt = g(t)
        pg = leray_project(gt)
        return pg, gt - pg

    u = leray_project(u0)
    pg0, grad0 = forcing(0.0)
    out = [StokesSample(0.0, u, grad0)]
    for k in range(count):
        pg1, grad1 = forcing((k + 1) * dt)
        new = decay * u.coeffs + 0.5 * dt * (decay * pg0.coeffs + pg1.coeffs)
        u = leray_project(u.with_coeffs(new))
        out.append(StokesSample((k + 1) * dt, u, grad1))
        pg0 = pg1
    return out


def kinetic_energy(u: SpectralField) -> float:
    """(1/2) ||u||_{L^2}^2."""
    return 0.5 * lp_norm(u, 2) ** 2


def wbar_energy_budget(traj: NSTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the w_bar energy inequality, integrated in time (trapezoid).

    lhs(t) = 1/2 ||w_bar(t)||^2 + mu int_0^t ||grad w_bar||^2
    rhs(t) = int_0^t ( ||w_bar||^2 ||grad w_L||_inf + ||w_bar|| ||w_L . grad w_L|| )
    """
    times = traj.times
    dissip, forcing, energy = [], [], []
    for s in traj:
        wb, wl = s.w_bar, s.w_L
        grad_sq = sum(lp_norm(derivative(wb.component(c), ax), 2) ** 2 for c in range(2) for ax in (1, 2))
        dissip.append(traj.mu * grad_sq)
        grad_wl = np.stack(
            [np.abs(np.fft.ifft2(derivative(wl.component(c), ax).coeffs[0]).real) for c in range(2) for ax in (1, 2)]
        )
        # operator norm of the 2x2 gradient bounded by its Frobenius norm
        sup_grad = float(np.sqrt((grad_wl**2).sum(axis=0)).max())
        l2 = lp_norm(wb, 2)
        forcing.append(l2 * l2 * sup_grad + l2 * lp_norm(advection(wl, wl), 2))
        energy.append(0.5 * l2 * l2)
    lhs = np.array(energy) + cumulative_trapezoid(np.array(dissip), times)
    rhs = cumulative_trapezoid(np.array(forcing), times)
    return lhs, rhs


def taylor_green(grid: Grid, amplitude: float = 1.0, wavenumber: float = 1.0) -> SpectralField:
    """(sin x1 cos x2, -cos x1 sin x2) scaled; needs wavenumber*L/(2 pi) integral."""
    cycles = wavenumber * grid.box_length / (2 * np.pi)
    if abs(cycles - round(cycles)) > 1e-9:
        raise ValidationError("Taylor-Green wavenumber must fit the periodic box")
    x1, x2 = grid.coordinates()
    k = wavenumber
    u = amplitude * np.stack([np.sin(k * x1) * np.cos(k * x2), -np.cos(k * x1) * np.sin(k * x2)])
    f = to_spectral(u, grid)
    return f.with_coeffs(f.coeffs, solenoidal=True)


def taylor_green_pressure(grid: Grid, amplitude: float, wavenumber: float, mu: float, t: float) -> np.ndarray:
    """Pressure of the decaying Taylor-Green vortex, sampled on the grid."""
    x1, x2 = grid.coordinates()
    k = wavenumber
    decay = math.exp(-4.0 * mu * k * k * t)
    return amplitude**2 * (np.cos(2 * k * x1) + np.cos(2 * k * x2)) / 4.0 * decay


def export_trajectory(traj: NSTrajectory, out_dir: str | Path, spec: NormSpec, part: DyadicPartition) -> Path:
    """One snapshot of w per sample plus ``index.csv`` with columns t, file, l2_energy, besov_norm."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = out / "index.csv"
    with open(index, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "file", "l2_energy", "besov_norm"])
        for k, s in enumerate(traj):
            name = f"w_{k:04d}.field"
            w = s.w
            write_snapshot(out / name, w)
            writer.writerow([repr(float(s.t)), name, repr(kinetic_energy(w)), repr(besov_norm(w, spec, part))])
    return index
