"""Density-fluctuation transport, implicit pressure and the v momentum equation.

Unknowns: a = 1/rho - 1, the correction velocity v (u = v + w) and the
pressure correction Pi_1 (Pi = Pi_1 + p).  The classical pair (w, p) comes
from a precomputed :class:`~lpns2d.ns_solver.NSTrajectory` on the same time grid.

With M(u) = grad u + grad u^T (so div M(u) = Delta u for solenoidal u) and
mu = mu~(0), the v equation reads

    d_t v - mu Delta v = G - (1 + a) grad Pi_1
    G = F + mu a Delta v + (1 + a) div[(mu~(a) - mu) M(v)] - (v.grad v + w.grad v + v.grad w)
    F = (1 + a) div[(mu~(a) - mu) M(w)] + mu a Delta w - a grad p

and the divergence of the momentum equation gives the implicit pressure
problem -Delta Pi_1 = div(a grad Pi_1) - div G, solved by Picard iteration.

A step runs: pressure at t_n -> predictor for v and a -> pressure at t_n+1 ->
corrector for v -> semi-Lagrangian transport of a with u = v + w.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ContractionError, StateError, ValidationError
from .ns_solver import NSTrajectory
from .spectral import (
    Grid,
    SpectralField,
    advection,
    dealias,
    divergence,
    gradient,
    inverse_laplacian,
    l2_norm_spectral,
    laplacian,
    leray_project,
    matrix_divergence,
    product,
    strain,
    to_physical,
    to_spectral,
    zeros,
)

log = logging.getLogger(__name__)

PRESSURE_TOL = 1e-10
PRESSURE_MAX_ITER = 200


@dataclass(frozen=True)
class ViscosityLaw:
    """rho -> mu(rho); ``mu_tilde(a) = mu(1 / (1 + a))``."""

    mu_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    coefficients: tuple[float, ...] = ()

    @classmethod
    def constant(cls, mu: float) -> ViscosityLaw:
        return cls(lambda rho: np.full_like(np.asarray(rho, dtype=float), mu), "constant", (mu,))

    @classmethod
    def linear(cls, mu: float = 1.0) -> ViscosityLaw:
        """mu(rho) = mu * rho."""
        return cls(lambda rho: mu * np.asarray(rho, dtype=float), "linear", (0.0, mu))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> ViscosityLaw:
        """mu(rho) = c0 + c1 rho + c2 rho^2 + ..."""
        coeffs = tuple(float(c) for c in coefficients)
        if not coeffs:
            raise ConfigurationError("polynomial viscosity law needs at least one coefficient")
        return cls(lambda rho: np.polynomial.polynomial.polyval(np.asarray(rho, dtype=float), coeffs), "custom-poly", coeffs)

    @property
    def mu0(self) -> float:
        """mu~(0) = mu(1)."""
        return float(self.mu_fn(np.array(1.0)))

    def mu_tilde(self, a: np.ndarray) -> np.ndarray:
        return self.mu_fn(1.0 / (1.0 + np.asarray(a, dtype=float)))

    def check_positive(self, a_range: tuple[float, float], samples: int = 257) -> float:
        """Minimum of mu~ over the attained range of a; raises when not positive."""
        grid = np.linspace(a_range[0], a_range[1], samples)
        low = float(np.min(self.mu_tilde(grid)))
        if not low > 0:
            raise ConfigurationError(f"viscosity law is not positive on a in {a_range} (min {low:.3g})")
        return low


def scalar_shift(f: SpectralField, c: float) -> SpectralField:
    """f + c for a scalar field."""
    coeffs = f.coeffs.copy()
    coeffs[0, 0, 0] += c * f.grid.n**2
    return f.with_coeffs(coeffs)


def check_vacuum(a_samples: np.ndarray, delta: float) -> None:
    low = float(np.min(1.0 + a_samples))
    if low < delta:
        raise StateError(f"vacuum bound violated: min(1 + a) = {low:.3g} < delta = {delta:g}")


def viscosity_field(a: SpectralField, law: ViscosityLaw, delta: float = 1e-3) -> SpectralField:
    """mu~(a) evaluated on grid samples, returned dealiased."""
    samples = to_physical(a)
    check_vacuum(samples, delta)
    return dealias(to_spectral(law.mu_tilde(samples), a.grid))


def _matrix_times(scalar: SpectralField, m: list[list[SpectralField]]) -> list[list[SpectralField]]:
    return [[product(scalar, m[i][j]) for j in range(2)] for i in range(2)]


def compute_F(
    a: SpectralField,
    w: SpectralField,
    p: SpectralField,
    law: ViscosityLaw,
    mu_field: SpectralField | None = None,
) -> SpectralField:
    """F = (1 + a) div[(mu~(a) - mu) M(w)] + mu a Delta w - a grad p."""
    mu = law.mu0
    if mu_field is None:
        mu_field = viscosity_field(a, law)
    excess = scalar_shift(mu_field, -mu)
    visc = matrix_divergence(_matrix_times(excess, strain(w)))
    out = visc + product(a, visc)
    out = out + product(a, laplacian(w)) * mu
    out = out - product(a, gradient(p))
    return out


@dataclass
class PressureInfo:
    iterations: int
    factors: list[float]
    a_sup: float

    @property
    def rate(self) -> float:
        """Largest observed ratio of successive updates (0 when fewer than 2 updates)."""
        return max(self.factors) if self.factors else 0.0


def pressure_fixed_point(
    a: SpectralField,
    rhs: SpectralField,
    tol: float = PRESSURE_TOL,
    max_iter: int = PRESSURE_MAX_ITER,
    kappa: float | None = None,
) -> tuple[SpectralField, PressureInfo]:
    """Solve -Delta Pi = div(a grad Pi) + rhs by Picard iteration.

    Pi^0 = (-Delta)^-1 rhs and Pi^{m+1} = (-Delta)^-1 [div(a grad Pi^m) + rhs],
    stopped when the relative L^2 update drops below ``tol``.
    """
    a_sup = float(np.max(np.abs(to_physical(a))))
    if kappa is not None and a_sup > kappa:
        raise ContractionError(
            f"||a||_inf = {a_sup:.4g} exceeds the contraction margin kappa = {kappa:g}", a_sup, 0
        )
    solve = lambda f: inverse_laplacian(f) * -1.0  # noqa: E731
    pi = solve(rhs)
    factors: list[float] = []
    last_update = None
    for it in range(1, max_iter + 1):
        new = solve(divergence(product(a, gradient(pi))) + rhs)
        update = l2_norm_spectral(new - pi)
        size = l2_norm_spectral(new)
        pi = new
        if last_update is not None and last_update > 0 and update > 0:
            factors.append(update / last_update)
        last_update = update
        if size == 0 or update <= tol * size:
            return pi, PressureInfo(it, factors, a_sup)
    raise ContractionError(
        f"pressure iteration did not converge in {max_iter} steps (||a||_inf = {a_sup:.4g})", a_sup, max_iter
    )


def momentum_source(
    a: SpectralField,
    v: SpectralField,
    w: SpectralField,
    p: SpectralField,
    law: ViscosityLaw,
    mu_field: SpectralField | None = None,
) -> SpectralField:
    """G: every explicit term of the v equation except the pressure gradient."""
    mu = law.mu0
    if mu_field is None:
        mu_field = viscosity_field(a, law)
    F = compute_F(a, w, p, law, mu_field)
    excess = scalar_shift(mu_field, -mu)
    visc = matrix_divergence(_matrix_times(excess, strain(v)))
    extra = visc + product(a, visc) + product(a, laplacian(v)) * mu
    nonlinear = advection(v, v) + advection(w, v) + advection(v, w)
    return F + extra - nonlinear


@dataclass
class PressureSolution:
    Pi1: SpectralField
    grad_Pi1: SpectralField
    info: PressureInfo


def solve_pressure(
    a: SpectralField,
    mu_field: SpectralField,
    v: SpectralField,
    w: SpectralField,
    p: SpectralField,
    law: ViscosityLaw,
    kappa: float = 0.5,
    tol: float = PRESSURE_TOL,
    max_iter: int = PRESSURE_MAX_ITER,
    source: SpectralField | None = None,
) -> PressureSolution:
    """grad Pi_1 from the implicit elliptic problem; zero mode of Pi_1 is 0."""
    if source is None:
        source = momentum_source(a, v, w, p, law, mu_field)
    rhs = divergence(source) * -1.0
    pi, info = pressure_fixed_point(a, rhs, tol, max_iter, kappa)
    return PressureSolution(pi, gradient(pi), info)


# --- transport ------------------------------------------------------------


def _velocity_samples(u) -> np.ndarray:
    if isinstance(u, SpectralField):
        return np.asarray(to_physical(u).real)
    return np.asarray(u, dtype=float)


def _interp(field_samples: np.ndarray, points: np.ndarray, spacing: float) -> np.ndarray:
    """Periodic cubic-spline interpolation at physical points of shape (2, ...)."""
    coords = points / spacing
    return ndimage.map_coordinates(field_samples, coords, order=3, mode="grid-wrap")


def conserve_mass(values: np.ndarray, target: float, lo: float, hi: float) -> np.ndarray:
    """Restore sum(values) = target using a correction supported away from the bounds.

    The correction is proportional to (a - lo)(hi - a), so it cannot push a value
    past either bound as long as |c| (hi - lo) <= 1; larger deficits are only
    partially restored.
    """
    deficit = target - float(values.sum())
    if deficit == 0 or hi <= lo:
        return values
    weight = (values - lo) * (hi - values)
    total = float(weight.sum())
    if total <= 0:
        return values
    c = deficit / total
    limit = 1.0 / (hi - lo)
    if abs(c) > limit:
        log.warning("mass fixer saturated: restoring %.3g of a %.3g deficit", limit / abs(c), deficit)
        c = math.copysign(limit, c)
    return np.clip(values + c * weight, lo, hi)


@dataclass
class TransportReport:
    max_displacement_cells: float
    clamped: int
    mass_correction: float


def advect_scalar(
    a: SpectralField,
    u,
    dt: float,
    u_next=None,
    bounds: tuple[float, float] | None = None,
    report: list | None = None,
) -> SpectralField:
    """Semi-Lagrangian step of d_t a + u . grad a = 0.

    ``u`` (and ``u_next`` at t + dt, defaulting to ``u``) may be vector fields
    or physical (2, n, n) sample arrays.  Departure points are traced back with
    Heun's method; ``a`` is interpolated with periodic cubic splines, clamped to
    ``bounds`` (default: the current range of ``a``) and its integral restored.
    Repeated steps should pass the initial range: re-reading the current range
    each step ratchets the sampled peak down.
    """
    grid = a.grid
    h = grid.spacing
    now = _velocity_samples(u)
    nxt = now if u_next is None else _velocity_samples(u_next)
    if now.shape != (2, *grid.shape) or nxt.shape != now.shape:
        raise ValidationError("velocity samples must have shape (2, n, n)")
    x1, x2 = grid.coordinates()
    x = np.stack([x1, x2])
    first = x - dt * nxt
    back_now = np.stack([_interp(now[c], first, h) for c in range(2)])
    departure = x - 0.5 * dt * (nxt + back_now)
    disp = float(np.max(np.hypot(*(x - departure)))) / h
    if disp > 2.0:
        log.warning("semi-Lagrangian displacement %.2f cells exceeds 2; consider a smaller dt", disp)

    samples = to_physical(a).real
    lo, hi = bounds if bounds is not None else (float(samples.min()), float(samples.max()))
    new = _interp(samples, departure, h)
    clamped = int(np.count_nonzero((new < lo) | (new > hi)))
    new = np.clip(new, lo, hi)
    before = float(new.sum())
    new = conserve_mass(new, float(samples.sum()), lo, hi)
    if report is not None:
        report.append(TransportReport(disp, clamped, float(new.sum()) - before))
    return to_spectral(new, grid)


# --- coupled stepping -----------------------------------------------------


@dataclass
class SolverState:
    a: SpectralField
    v: SpectralField
    grad_Pi1: SpectralField
    Pi1: SpectralField
    t: float
    step: int
    ns: NSTrajectory
    pressure_iterations: int = 0
    pressure_rate: float = 0.0


@dataclass
class CoupledSettings:
    law: ViscosityLaw
    kappa: float = 0.5
    delta: float = 1e-3
    pressure_tol: float = PRESSURE_TOL
    pressure_max_iter: int = PRESSURE_MAX_ITER
    a_bounds: tuple[float, float] | None = None
    transport_log: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ConfigurationError(f"kappa must lie in (0, 1), got {self.kappa}")


def initial_state(a0: SpectralField, ns: NSTrajectory, settings: CoupledSettings) -> SolverState:
    samples = to_physical(a0)
    check_vacuum(samples, settings.delta)
    if settings.a_bounds is None:
        settings.a_bounds = (float(samples.min()), float(samples.max()))
    settings.law.check_positive(settings.a_bounds)
    grid = a0.grid
    v = zeros(grid, 2)
    s0 = ns[0]
    sol = solve_pressure(
        a0, viscosity_field(a0, settings.law, settings.delta), v, s0.w, s0.p, settings.law,
        settings.kappa, settings.pressure_tol, settings.pressure_max_iter,
    )
    return SolverState(a0, v, sol.grad_Pi1, sol.Pi1, 0.0, 0, ns, sol.info.iterations, sol.info.rate)


def _rhs(a, v, w, p, settings: CoupledSettings) -> tuple[SpectralField, PressureSolution]:
    law = settings.law
    mu_field = viscosity_field(a, law, settings.delta)
    source = momentum_source(a, v, w, p, law, mu_field)
    sol = solve_pressure(
        a, mu_field, v, w, p, law, settings.kappa, settings.pressure_tol, settings.pressure_max_iter, source
    )
    forcing = source - sol.grad_Pi1 - product(a, sol.grad_Pi1)
    return forcing, sol


def step_v(state: SolverState, dt: float, settings: CoupledSettings) -> SolverState:
    """One integrating-factor RK2 step of (a, v) on the NS time grid."""
    ns = state.ns
    if abs(dt - ns.dt) > 1e-12 * max(1.0, ns.dt):
        raise ValidationError(f"coupled step dt={dt} must match the NS trajectory step {ns.dt}")
    k = state.step
    if k + 1 >= len(ns):
        raise ValidationError("NS trajectory does not cover the requested step")
    mu = settings.law.mu0
    grid = state.a.grid
    decay = np.exp(-mu * dt * grid.k_squared)
    s0, s1 = ns[k], ns[k + 1]
    w0, w1 = s0.w, s1.w

    r0, _ = _rhs(state.a, state.v, w0, s0.p, settings)
    v_pred = leray_project(state.v.with_coeffs(decay * (state.v.coeffs + dt * r0.coeffs)))
    a_pred = advect_scalar(state.a, state.v + w0, dt, v_pred + w1, settings.a_bounds)
    check_vacuum(to_physical(a_pred), settings.delta)

    r1, sol1 = _rhs(a_pred, v_pred, w1, s1.p, settings)
    new = decay * state.v.coeffs + 0.5 * dt * (decay * r0.coeffs + r1.coeffs)
    v_new = leray_project(state.v.with_coeffs(new))
    a_new = advect_scalar(state.a, state.v + w0, dt, v_new + w1, settings.a_bounds, settings.transport_log)
    check_vacuum(to_physical(a_new), settings.delta)
    return SolverState(
        a_new, v_new, sol1.grad_Pi1, sol1.Pi1, s1.t, k + 1, ns, sol1.info.iterations, sol1.info.rate
    )


def run_coupled(
    a0: SpectralField,
    ns: NSTrajectory,
    settings: CoupledSettings,
    callback: Callable[[SolverState], None] | None = None,
) -> list[SolverState]:
    """Advance over the whole NS trajectory; returns every state (including t = 0)."""
    state = initial_state(a0, ns, settings)
    states = [state]
    if callback:
        callback(state)
    for _ in range(len(ns) - 1):
        state = step_v(state, ns.dt, settings)
        states.append(state)
        if callback:
            callback(state)
    return states


@dataclass
class PhysicalSolution:
    rho: np.ndarray
    u: np.ndarray
    Pi: np.ndarray


def assemble_solution(state: SolverState, delta: float = 1e-3) -> PhysicalSolution:
    """rho = 1/(1 + a), u = v + w, Pi = Pi_1 + p as grid samples."""
    a = to_physical(state.a)
    check_vacuum(a, delta)
    s = state.ns[state.step]
    return PhysicalSolution(1.0 / (1.0 + a), to_physical(state.v + s.w), to_physical(state.Pi1 + s.p))


def momentum_residual(states: Sequence[SolverState], law: ViscosityLaw) -> np.ndarray:
    """Residual of d_t u + u.grad u + (1 + a)(grad Pi - div(mu~(a) M(u))) at interior samples.

    The time derivative is the centred difference of u = v + w; returns the
    L^2 norm of the residual at every interior sample.
    """
    out = []
    for prev, cur, nxt in zip(states[:-2], states[1:-1], states[2:]):
        ns = cur.ns
        u_prev = prev.v + ns[prev.step].w
        u_next = nxt.v + ns[nxt.step].w
        u = cur.v + ns[cur.step].w
        dudt = (u_next - u_prev) / (nxt.t - prev.t)
        mu_field = viscosity_field(cur.a, law)
        visc = matrix_divergence(_matrix_times(mu_field, strain(u)))
        grad_pi = cur.grad_Pi1 + gradient(ns[cur.step].p)
        bracket = grad_pi - visc
        res = dudt + advection(u, u) + bracket + product(cur.a, bracket)
        out.append(l2_norm_spectral(dealias(res)))
    return np.array(out)


def clone_state(state: SolverState, **changes) -> SolverState:
    return replace(state, **changes)


__all__ = [
    "CoupledSettings",
    "PressureInfo",
    "SolverState",
    "ViscosityLaw",
    "advect_scalar",
    "assemble_solution",
    "compute_F",
    "conserve_mass",
    "initial_state",
    "momentum_residual",
    "momentum_source",
    "pressure_fixed_point",
    "run_coupled",
    "scalar_shift",
    "solve_pressure",
    "step_v",
    "viscosity_field",
]
