"""Density patches: marker tracking of the patch boundary, conservation and C^1 diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import shapely
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .errors import DomainError, GeometryError, ValidationError
from .littlewood_paley import DyadicPartition, NormSpec, besov_norm
from .spectral import Grid, SpectralField, dealias, product, to_physical, to_spectral

log = logging.getLogger(__name__)

MIN_MARKERS = 256
REDISTRIBUTE_RATIO = 3.0
MODULUS_GAPS = (1, 2, 4, 8)


@dataclass
class PatchShape:
    kind: str = "disk"
    radius: float = 10.0
    semi_axes: tuple[float, float] = (12.0, 6.0)
    star_amplitude: float = 0.2
    star_lobes: int = 5
    center: tuple[float, float] | None = None

    def curve(self, theta: np.ndarray, center: tuple[float, float]) -> np.ndarray:
        c1, c2 = center
        if self.kind == "disk":
            r = np.full_like(theta, self.radius)
            return np.stack([c1 + r * np.cos(theta), c2 + r * np.sin(theta)])
        if self.kind == "ellipse":
            a, b = self.semi_axes
            return np.stack([c1 + a * np.cos(theta), c2 + b * np.sin(theta)])
        if self.kind == "star":
            r = self.radius * (1.0 + self.star_amplitude * np.cos(self.star_lobes * theta))
            return np.stack([c1 + r * np.cos(theta), c2 + r * np.sin(theta)])
        raise ValidationError(f"unknown patch shape {self.kind!r}")

    def extent(self) -> float:
        if self.kind == "ellipse":
            return max(self.semi_axes)
        if self.kind == "star":
            return self.radius * (1.0 + abs(self.star_amplitude))
        return self.radius


@dataclass
class PatchState:
    markers: np.ndarray  # (2, M), unwrapped box coordinates, counter-clockwise
    sigma: float
    t: float
    area0: float
    wrapped: bool = False
    redistributions: int = 0

    @property
    def count(self) -> int:
        return self.markers.shape[1]

    def area(self) -> float:
        return shoelace_area(self.markers)

    def area_drift(self) -> float:
        return abs(self.area() - self.area0) / self.area0 if self.area0 else 0.0


def shoelace_area(markers: np.ndarray) -> float:
    x, y = markers
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def perimeter(markers: np.ndarray) -> float:
    return float(np.sum(np.hypot(*(np.roll(markers, -1, axis=1) - markers))))


def is_simple(markers: np.ndarray) -> bool:
    return bool(shapely.LinearRing(markers.T).is_simple)


def resample_arclength(markers: np.ndarray, count: int) -> np.ndarray:
    """Re-seed ``count`` points uniformly in arclength along a periodic cubic spline."""
    closed = np.concatenate([markers, markers[:, :1]], axis=1)
    seg = np.hypot(*np.diff(closed, axis=1))
    if np.any(seg <= 0):
        raise GeometryError("repeated markers: zero-length segment")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, closed.T, bc_type="periodic")
    targets = np.linspace(0.0, s[-1], count, endpoint=False)
    return spline(targets).T


def seed_markers(shape: PatchShape, center: tuple[float, float], count: int) -> np.ndarray:
    theta = np.linspace(0.0, 2 * np.pi, 16 * count, endpoint=False)
    dense = shape.curve(theta, center)
    return resample_arclength(dense, count)


def signed_distance(markers: np.ndarray, grid: Grid) -> np.ndarray:
    """Distance of every grid node to the closed polyline, negative inside."""
    x1, x2 = grid.coordinates()
    poly = shapely.Polygon(markers.T)
    ring = poly.exterior
    pts = shapely.points(x1.ravel(), x2.ravel())
    dist = shapely.distance(ring, pts)
    inside = shapely.contains_xy(poly, x1.ravel(), x2.ravel())
    return np.where(inside, -dist, dist).reshape(grid.shape)


def cell_fractions(markers: np.ndarray, grid: Grid) -> np.ndarray:
    """Area fraction of the polygon inside each node-centred grid cell."""
    h = grid.spacing
    d = signed_distance(markers, grid)
    frac = (d < 0).astype(float)
    cut = np.abs(d) < h / math.sqrt(2.0)
    if cut.any():
        x1, x2 = grid.coordinates()
        c1, c2 = x1[cut], x2[cut]
        cells = shapely.box(c1 - h / 2, c2 - h / 2, c1 + h / 2, c2 + h / 2)
        poly = shapely.Polygon(markers.T)
        frac[cut] = shapely.area(shapely.intersection(cells, poly)) / (h * h)
    return frac


def mollified_indicator(markers: np.ndarray, grid: Grid, molly_cells: float) -> np.ndarray:
    """Indicator convolved with a periodic Gaussian of standard deviation ``molly_cells`` cells.

    The sharp indicator is taken as exact cell area fractions, so the total
    mass equals the polygon area and the Gaussian filter leaves it unchanged.
    """
    width = molly_cells * grid.spacing
    if width <= 0:
        raise ValidationError("mollification width must be positive")
    coeffs = np.fft.fft2(cell_fractions(markers, grid)) * np.exp(-0.5 * width**2 * grid.k_squared)
    return np.fft.ifft2(coeffs).real


def patch_amplitude(sigma: float) -> float:
    return -sigma / (1.0 + sigma)


def init_patch(
    shape: PatchShape,
    sigma: float,
    grid: Grid,
    molly_cells: float = 2.0,
    markers: int = 512,
    margin: float = 0.1,
) -> tuple[SpectralField, PatchState]:
    """a0 = -sigma/(1+sigma) times the mollified indicator, plus boundary markers."""
    if not abs(sigma) < 1:
        raise ValidationError(f"density jump must satisfy |sigma| < 1, got {sigma}")
    if markers < MIN_MARKERS:
        raise ValidationError(f"need at least {MIN_MARKERS} markers, got {markers}")
    L = grid.box_length
    center = shape.center if shape.center is not None else (L / 2, L / 2)
    reach = shape.extent() + 2 * molly_cells * grid.spacing
    lo, hi = margin * L, (1 - margin) * L
    if min(center) - reach < lo or max(center) + reach > hi:
        raise GeometryError(f"{shape.kind} patch reaches the {margin:.0%} box margin")
    pts = seed_markers(shape, center, markers)
    ind = mollified_indicator(pts, grid, molly_cells)
    a0 = to_spectral(patch_amplitude(sigma) * ind, grid)
    return a0, PatchState(pts, sigma, 0.0, shoelace_area(pts))


# --- velocity samplers ----------------------------------------------------

Sampler = Callable[[float, np.ndarray], np.ndarray]


class GridVelocityHistory:
    """Cubic-spline interpolation in space, linear in time, over stored grid velocities."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.times: list[float] = []
        self._coeffs: list[np.ndarray] = []

    def append(self, t: float, u) -> None:
        if self.times and t <= self.times[-1]:
            raise ValidationError("velocity history times must increase")
        samples = np.asarray(to_physical(u).real if isinstance(u, SpectralField) else u, dtype=float)
        self.times.append(float(t))
        self._coeffs.append(np.stack([ndimage.spline_filter(c, order=3, mode="grid-wrap") for c in samples]))

    def _at(self, k: int, coords: np.ndarray) -> np.ndarray:
        c = self._coeffs[k]
        return np.stack([ndimage.map_coordinates(c[i], coords, order=3, mode="grid-wrap", prefilter=False) for i in range(2)])

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        times = self.times
        slack = 1e-9 * max(1.0, abs(t))
        if not times or t < times[0] - slack or t > times[-1] + slack:
            raise DomainError(f"velocity history does not cover t={t}")
        coords = points / self.grid.spacing
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 1)
        if k == len(times) - 1 or abs(t - times[k]) <= slack:
            return self._at(k, coords)
        theta = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - theta) * self._at(k, coords) + theta * self._at(k + 1, coords)


def spacing_ratio(markers: np.ndarray) -> float:
    seg = np.hypot(*(np.roll(markers, -1, axis=1) - markers))
    smallest = float(seg.min())
    return math.inf if smallest == 0 else float(seg.max()) / smallest


def advance_markers(
    patch: PatchState,
    sampler: Sampler,
    dt: float,
    box_length: float | None = None,
    core_margin: float = 0.05,
    redistribute_ratio: float = REDISTRIBUTE_RATIO,
) -> PatchState:
    """One RK4 step of dX/dt = u(t, X) for every marker."""
    if dt <= 0:
        raise DomainError(f"time step must be positive, got {dt}")
    t, x = patch.t, patch.markers
    k1 = sampler(t, x)
    k2 = sampler(t + dt / 2, x + dt / 2 * k1)
    k3 = sampler(t + dt / 2, x + dt / 2 * k2)
    k4 = sampler(t + dt, x + dt * k3)
    new = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    redistributions = patch.redistributions
    ratio = spacing_ratio(new)
    if ratio > redistribute_ratio:
        log.info("redistributing %d markers (spacing ratio %.2f)", new.shape[1], ratio)
        new = resample_arclength(new, new.shape[1])
        redistributions += 1
    wrapped = patch.wrapped
    if box_length is not None:
        lo, hi = core_margin * box_length, (1 - core_margin) * box_length
        if np.any(new < lo) or np.any(new > hi):
            if not wrapped:
                log.warning("patch markers left the box core; velocity is sampled periodically")
            wrapped = True
    return PatchState(new, patch.sigma, t + dt, patch.area0, wrapped, redistributions)


# --- diagnostics ----------------------------------------------------------


@dataclass
class C1Diagnostic:
    max_turning: float
    modulus: dict[int, float]


def tangent_angles(markers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.roll(markers, -1, axis=1) - markers
    lengths = np.hypot(*edges)
    if np.any(lengths <= 1e-12 * max(float(lengths.max()), 1e-300)):
        raise GeometryError("repeated markers: zero-length segment")
    return np.arctan2(edges[1], edges[0]), lengths


def c1_diagnostic(patch: PatchState | np.ndarray, gaps=MODULUS_GAPS) -> C1Diagnostic:
    """Turning per unit arclength and the modulus of continuity of the tangent angle."""
    markers = patch.markers if isinstance(patch, PatchState) else np.asarray(patch, dtype=float)
    if markers.shape[1] < 64:
        raise GeometryError("C^1 diagnostic needs at least 64 markers")
    theta, lengths = tangent_angles(markers)
    turn = np.angle(np.exp(1j * (theta - np.roll(theta, 1))))
    ds = 0.5 * (lengths + np.roll(lengths, 1))
    unwrapped = np.concatenate([[0.0], np.cumsum(turn[1:])])
    m = len(theta)
    modulus = {}
    for g in gaps:
        ext = np.concatenate([unwrapped, unwrapped[:g] + unwrapped[-1] + turn[0]])
        modulus[g] = float(np.max(np.abs(ext[g : g + m] - ext[:m])))
    return C1Diagnostic(float(np.max(np.abs(turn) / ds)), modulus)


@dataclass
class MultiplierEstimate:
    value: float
    dictionary_size: int
    s: float
    p: float
    label: str = "lower bound (dictionary maximum)"
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))


def dictionary_element(grid: Grid, index: int, seed: int = 0) -> SpectralField:
    """Deterministic test function number ``index``: even indices are bumps, odd band-limited noise."""
    rng = np.random.default_rng([seed, index])
    L, n = grid.box_length, grid.n
    x1, x2 = grid.coordinates()
    if index % 2 == 0:
        width = math.exp(rng.uniform(math.log(2 * grid.spacing), math.log(L / 8)))
        c = rng.uniform(0.2 * L, 0.8 * L, size=2)
        d1 = (x1 - c[0] + L / 2) % L - L / 2
        d2 = (x2 - c[1] + L / 2) % L - L / 2
        samples = np.exp(-(d1**2 + d2**2) / (2 * width**2))
    else:
        kmax = rng.integers(2, max(3, n // 3))
        coeffs = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        k1, k2 = grid.index
        coeffs[np.hypot(k1, k2) > kmax] = 0
        samples = np.fft.ifft2(coeffs).real
    return dealias(to_spectral(samples, grid))


def multiplier_estimate(
    f: SpectralField, s: float, p: float, part: DyadicPartition, dictionary_size: int = 32, seed: int = 0
) -> MultiplierEstimate:
    """max ||psi f|| / ||psi|| in B^s_{p,1} over a fixed dictionary; a lower bound of the multiplier norm."""
    spec = NormSpec(s, p, 1)
    ratios = []
    for k in range(dictionary_size):
        psi = dictionary_element(f.grid, k, seed)
        den = besov_norm(psi, spec, part)
        if den == 0:
            continue
        ratios.append(besov_norm(product(psi, f), spec, part) / den)
    ratios = np.array(ratios)
    value = float(ratios.max()) if ratios.size else 0.0
    return MultiplierEstimate(value, dictionary_size, s, p, ratios=ratios)


def transport_consistency(a: SpectralField, patch: PatchState, grid: Grid, molly_cells: float) -> tuple[float, float]:
    """L^1 gap between a and the marker-implied mollified patch, and the allowed budget.

    The budget is |amplitude| * perimeter * 2 * width: the area of a band of twice
    the mollification width around the boundary.
    """
    amp = patch_amplitude(patch.sigma)
    implied = amp * mollified_indicator(patch.markers % grid.box_length, grid, molly_cells)
    gap = float(np.abs(to_physical(a).real - implied).sum()) * grid.spacing**2
    budget = abs(amp) * perimeter(patch.markers) * 2 * molly_cells * grid.spacing
    return gap, budget


# --- scenario -------------------------------------------------------------


@dataclass
class PatchScenario:
    n: int = 128
    box_length: float | None = None
    sigma: float = 0.02
    shape: PatchShape = field(default_factory=lambda: PatchShape(radius=8.0))
    molly_cells: float = 2.0
    markers: int = 512
    marker_substeps: int = 4
    u0_amplitude: float = 1.0
    u0_wavenumber: float = 1.0
    mu: float = 1.0
    law: object = None  # ViscosityLaw; linear in rho with mu(1) = mu when unset
    p: float = 3.5
    q: float = 3.5
    T: float = 1.0
    dt: float | None = None
    kappa: float = 0.5
    c2: float = 0.1
    C0: float = 1.0
    c0: float = 1e-2
    dictionary_size: int = 8
    lambda1: float = 8.0
    lambda2: float | None = None


@dataclass
class PatchReport:
    outcome: str  # "below-threshold", "crossing" or "contraction-failure"
    times: np.ndarray
    area: np.ndarray
    max_turning: np.ndarray
    multiplier: np.ndarray
    simple: np.ndarray
    v_l2: np.ndarray
    mass_drift: float
    range_excess: float
    consistency: list[tuple[float, float]]
    patches: list[PatchState]
    bootstrap: object = None
    eta: object = None
    weights: object = None
    states: list = field(default_factory=list)
    ns: object = None
    error: str = ""

    @property
    def area_drift(self) -> float:
        return float(np.max(np.abs(self.area - self.area[0])) / self.area[0]) if self.area.size else 0.0


def run_patch_scenario(cfg: PatchScenario) -> PatchReport:
    """Coupled run with a density patch; markers follow u = v + w."""
    # local imports keep the tracking primitives usable without the solvers
    from .errors import ContractionError
    from .estimates import bootstrap_check, smallness_eta, weights_from_ns
    from .inhom_solver import CoupledSettings, ViscosityLaw, initial_state, step_v
    from .littlewood_paley import build_partition
    from .ns_solver import solve_wbar, taylor_green
    from .spectral import DEFAULT_BOX, lp_norm

    grid = Grid(cfg.n, cfg.box_length or DEFAULT_BOX)
    part = build_partition(grid)
    law = cfg.law or ViscosityLaw.linear(cfg.mu)
    u0 = taylor_green(grid, cfg.u0_amplitude, cfg.u0_wavenumber)
    a0, patch = init_patch(cfg.shape, cfg.sigma, grid, cfg.molly_cells, cfg.markers)
    ns = solve_wbar(u0, law.mu0, cfg.T, cfg.dt)
    settings = CoupledSettings(law, kappa=cfg.kappa)
    eta = smallness_eta(a0, u0, law.mu0, cfg.p, cfg.q, cfg.C0, cfg.c0, part)

    history = GridVelocityHistory(grid)
    states, patches = [], []
    times, area, turning, mult, simple, vnorm, consistency = [], [], [], [], [], [], []
    outcome, error = "below-threshold", ""

    def record(state, pt):
        states.append(state)
        patches.append(pt)
        times.append(state.t)
        area.append(pt.area())
        turning.append(c1_diagnostic(pt).max_turning)
        mult.append(multiplier_estimate(state.a, -1 + 2 / cfg.p, cfg.p, part, cfg.dictionary_size).value)
        simple.append(is_simple(pt.markers))
        vnorm.append(lp_norm(state.v, 2))
        consistency.append(transport_consistency(state.a, pt, grid, cfg.molly_cells))

    try:
        state = initial_state(a0, ns, settings)
        history.append(0.0, state.v + ns[0].w)
        record(state, patch)
        for _ in range(len(ns) - 1):
            state = step_v(state, ns.dt, settings)
            history.append(state.t, state.v + ns[state.step].w)
            h = (state.t - patch.t) / cfg.marker_substeps
            for _ in range(cfg.marker_substeps):
                patch = advance_markers(patch, history, h, grid.box_length)
            patch.t = state.t
            record(state, patch)
    except ContractionError as exc:
        outcome, error = "contraction-failure", str(exc)
        log.warning("patch scenario stopped: %s", exc)

    a_first = to_physical(states[0].a).real if states else to_physical(a0).real
    lo, hi = float(a_first.min()), float(a_first.max())
    mass0 = float(a_first.sum())
    mass_drift = 0.0
    range_excess = 0.0
    for s in states:
        vals = to_physical(s.a).real
        scale = max(abs(mass0), 1e-300)
        mass_drift = max(mass_drift, abs(float(vals.sum()) - mass0) / scale if mass0 else 0.0)
        range_excess = max(range_excess, float(vals.max()) - hi, lo - float(vals.min()))

    boot = bootstrap_check(states, cfg.c2, law.mu0, cfg.p, cfg.q, part, u0=u0) if states else None
    if outcome != "contraction-failure" and boot is not None and boot.crossed:
        outcome = "crossing"
    ws = weights_from_ns(_Truncated(ns, len(states)), law.mu0, cfg.p, part, cfg.lambda1, cfg.lambda2)
    return PatchReport(
        outcome, np.array(times), np.array(area), np.array(turning), np.array(mult), np.array(simple),
        np.array(vnorm), mass_drift, range_excess, consistency, patches, boot, eta, ws, states, ns, error,
    )


class _Truncated:
    """The first ``count`` states of an NS trajectory, iterable with ``times``."""

    def __init__(self, ns, count: int):
        self.states = ns.states[:count]
        self.times = np.array([s.t for s in self.states])

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)
