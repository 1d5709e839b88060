"""Diagnostics for the global-existence argument: smallness functional, weights, bootstrap.

Every constant the analysis only proves to exist (c0, C0, c2, lambda1, lambda2)
is a configured knob.  Reports say "configured" for those and "fitted" for
constants inferred from runs; neither is a value taken from the analysis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignmentError, ValidationError
from .littlewood_paley import (
    DyadicPartition,
    NormSeries,
    NormSpec,
    besov_norm,
    build_partition,
    chemin_lerner_running,
    cumulative_trapezoid,
    lr_sum,
    shell_norms,
)
from .spectral import Grid, SpectralField, gradient, pointwise_modulus, to_physical, to_spectral

DEFAULT_C0 = 1e-2  # small constant in the smallness threshold
DEFAULT_BIG_C0 = 1.0
DEFAULT_C2 = 1e-1
DEFAULT_LAMBDA1 = 8.0


def default_lambda2(mu: float) -> float:
    return 2.0 / mu


def critical_velocity_spec(p: float) -> NormSpec:
    return NormSpec(-1.0 + 2.0 / p, p, 1.0)


def critical_density_spec(q: float) -> NormSpec:
    return NormSpec(2.0 / q, q, 1.0)


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass
class SmallnessReport:
    eta: float
    threshold: float
    C0: float
    c0: float
    satisfied: bool
    a0_norm: float
    u0_norm: float
    mu0: float
    note: str = "with configured constants"

    def row(self) -> dict:
        return asdict(self)


def eta_value(a0_norm: float, u0_norm: float, mu0: float, C0: float) -> float:
    """||a0|| exp{C0 (1 + mu^2) exp(C0 ||u0||^2 / mu^2)} evaluated in log space."""
    if a0_norm == 0:
        return 0.0
    inner = _safe_exp(C0 * u0_norm**2 / mu0**2)
    return _safe_exp(math.log(a0_norm) + C0 * (1.0 + mu0**2) * inner)


def smallness_eta(
    a0: SpectralField,
    u0: SpectralField,
    mu0: float,
    p: float,
    q: float,
    C0: float = DEFAULT_BIG_C0,
    c0: float = DEFAULT_C0,
    part: DyadicPartition | None = None,
) -> SmallnessReport:
    part = part or build_partition(a0.grid)
    na = besov_norm(a0, critical_density_spec(q), part)
    nu = besov_norm(u0, critical_velocity_spec(p), part)
    eta = eta_value(na, nu, mu0, C0)
    threshold = c0 * mu0 / (1.0 + mu0)
    return SmallnessReport(eta, threshold, C0, c0, bool(eta <= threshold), na, nu, mu0)


# --- weights --------------------------------------------------------------


@dataclass
class WeightState:
    times: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    int_f1: np.ndarray
    int_f2: np.ndarray
    lambda1: float
    lambda2: float
    weighted: dict = field(default_factory=dict)

    def exponent(self) -> np.ndarray:
        """lambda1 int f1 + lambda2 int f2, the exponent of the combined weight."""
        return self.lambda1 * self.int_f1 + self.lambda2 * self.int_f2


def weights_from_ns(
    ns,
    mu: float,
    p: float,
    part: DyadicPartition,
    lambda1: float = DEFAULT_LAMBDA1,
    lambda2: float | None = None,
) -> WeightState:
    """f1 = ||w||_{B^{1+2/p}_{p,1}} + ||grad p||_{B^{-1+2/p}_{p,1}} / mu,  f2 = ||w||^2_{B^{2/p}_{p,1}}."""
    shells = part.shells.astype(float)
    f1, f2 = [], []
    for s in ns:
        wn = shell_norms(s.w, p, part)
        pn = shell_norms(gradient(s.p), p, part)
        f1.append(lr_sum(2.0 ** (shells * (1 + 2 / p)) * wn, 1) + lr_sum(2.0 ** (shells * (-1 + 2 / p)) * pn, 1) / mu)
        f2.append(lr_sum(2.0 ** (shells * (2 / p)) * wn, 1) ** 2)
    times = np.asarray(ns.times, dtype=float)
    f1, f2 = np.array(f1), np.array(f2)
    return WeightState(
        times, f1, f2, cumulative_trapezoid(f1, times), cumulative_trapezoid(f2, times),
        lambda1, default_lambda2(mu) if lambda2 is None else lambda2,
    )


def apply_exponential_weight(
    series: NormSeries, weight_integral: np.ndarray, lam: float, weight_times: np.ndarray | None = None
) -> NormSeries:
    """Scale each time slice by exp(-lam * int_0^t f)."""
    weight_integral = np.asarray(weight_integral, dtype=float)
    if weight_integral.shape != series.times.shape:
        raise AlignmentError("weight integral is not sampled at the series times")
    if weight_times is not None and not np.allclose(weight_times, series.times, rtol=0, atol=1e-12):
        raise AlignmentError("weight and series sample times differ")
    factor = np.exp(-lam * weight_integral)
    return NormSeries(series.times.copy(), series.table * factor[:, None], series.spec, series.j_min)


# --- bootstrap ------------------------------------------------------------


@dataclass
class BootstrapReport:
    times: np.ndarray
    series: np.ndarray
    c2: float
    mu: float
    upsilon: float | None
    components: dict = field(default_factory=dict)
    fitted_Cbar: float | None = None

    @property
    def threshold(self) -> float:
        return self.c2 * self.mu

    @property
    def crossed(self) -> bool:
        return self.upsilon is not None

    @property
    def peak(self) -> float:
        return float(np.max(self.series)) if self.series.size else 0.0


def series_from_fields(fields: Sequence[SpectralField], times, spec: NormSpec, part: DyadicPartition) -> NormSeries:
    table = np.array([shell_norms(f, spec.p, part) for f in fields]).reshape(len(fields), part.count)
    return NormSeries(np.asarray(times, dtype=float), table, spec, part.j_min)


def composite_series(
    a_series: NormSeries, v_series: NormSeries, mu: float, p: float
) -> tuple[np.ndarray, dict]:
    """(1+mu) ||a||_{L~inf_t B^{2/q}_{q,1}} + ||v||_{L~inf_t B^{-1+2/p}_{p,1}} + mu ||v||_{L^1_t B^{1+2/p}_{p,1}}.

    ``v_series`` holds raw shell L^p norms; the two velocity regularities reuse it.
    """
    a_part = chemin_lerner_running(a_series, math.inf)
    v_low = NormSeries(v_series.times, v_series.table, NormSpec(-1 + 2 / p, p, 1), v_series.j_min)
    v_high = NormSeries(v_series.times, v_series.table, NormSpec(1 + 2 / p, p, 1), v_series.j_min)
    v_inf = chemin_lerner_running(v_low, math.inf)
    v_one = cumulative_trapezoid(v_high.besov_series(), v_series.times)
    total = (1 + mu) * a_part + v_inf + mu * v_one
    return total, {"a_Linf": a_part, "v_Linf": v_inf, "v_L1": v_one}


def first_crossing(times: np.ndarray, values: np.ndarray, level: float) -> float | None:
    above = np.nonzero(values > level)[0]
    return float(times[above[0]]) if above.size else None


def fit_closing_constant(lhs: float, a0_norm: float, u0_norm: float, mu: float, upper: float = 1e3) -> float:
    """Smallest Cbar >= 0 with lhs <= (1+mu)||a0|| exp{Cbar (1+mu^2) exp(Cbar ||u0||^2 / mu^2)}."""
    if lhs <= 0:
        return 0.0
    if a0_norm <= 0:
        return math.inf

    def rhs(c):
        return eta_value((1 + mu) * a0_norm, u0_norm, mu, c)

    if rhs(0.0) >= lhs:
        return 0.0
    lo, hi = 0.0, 1.0
    while rhs(hi) < lhs:
        hi *= 2
        if hi > upper:
            return math.inf
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if rhs(mid) >= lhs:
            hi = mid
        else:
            lo = mid
    return hi


def bootstrap_check(
    states,
    c2: float,
    mu: float,
    p: float,
    q: float,
    part: DyadicPartition,
    u0: SpectralField | None = None,
) -> BootstrapReport:
    """Scan the composite quantity for its first excursion above c2 * mu."""
    times = np.array([s.t for s in states])
    a_series = series_from_fields([s.a for s in states], times, critical_density_spec(q), part)
    v_series = series_from_fields([s.v for s in states], times, critical_velocity_spec(p), part)
    return bootstrap_from_series(a_series, v_series, c2, mu, p, u0=u0, part=part)


def bootstrap_from_series(
    a_series: NormSeries,
    v_series: NormSeries,
    c2: float,
    mu: float,
    p: float,
    u0: SpectralField | None = None,
    part: DyadicPartition | None = None,
) -> BootstrapReport:
    total, parts = composite_series(a_series, v_series, mu, p)
    times = a_series.times
    report = BootstrapReport(times, total, c2, mu, first_crossing(times, total, c2 * mu), parts)
    if u0 is not None and part is not None and total.size:
        a0_norm = float(a_series.besov_series()[0])
        u0_norm = besov_norm(u0, critical_velocity_spec(p), part)
        report.fitted_Cbar = fit_closing_constant(float(total[-1]), a0_norm, u0_norm, mu)
    return report


def synthetic_bootstrap(times: np.ndarray, values: np.ndarray, c2: float, mu: float) -> BootstrapReport:
    """Bootstrap report for an externally supplied composite series."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    return BootstrapReport(times, values, c2, mu, first_crossing(times, values, c2 * mu))


# --- fitted-constant checks ------------------------------------------------


def transport_estimate_constant(
    states, weights: WeightState, lam: float, p: float, q: float, part: DyadicPartition
) -> float:
    """Smallest C with E(t) <= ||a0|| + C ||v||_{L^1_t B^{1+2/p}} ||a_lam||_{L~inf_t} at every sample t.

    E(t) = sum_j 2^{2j/q} (||D_j a_lam(t)||_q + lam/2 int_0^t f ||D_j a_lam||_q) is the
    per-time form that the energy argument bounds shell by shell; the weight is
    f = ||w||_{B^{1+2/p}_{p,1}}, the first term of f1.
    """
    times = np.array([s.t for s in states])
    if times.shape != weights.times.shape or not np.allclose(times, weights.times):
        raise AlignmentError("solver states and weights are sampled at different times")
    a_series = series_from_fields([s.a for s in states], times, critical_density_spec(q), part)
    v_series = series_from_fields([s.v for s in states], times, NormSpec(1 + 2 / p, p, 1), part)
    shells = part.shells.astype(float)
    ns_states = list(states[0].ns)[: len(times)]
    f = np.array([lr_sum(2.0 ** (shells * (1 + 2 / p)) * shell_norms(s.w, p, part), 1) for s in ns_states])
    a_lam = apply_exponential_weight(a_series, cumulative_trapezoid(f, times), lam)
    damped = np.stack([cumulative_trapezoid(f * a_lam.table[:, k], times) for k in range(part.count)], axis=1)
    energy = (a_lam.weights() * (a_lam.table + 0.5 * lam * damped)).sum(axis=1)
    a_inf = chemin_lerner_running(a_lam, math.inf)
    v_one = cumulative_trapezoid(v_series.besov_series(), times)
    a0 = float(a_series.besov_series()[0])
    excess = energy - a0
    denom = v_one * a_inf
    tol = 1e-12 * max(a0, 1e-300)
    fitted = np.where(denom > 0, excess / np.where(denom > 0, denom, 1.0), np.where(excess > tol, np.inf, 0.0))
    return float(max(0.0, np.max(fitted)))


def stokes_estimate_ratio(samples, forcing_norm_l1: float, u0_norm: float, nu: float, spec: NormSpec, part) -> float:
    """LHS / RHS of the Stokes estimate without the constant (fitted constant candidate)."""
    times = np.array([s.t for s in samples])
    u_series = series_from_fields([s.u for s in samples], times, spec, part)
    u_inf = chemin_lerner_running(u_series, math.inf)[-1]
    u_high = NormSeries(times, u_series.table, NormSpec(spec.s + 2, spec.p, spec.r), part.j_min)
    u_one = cumulative_trapezoid(u_high.besov_series(), times)[-1]
    g_series = series_from_fields([s.grad_Pi for s in samples], times, spec, part)
    g_one = cumulative_trapezoid(g_series.besov_series(), times)[-1]
    lhs = u_inf + nu * u_one + g_one
    rhs = u0_norm + forcing_norm_l1
    return float(lhs / rhs) if rhs > 0 else (0.0 if lhs == 0 else math.inf)


def ns_bound_constant(lhs: float, u0_norm: float, mu: float) -> float:
    """Smallest C >= 0 with lhs <= ||u0|| (1 + ||u0||) exp(C ||u0||^2 / mu^2)."""
    base = u0_norm * (1.0 + u0_norm)
    if lhs <= base or lhs == 0:
        return 0.0
    if u0_norm == 0:
        return math.inf
    return math.log(lhs / base) * mu**2 / u0_norm**2


def ns_lhs(ns, p: float, part: DyadicPartition) -> float:
    """||w||_{L~inf B^{-1+2/p}} + mu ||w||_{L^1 B^{1+2/p}} + ||grad p||_{L^1 B^{-1+2/p}} over the run."""
    times = ns.times
    low = critical_velocity_spec(p)
    w_series = series_from_fields([s.w for s in ns], times, low, part)
    p_series = series_from_fields([gradient(s.p) for s in ns], times, low, part)
    w_inf = chemin_lerner_running(w_series, math.inf)[-1]
    w_high = NormSeries(times, w_series.table, NormSpec(1 + 2 / p, p, 1), part.j_min)
    w_one = cumulative_trapezoid(w_high.besov_series(), times)[-1]
    p_one = cumulative_trapezoid(p_series.besov_series(), times)[-1]
    return float(w_inf + ns.mu * w_one + p_one)


# --- scaling --------------------------------------------------------------


@dataclass
class ScalingReport:
    ell: float
    mode: str
    u0_norm: float
    u0_scaled_norm: float
    a0_norm: float | None
    a0_scaled_norm: float | None

    @property
    def velocity_ratio(self) -> float:
        return self.u0_scaled_norm / self.u0_norm if self.u0_norm else 1.0

    @property
    def density_ratio(self) -> float | None:
        if self.a0_norm is None:
            return None
        return self.a0_scaled_norm / self.a0_norm if self.a0_norm else 1.0


def _fourier_eval_matrix(n: int, box: float, points: np.ndarray) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.exp(1j * 2 * np.pi / box * np.outer(points, k)) / n


def compose_dilation(f: SpectralField, ell: float, center: float | None = None) -> SpectralField:
    """Samples of x -> f(c + ell (x - c)) on the same grid (exact trigonometric interpolation).

    f is read as the compactly supported datum on one period: preimages outside
    [0, L) map to zero, so ell > 1 does not tile the box with periodic copies.
    Only meaningful when the support of f (ell > 1) or of the result (ell < 1)
    stays inside the box.
    """
    grid = f.grid
    c = grid.box_length / 2 if center is None else center
    x = np.arange(grid.n) * grid.spacing
    pts = c + ell * (x - c)
    E = _fourier_eval_matrix(grid.n, grid.box_length, pts)
    E[(pts < 0) | (pts >= grid.box_length)] = 0
    out = np.stack([E @ f.coeffs[i] @ E.T for i in range(f.comps)])
    if f.real:
        out = out.real
    return to_spectral(out if f.comps == 2 else out[0], grid)


def scaling_invariance_check(
    a0: SpectralField | None,
    u0: SpectralField,
    ell: float,
    p: float,
    q: float,
    mode: str = "rescaled-grid",
) -> ScalingReport:
    """Critical norms of (a0, u0) and of (a0(ell .), ell u0(ell .)).

    ``rescaled-grid`` keeps the samples and shrinks the period by ``ell``;
    ``same-grid`` resamples the dilated data on the original grid.
    """
    if ell not in (0.5, 1.0, 2.0):
        raise ValidationError(f"only dyadic scalings ell in {{1/2, 1, 2}} are supported, got {ell}")
    grid = u0.grid
    part = build_partition(grid)
    vs, ds = critical_velocity_spec(p), critical_density_spec(q)
    un = besov_norm(u0, vs, part)
    an = besov_norm(a0, ds, part) if a0 is not None else None
    if mode == "rescaled-grid":
        g2 = grid.rescaled(ell)
        part2 = build_partition(g2)
        u_s = to_spectral(ell * to_physical(u0), g2)
        a_s = to_spectral(to_physical(a0), g2) if a0 is not None else None
    elif mode == "same-grid":
        part2 = part
        u_s = compose_dilation(u0, ell) * ell
        a_s = compose_dilation(a0, ell) if a0 is not None else None
    else:
        raise ValidationError(f"unknown scaling mode {mode!r}")
    un2 = besov_norm(u_s, vs, part2)
    an2 = besov_norm(a_s, ds, part2) if a_s is not None else None
    return ScalingReport(ell, mode, un, un2, an, an2)


def wraparound_indicator(f: SpectralField, margin: float = 0.1) -> float:
    """Share of the L^1 mass of |f| lying within ``margin * L`` of the box edge."""
    mod = pointwise_modulus(f)
    total = float(mod.sum())
    if total == 0:
        return 0.0
    n = f.grid.n
    band = max(1, int(round(margin * n)))
    mask = np.zeros((n, n), dtype=bool)
    mask[:band, :] = mask[-band:, :] = True
    mask[:, :band] = mask[:, -band:] = True
    return float(mod[mask].sum() / total)


# --- report files ---------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_eta_report(path: Path, report: SmallnessReport) -> None:
    cols = ["a0_norm", "u0_norm", "mu0", "C0", "c0", "eta", "threshold", "satisfied", "note"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        row = report.row()
        w.writerow([row[c] if c == "note" else _fmt(row[c]) for c in cols])


def write_bootstrap(path: Path, report: BootstrapReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "composite", "threshold", "crossed"])
        for t, v in zip(report.times, report.series):
            w.writerow([_fmt(t), _fmt(v), _fmt(report.threshold), _fmt(v > report.threshold)])


def write_weights(path: Path, ws: WeightState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "f1", "f2", "int_f1", "int_f2"])
        for row in zip(ws.times, ws.f1, ws.f2, ws.int_f1, ws.int_f2):
            w.writerow([_fmt(x) for x in row])


def gnuplot_script(csv_name: str, title: str, columns: Sequence[tuple[int, str]], logscale: bool = False) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        "set xlabel 't'",
    ]
    if logscale:
        lines.append("set logscale y")
    plots = ", ".join(f"'{csv_name}' using 1:{col} with lines title '{label}'" for col, label in columns)
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"
