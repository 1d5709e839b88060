"""Constant-stability harnesses for the dyadic inequalities.

Each "A <~ B" claim is checked by sampling ratios A/B on shell-localized data
and reporting the fitted constant per shell; callers assert that the constants
do not drift with the shell index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .littlewood_paley import DyadicPartition, NormSpec, besov_norm, dyadic_block
from .spectral import Grid, SpectralField, derivative, lp_norm, product, to_spectral


def dirac_shell_field(grid: Grid, j: int, part: DyadicPartition, rng: np.random.Generator) -> SpectralField:
    """Delta_j of a combination of one to three point masses at random nodes."""
    samples = np.zeros(grid.shape)
    for _ in range(int(rng.integers(1, 4))):
        i1, i2 = rng.integers(0, grid.n, size=2)
        samples[i1, i2] += rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
    return dyadic_block(to_spectral(samples, grid), j, part)


def random_shell_field(grid: Grid, j: int, part: DyadicPartition, rng: np.random.Generator) -> SpectralField:
    """Delta_j of white noise."""
    return dyadic_block(to_spectral(rng.standard_normal(grid.shape), grid), j, part)


@dataclass
class ShellFit:
    shells: np.ndarray
    constants: np.ndarray

    def window(self, lo: int, hi: int) -> np.ndarray:
        keep = (self.shells >= lo) & (self.shells <= hi)
        return self.constants[keep]

    def spread(self, lo: int, hi: int) -> float:
        c = self.window(lo, hi)
        return float(c.max() / c.min())


def _grad_lp(u: SpectralField, p: float) -> float:
    g1, g2 = derivative(u, 1), derivative(u, 2)
    return lp_norm(to_vector(g1, g2), p)


def to_vector(f1: SpectralField, f2: SpectralField) -> SpectralField:
    return SpectralField(f1.grid, np.concatenate([f1.coeffs, f2.coeffs]), f1.real and f2.real)


def bernstein_fit(
    part: DyadicPartition, p2: float, p1: float, samples: int, rng: np.random.Generator
) -> ShellFit:
    """Per shell: max over samples of ||grad D_j u||_{p1} / (2^{j(1 + 2/p2 - 2/p1)} ||D_j u||_{p2})."""
    grid = part.grid
    consts = []
    per_shell = max(1, samples // part.count)
    for j in part.shells:
        scale = 2.0 ** (j * (1 + 2 / p2 - 2 / p1))
        best = 0.0
        for _ in range(per_shell):
            u = dirac_shell_field(grid, j, part, rng)
            den = scale * lp_norm(u, p2)
            if den > 0:
                best = max(best, _grad_lp(u, p1) / den)
        consts.append(best)
    return ShellFit(part.shells.copy(), np.array(consts))


def reverse_bernstein_fit(part: DyadicPartition, p: float, samples: int, rng: np.random.Generator) -> ShellFit:
    """Per shell: max of 2^j ||D_j u||_p / max(||d_1 D_j u||_p, ||d_2 D_j u||_p)."""
    grid = part.grid
    consts = []
    per_shell = max(1, samples // part.count)
    for j in part.shells:
        best = 0.0
        for _ in range(per_shell):
            u = dirac_shell_field(grid, j, part, rng)
            den = max(lp_norm(derivative(u, 1), p), lp_norm(derivative(u, 2), p))
            if den > 0:
                best = max(best, 2.0**j * lp_norm(u, p) / den)
        consts.append(best)
    return ShellFit(part.shells.copy(), np.array(consts))


def heat_decay_fit(
    part: DyadicPartition, rng: np.random.Generator, window: tuple[float, float] = (64.0, 256.0)
) -> ShellFit:
    """Decay rate of ||exp(t Delta) D_j u||_2 over 4^j t in ``window``, divided by 4^j.

    The late window isolates the uniform rate: log ||e^{t Delta} u|| is convex
    in t, so its slope is largest in magnitude early and settles on the
    smallest |xi|^2 present.
    """
    grid = part.grid
    ksq = grid.k_squared
    consts = []
    for j in part.shells:
        u = random_shell_field(grid, j, part, rng)
        t0, t1 = window[0] / 4.0**j, window[1] / 4.0**j
        power = np.abs(u.coeffs[0]) ** 2
        keep = power > 0
        logp, k = np.log(power[keep]), ksq[keep]
        # log-space sums: the late window underflows in plain arithmetic
        log_n0 = 0.5 * logsumexp(logp - 2 * k * t0)
        log_n1 = 0.5 * logsumexp(logp - 2 * k * t1)
        rate = (log_n0 - log_n1) / (t1 - t0)
        consts.append(rate / 4.0**j)
    return ShellFit(part.shells.copy(), np.array(consts))


def band_limited_field(grid: Grid, j_lo: int, j_hi: int, part: DyadicPartition, rng: np.random.Generator) -> SpectralField:
    """Random field whose spectrum sits in shells j_lo..j_hi."""
    base = to_spectral(rng.standard_normal(grid.shape), grid)
    mult = sum(part.multiplier(j) for j in range(j_lo, j_hi + 1))
    return base.with_coeffs(base.coeffs * mult)


def product_law_ratios(
    part: DyadicPartition, s1: float, s2: float, p1: float, p2: float, pairs: int, rng: np.random.Generator
) -> np.ndarray:
    """||ab||_{B^{s1+s2-2/p1}_{p1,1}} / (||a||_{B^{s1}_{p1,1}} ||b||_{B^{s2}_{p2,1}}) on random band-limited pairs."""
    out = []
    lo, hi = part.j_min + 1, part.j_max - 1
    target = NormSpec(s1 + s2 - 2 / p1, p1, 1)
    for _ in range(pairs):
        ja = sorted(rng.integers(lo, hi + 1, size=2))
        jb = sorted(rng.integers(lo, hi + 1, size=2))
        a = band_limited_field(part.grid, ja[0], ja[1], part, rng)
        b = band_limited_field(part.grid, jb[0], jb[1], part, rng)
        den = besov_norm(a, NormSpec(s1, p1, 1), part) * besov_norm(b, NormSpec(s2, p2, 1), part)
        out.append(besov_norm(product(a, b), target, part) / den)
    return np.array(out)


# --- composition with measure-preserving maps -------------------------------


@dataclass
class ShearMap:
    """psi = S2 o S1 with S1(x) = (x1 + eps f(x2), x2), S2(x) = (x1, x2 + eps g(x1)).

    Each shear preserves area exactly and is periodic on the box.
    """

    box: float
    eps: float
    m1: int = 1
    m2: int = 1

    def _f(self, y):
        return np.sin(2 * np.pi * self.m1 * y / self.box)

    def _g(self, y):
        return np.sin(2 * np.pi * self.m2 * y / self.box)

    def forward(self, x1, x2):
        y1 = x1 + self.eps * self._f(x2)
        return y1, x2 + self.eps * self._g(y1)

    def lipschitz(self) -> tuple[float, float]:
        """Upper bounds of ||grad psi||_inf and ||grad phi||_inf (same for both shears)."""
        a = self.eps * 2 * np.pi * self.m1 / self.box
        b = self.eps * 2 * np.pi * self.m2 / self.box
        # worst case of the spectral norm over the sign patterns of the shear slopes
        best = 0.0
        for sa in (-1, 1):
            for sb in (-1, 1):
                m = np.array([[1.0, 0.0], [sb * b, 1.0]]) @ np.array([[1.0, sa * a], [0.0, 1.0]])
                best = max(best, float(np.linalg.norm(m, 2)))
        return best, best


def evaluate_at(u: SpectralField, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Exact trigonometric interpolation of a scalar field at arbitrary points."""
    grid = u.grid
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n) * 2 * np.pi / grid.box_length
    c = u.coeffs[0] / grid.n**2
    out = np.empty(y1.size)
    p1, p2 = y1.ravel(), y2.ravel()
    chunk = 512
    for s in range(0, p1.size, chunk):
        e1 = np.exp(1j * np.outer(p1[s : s + chunk], k))
        e2 = np.exp(1j * np.outer(p2[s : s + chunk], k))
        out[s : s + chunk] = np.einsum("pa,ab,pb->p", e1, c, e2).real
    return out.reshape(y1.shape)


def action_ratios(
    part: DyadicPartition, shear: ShearMap, pairs: list[tuple[int, int]], rng: np.random.Generator
) -> dict[tuple[int, int], float]:
    """||D_m (u o psi)||_2 / (||u||_2 min(2^{m-j} ||grad phi||, 2^{j-m} ||grad psi||)) for u = D_j noise."""
    grid = part.grid
    x1, x2 = grid.coordinates()
    y1, y2 = shear.forward(x1, x2)
    lip_psi, lip_phi = shear.lipschitz()
    out = {}
    for j, m in pairs:
        u = random_shell_field(grid, j, part, rng)
        comp = to_spectral(evaluate_at(u, y1, y2), grid)
        lhs = lp_norm(dyadic_block(comp, m, part), 2)
        bound = lp_norm(u, 2) * min(2.0 ** (m - j) * lip_phi, 2.0 ** (j - m) * lip_psi)
        out[(j, m)] = lhs / bound
    return out


# --- composition with a flow map --------------------------------------------


@dataclass
class CellularFlow:
    """Steady u = eps (sin(k x1) cos(k x2), -cos(k x1) sin(k x2)), k = 2 pi m / box."""

    box: float
    eps: float
    m: int = 1

    @property
    def k(self) -> float:
        return 2 * np.pi * self.m / self.box

    def velocity(self, x1, x2):
        k = self.k
        return self.eps * np.sin(k * x1) * np.cos(k * x2), -self.eps * np.cos(k * x1) * np.sin(k * x2)

    def grad_sup(self) -> float:
        """||grad u||_inf (spectral norm of the gradient matrix)."""
        return self.eps * self.k

    def flow_map(self, x1, x2, t: float, steps: int = 64):
        """X_u(t, x) by RK4."""
        h = t / steps
        y1, y2 = np.array(x1, dtype=float), np.array(x2, dtype=float)
        for _ in range(steps):
            a1, a2 = self.velocity(y1, y2)
            b1, b2 = self.velocity(y1 + h / 2 * a1, y2 + h / 2 * a2)
            c1, c2 = self.velocity(y1 + h / 2 * b1, y2 + h / 2 * b2)
            d1, d2 = self.velocity(y1 + h * c1, y2 + h * c2)
            y1 = y1 + h / 6 * (a1 + 2 * b1 + 2 * c1 + d1)
            y2 = y2 + h / 6 * (a2 + 2 * b2 + 2 * c2 + d2)
        return y1, y2


def composition_ratios(
    part: DyadicPartition, flow: CellularFlow, times: list[float], s: float, rng: np.random.Generator, p: float = 2.0
) -> np.ndarray:
    """||f o X(t)||_{B^s_{p,1}} / (||f||_{B^s_{p,1}} exp(t ||grad u||_inf)), rows = shells, cols = times."""
    grid = part.grid
    x1, x2 = grid.coordinates()
    spec = NormSpec(s, p, 1)
    maps = [flow.flow_map(x1, x2, t) for t in times]
    lo, hi = part.j_min + 1, part.j_max - 1
    out = np.zeros((hi - lo + 1, len(times)))
    for row, j in enumerate(range(lo, hi + 1)):
        f = random_shell_field(grid, j, part, rng)
        base = besov_norm(f, spec, part)
        for col, (t, (y1, y2)) in enumerate(zip(times, maps)):
            comp = to_spectral(evaluate_at(f, y1, y2), grid)
            out[row, col] = besov_norm(comp, spec, part) / (base * np.exp(t * flow.grad_sup()))
    return out
