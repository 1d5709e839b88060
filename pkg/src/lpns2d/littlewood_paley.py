"""Dyadic blocks, Besov / Chemin-Lerner / weighted-time norms and Bony's decomposition.

Cut-off functions
-----------------
With the C-infinity step ``B(x) = e(x) / (e(x) + e(1 - x))``, ``e(x) = exp(-1/x)``::

    chi(tau) = 1 - B((tau - 3/4) / (4/3 - 3/4))      supp chi in [0, 4/3], chi = 1 on [0, 3/4]
    phi(tau) = chi(tau / 2) - chi(tau)               supp phi in [3/4, 8/3]

Because the two transition bands of ``phi`` do not overlap, ``phi`` is also
``B(...)(1 - B(...))`` of the two rescaled steps.  Sums of consecutive shells
telescope, so ``chi(2^-j0 t) + sum_{j0..j1} phi(2^-j t) = chi(2^-(j1+1) t)``
holds to rounding error.

Shell range on the torus
------------------------
``j_min`` is the largest shell for which ``chi(2^-j_min |xi|)`` vanishes on every
nonzero lattice frequency, so the low-frequency block S_{j_min} holds the zero
mode alone.  Homogeneous norms drop it (zero-mean reporting, the torus stand-in
for u in S'_h).  ``j_max`` is the smallest shell for which the blocks cover the
lattice corner frequency, so the partition is exact on the whole lattice; the
top shell is only partly resolved.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .spectral import Grid, SpectralField, lp_norm_samples, product


def smooth_step(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    out[inside] = a / (a + b)
    out[x >= 1] = 1.0
    return out


def chi(tau: np.ndarray) -> np.ndarray:
    return 1.0 - smooth_step((np.abs(tau) - 0.75) / (4.0 / 3.0 - 0.75))


def phi(tau: np.ndarray) -> np.ndarray:
    return chi(np.asarray(tau) / 2.0) - chi(tau)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    grid: Grid
    j_min: int
    j_max: int
    phi_samples: np.ndarray  # (shells, n, n), entry s is shell j_min + s
    chi_samples: np.ndarray  # chi(2^-j_min |xi|)

    @property
    def shells(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @property
    def count(self) -> int:
        return self.j_max - self.j_min + 1

    def multiplier(self, j: int) -> np.ndarray:
        if not self.j_min <= j <= self.j_max:
            raise IndexError(f"shell {j} outside [{self.j_min}, {self.j_max}]")
        return self.phi_samples[j - self.j_min]

    def low_multiplier(self, j: int) -> np.ndarray:
        """chi(2^-j |xi|), i.e. S_j; valid for any integer j."""
        return chi(self.grid.k_modulus * 2.0 ** (-j))

    def residual(self) -> float:
        """max |chi-block + sum of shells - 1| over the lattice."""
        total = self.chi_samples + self.phi_samples.sum(axis=0)
        return float(np.max(np.abs(total - 1.0)))


def build_partition(grid: Grid) -> DyadicPartition:
    kmod = grid.k_modulus
    xi_min = 2.0 * np.pi / grid.box_length
    xi_max = float(kmod.max())

    j_min = math.floor(math.log2(0.75 * xi_min))
    while (4.0 / 3.0) * 2.0**j_min >= xi_min:
        j_min -= 1
    j_max = math.ceil(math.log2(xi_max / 0.75)) - 1
    while 0.75 * 2.0 ** (j_max + 1) < xi_max:
        j_max += 1
    if j_max - j_min + 1 < 3:
        raise ConfigurationError(f"grid n={grid.n}, L={grid.box_length} hosts fewer than 3 dyadic shells")

    # consecutive chi differences so that the shell sum telescopes exactly
    lows = np.stack([chi(kmod * 2.0 ** (-j)) for j in range(j_min, j_max + 2)])
    phis = lows[1:] - lows[:-1]
    return DyadicPartition(grid, j_min, j_max, phis, lows[0])


def dyadic_block(u: SpectralField, j: int, part: DyadicPartition) -> SpectralField:
    return u.with_coeffs(u.coeffs * part.multiplier(j), solenoidal=u.solenoidal)


def low_cutoff(u: SpectralField, j: int, part: DyadicPartition) -> SpectralField:
    return u.with_coeffs(u.coeffs * part.low_multiplier(j), solenoidal=u.solenoidal)


def shell_norms(u: SpectralField, p: float, part: DyadicPartition) -> np.ndarray:
    """||Delta_j u||_{L^p} for every shell j_min..j_max."""
    blocks = np.fft.ifft2(u.coeffs[None, :, :, :] * part.phi_samples[:, None], axes=(-2, -1))
    if u.real:
        blocks = blocks.real
    if u.comps == 2:
        mod = np.sqrt(np.abs(blocks[:, 0]) ** 2 + np.abs(blocks[:, 1]) ** 2)
    else:
        mod = np.abs(blocks[:, 0])
    h = u.grid.spacing
    return np.array([lp_norm_samples(m, h, p) for m in mod])


@dataclass(frozen=True)
class NormSpec:
    s: float
    p: float
    r: float = 1.0

    def __post_init__(self):
        if not (self.p >= 1 and self.r >= 1):
            raise ValidationError(f"Besov exponents need p, r in [1, inf], got p={self.p}, r={self.r}")

    def label(self) -> str:
        return f"B^{self.s:g}_{{{self.p:g},{self.r:g}}}"


def lr_sum(values: np.ndarray, r: float) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if math.isinf(r):
        return float(values.max())
    if r == 1:
        return float(values.sum())
    return float(np.sum(values**r) ** (1.0 / r))


def weighted_shells(norms: np.ndarray, spec: NormSpec, part: DyadicPartition) -> np.ndarray:
    return 2.0 ** (part.shells * spec.s) * norms


def besov_norm(u: SpectralField, spec: NormSpec, part: DyadicPartition) -> float:
    """Homogeneous B^s_{p,r} norm over the resolved shells (zero mode excluded)."""
    return lr_sum(weighted_shells(shell_norms(u, spec.p, part), spec, part), spec.r)


@dataclass
class NormSeries:
    """Per-shell L^p norms sampled in time: ``table[t_index, shell_index]``."""

    times: np.ndarray
    table: np.ndarray
    spec: NormSpec
    j_min: int
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 2 or self.table.shape[0] != self.times.size:
            raise ValidationError("norm table must be (times x shells)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("series times must be strictly increasing")
        if np.any(self.table < 0):
            raise ValidationError("shell norms must be nonnegative")

    @property
    def shells(self) -> np.ndarray:
        return self.j_min + np.arange(self.table.shape[1])

    def weights(self) -> np.ndarray:
        return 2.0 ** (self.shells * self.spec.s)

    def besov_series(self) -> np.ndarray:
        w = self.weights()
        return np.array([lr_sum(w * row, self.spec.r) for row in self.table])

    def append(self, t: float, row: np.ndarray) -> None:
        if self.times.size and t <= self.times[-1]:
            raise ValidationError("series times must be strictly increasing")
        self.times = np.append(self.times, t)
        self.table = np.vstack([self.table.reshape(-1, len(row)), row])

    def truncated(self, count: int) -> NormSeries:
        return NormSeries(self.times[:count], self.table[:count], self.spec, self.j_min)


def norm_series(
    fields: Sequence[SpectralField], times: Sequence[float], spec: NormSpec, part: DyadicPartition
) -> NormSeries:
    table = np.array([shell_norms(f, spec.p, part) for f in fields])
    return NormSeries(np.asarray(times, dtype=float), table.reshape(len(times), part.count), spec, part.j_min)


def _time_norm(values: np.ndarray, times: np.ndarray, lam: float) -> float:
    if math.isinf(lam):
        return float(values.max())
    if values.size == 1:
        return 0.0
    return float(np.trapezoid(values**lam, times) ** (1.0 / lam))


def chemin_lerner_norm(series: NormSeries, lam: float) -> float:
    """Time norm per shell first (trapezoid), then the weighted l^r sum over shells."""
    if series.times.size == 0:
        raise DomainError("empty norm series")
    if not lam >= 1:
        raise DomainError(f"time exponent must lie in [1, inf], got {lam}")
    per_shell = np.array([_time_norm(series.table[:, s], series.times, lam) for s in range(series.table.shape[1])])
    return lr_sum(series.weights() * per_shell, series.spec.r)


def chemin_lerner_running(series: NormSeries, lam: float) -> np.ndarray:
    """chemin_lerner_norm over [0, t_k] for every sample k (vectorised)."""
    table, times, w = series.table, series.times, series.weights()
    if math.isinf(lam):
        per_shell = np.maximum.accumulate(table, axis=0)
    else:
        powered = table**lam
        steps = 0.5 * (powered[1:] + powered[:-1]) * np.diff(times)[:, None]
        per_shell = np.vstack([np.zeros((1, table.shape[1])), np.cumsum(steps, axis=0)]) ** (1.0 / lam)
    return np.array([lr_sum(w * row, series.spec.r) for row in per_shell])


def weighted_time_norm(series: NormSeries, weight: np.ndarray) -> float:
    """Trapezoid of f(t) * ||u(t)||_X over the series times."""
    weight = np.asarray(weight, dtype=float)
    if weight.shape != series.times.shape:
        raise ValidationError("weight must be sampled at the series times")
    if np.any(weight < 0):
        raise DomainError("weight samples must be nonnegative")
    if series.times.size < 2:
        return 0.0
    return float(np.trapezoid(weight * series.besov_series(), series.times))


def cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    if values.size > 1:
        out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


# --- Bony decomposition ---------------------------------------------------


def _blocks(u: SpectralField, part: DyadicPartition) -> list[SpectralField]:
    """[S_{j_min} u, Delta_{j_min} u, ..., Delta_{j_max} u]."""
    out = [u.with_coeffs(u.coeffs * part.chi_samples)]
    out.extend(u.with_coeffs(u.coeffs * m) for m in part.phi_samples)
    return out


def paraproduct(u: SpectralField, v: SpectralField, part: DyadicPartition) -> SpectralField:
    """T_u v = sum_j S_{j-1} u * Delta_j v (dealiased products).

    The low-frequency block S_{j_min} u acts as shell j_min - 1, so S_{j-1} u is
    the sum of the blocks at least two indices below j.
    """
    bu, bv = _blocks(u, part), _blocks(v, part)
    out = None
    low = None
    for b in range(2, len(bv)):
        low = bu[b - 2] if low is None else low + bu[b - 2]
        term = product(low, bv[b])
        out = term if out is None else out + term
    if out is None:
        return product(u, v) * 0.0
    return out


def remainder(u: SpectralField, v: SpectralField, part: DyadicPartition) -> SpectralField:
    """R(u, v) = sum_{|j - j'| <= 1} Delta_j u * Delta_j' v (dealiased products)."""
    bu, bv = _blocks(u, part), _blocks(v, part)
    out = None
    for b in range(len(bu)):
        near = bv[b]
        if b > 0:
            near = near + bv[b - 1]
        if b + 1 < len(bv):
            near = near + bv[b + 1]
        term = product(bu[b], near)
        out = term if out is None else out + term
    return out


def bony_terms(u: SpectralField, v: SpectralField, part: DyadicPartition) -> tuple[SpectralField, SpectralField, SpectralField]:
    return paraproduct(u, v, part), paraproduct(v, u, part), remainder(u, v, part)


# --- CSV export -----------------------------------------------------------


def write_norm_csv(path: str | Path, series: NormSeries, lam: float = math.inf) -> None:
    """Columns ``t, j, shell_lp_norm``; summary rows carry the norm name in ``j``."""
    spec = series.spec
    tag = f"s={spec.s:g};p={spec.p:g};r={spec.r:g}"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "j", "shell_lp_norm"])
        for t, row in zip(series.times, series.table):
            for j, value in zip(series.shells, row):
                writer.writerow([repr(float(t)), int(j), repr(float(value))])
        for t, value in zip(series.times, series.besov_series()):
            writer.writerow([repr(float(t)), f"besov[{tag}]", repr(float(value))])
        if series.times.size:
            writer.writerow(
                [repr(float(series.times[-1])), f"chemin_lerner[{tag};lambda={lam:g}]", repr(chemin_lerner_norm(series, lam))]
            )
