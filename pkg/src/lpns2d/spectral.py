"""Periodic-grid substrate: transforms, derivatives, L^p quadrature, Leray projection.

The whole plane is replaced by the torus [0, L)^2 with L = 2*pi*16 by default.
Data is expected to be concentrated well inside the box; nothing here
corrects for wrap-around (see ``estimates.wraparound_indicator``).

Transform convention: the forward transform is unnormalized and the inverse
carries the 1/n^2 factor (``numpy.fft.fft2`` / ``ifft2``).  A constant field
``c`` therefore has the single coefficient ``c * n**2`` at the zero mode.

Array layout: ``samples[..., i, j]`` is the value at ``x1 = i*h, x2 = j*h``.
Vector fields carry a leading component axis of length 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionError, ValidationError

DEFAULT_BOX = 2.0 * np.pi * 16.0
SNAPSHOT_MAGIC = "lpns2d-field v1"


@dataclass(frozen=True)
class Grid:
    """Square periodic grid with ``n`` points per axis and period ``box_length``."""

    n: int
    box_length: float = DEFAULT_BOX

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValidationError(f"grid size must be a power of two >= 8, got n={self.n}")
        if not self.box_length > 0:
            raise ValidationError(f"box length must be positive, got L={self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def index(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer lattice indices k in [-n/2, n/2) along each axis, broadcast to (n, n)."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(k, k, indexing="ij")

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical wavenumbers 2*pi*k/L."""
        k1, k2 = self.index
        scale = 2.0 * np.pi / self.box_length
        return scale * k1, scale * k2

    @cached_property
    def k_squared(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        return k1 * k1 + k2 * k2

    @cached_property
    def k_modulus(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def inv_k_squared(self) -> np.ndarray:
        """1/|k|^2 with the zero mode mapped to 0."""
        ksq = self.k_squared.copy()
        ksq[0, 0] = 1.0
        out = 1.0 / ksq
        out[0, 0] = 0.0
        return out

    @cached_property
    def odd_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers with the Nyquist line zeroed, used for odd-order derivatives."""
        k1, k2 = (k.copy() for k in self.wavenumbers)
        i1, i2 = self.index
        k1[i1 == -self.n // 2] = 0.0
        k2[i2 == -self.n // 2] = 0.0
        return k1, k2

    @cached_property
    def inv_odd_k_squared(self) -> np.ndarray:
        """1/|k~|^2 for the Nyquist-zeroed wavenumbers k~, 0 where k~ = 0."""
        k1, k2 = self.odd_wavenumbers
        ksq = k1 * k1 + k2 * k2
        out = np.zeros_like(ksq)
        np.divide(1.0, ksq, out=out, where=ksq > 0)
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps |k_i| < n/3 on both axes (Nyquist always dropped)."""
        i1, i2 = self.index
        cut = self.n / 3.0
        return (np.abs(i1) < cut) & (np.abs(i2) < cut)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing="ij")

    def rescaled(self, factor: float) -> Grid:
        """Same n, period divided by ``factor`` (grid for x -> factor*x)."""
        return Grid(self.n, self.box_length / factor)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a scalar or 2-vector field on ``grid``.

    ``coeffs`` has shape (comps, n, n).  ``real`` asserts that the physical
    samples are real (Hermitian coefficients); ``solenoidal`` is set by the
    Leray projection and by constructors that know the field is divergence free.
    """

    grid: Grid
    coeffs: np.ndarray
    real: bool = True
    solenoidal: bool = False

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 3 or c.shape[0] not in (1, 2) or c.shape[1:] != self.grid.shape:
            raise DimensionError(
                f"coefficient array of shape {c.shape} does not fit grid n={self.grid.n}"
            )

    @property
    def comps(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.comps == 2

    def component(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i : i + 1], self.real)

    def with_coeffs(self, coeffs: np.ndarray, **flags) -> SpectralField:
        flags.setdefault("solenoidal", False)
        return replace(self, coeffs=coeffs, **flags)

    def _combine(self, other, op) -> SpectralField:
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise DimensionError("fields live on different grids")
            return SpectralField(
                self.grid,
                op(self.coeffs, other.coeffs),
                self.real and other.real,
                self.solenoidal and other.solenoidal,
            )
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return replace(self, coeffs=-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        real = self.real and np.isrealobj(scalar)
        return replace(self, coeffs=self.coeffs * scalar, real=real)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def copy(self) -> SpectralField:
        return replace(self, coeffs=self.coeffs.copy())

    @property
    def mean(self) -> np.ndarray:
        """Box average of each component."""
        return self.coeffs[:, 0, 0] / self.grid.n**2


def zeros(grid: Grid, comps: int = 1, solenoidal: bool = True) -> SpectralField:
    return SpectralField(grid, np.zeros((comps, *grid.shape), dtype=complex), True, solenoidal)


def to_spectral(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Forward transform of (n, n) scalar or (2, n, n) vector samples."""
    arr = np.asarray(samples)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != grid.shape or arr.shape[0] not in (1, 2):
        raise DimensionError(f"samples of shape {np.shape(samples)} do not match grid n={grid.n}")
    real = not np.iscomplexobj(arr)
    return SpectralField(grid, np.fft.fft2(arr, axes=(-2, -1)), real)


def to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform; scalars come back as (n, n), vectors as (2, n, n)."""
    out = np.fft.ifft2(f.coeffs, axes=(-2, -1))
    if f.real:
        out = out.real
    return out[0] if f.comps == 1 else out


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Multiply by (i k_axis)^order; ``axis`` is 1 or 2.

    For odd orders the Nyquist wavenumber is taken as zero so that real fields
    stay real.
    """
    if axis not in (1, 2):
        raise ValidationError(f"axis must be 1 or 2, got {axis}")
    if order < 1:
        raise ValidationError(f"derivative order must be positive, got {order}")
    table = f.grid.odd_wavenumbers if order % 2 else f.grid.wavenumbers
    symbol = (1j * table[axis - 1]) ** order
    return f.with_coeffs(f.coeffs * symbol, solenoidal=f.solenoidal)


def gradient(f: SpectralField) -> SpectralField:
    if f.comps != 1:
        raise DimensionError("gradient expects a scalar field")
    k1, k2 = f.grid.odd_wavenumbers
    c = f.coeffs[0]
    return f.with_coeffs(np.stack([1j * k1 * c, 1j * k2 * c]))


def divergence(u: SpectralField) -> SpectralField:
    if u.comps != 2:
        raise DimensionError("divergence expects a vector field")
    k1, k2 = u.grid.odd_wavenumbers
    return u.with_coeffs((1j * k1 * u.coeffs[0] + 1j * k2 * u.coeffs[1])[None])


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.grid.k_squared * f.coeffs, solenoidal=f.solenoidal)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Solve Delta g = f for zero-mean g; the zero mode of f is ignored."""
    return f.with_coeffs(-f.grid.inv_k_squared * f.coeffs, solenoidal=f.solenoidal)


def perp_gradient(psi: SpectralField) -> SpectralField:
    """(-d2 psi, d1 psi): the divergence-free field with stream function psi."""
    g = gradient(psi)
    return g.with_coeffs(np.stack([-g.coeffs[1], g.coeffs[0]]), solenoidal=True)


def leray_project(u: SpectralField) -> SpectralField:
    """Remove the gradient part: u_hat - k (k . u_hat)/|k|^2, zero mode untouched."""
    if u.comps != 2:
        raise DimensionError("Leray projection needs a 2-component field")
    k1, k2 = u.grid.odd_wavenumbers
    inv = u.grid.inv_odd_k_squared
    kdotu = (k1 * u.coeffs[0] + k2 * u.coeffs[1]) * inv
    out = np.stack([u.coeffs[0] - k1 * kdotu, u.coeffs[1] - k2 * kdotu])
    return u.with_coeffs(out, solenoidal=True)


def dealias(f: SpectralField) -> SpectralField:
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask, solenoidal=f.solenoidal)


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pointwise product (2/3 rule on inputs and output).

    Scalar*scalar, scalar*vector and vector*scalar are supported; the result
    has as many components as the vector operand.
    """
    if f.grid != g.grid:
        raise DimensionError("fields live on different grids")
    if f.comps == 2 and g.comps == 2:
        raise DimensionError("use dot() or an explicit component loop for vector*vector")
    mask = f.grid.dealias_mask
    fp = np.fft.ifft2(f.coeffs * mask, axes=(-2, -1))
    gp = np.fft.ifft2(g.coeffs * mask, axes=(-2, -1))
    real = f.real and g.real
    prod = fp * gp
    if real:
        prod = prod.real
    return SpectralField(f.grid, np.fft.fft2(prod, axes=(-2, -1)) * mask, real)


def dot(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased u . v of two vector fields."""
    return product(u.component(0), v.component(0)) + product(u.component(1), v.component(1))


def advection(u: SpectralField, f: SpectralField) -> SpectralField:
    """Dealiased (u . grad) f for a vector u and a scalar or vector f."""
    out = []
    for c in range(f.comps):
        fc = f.component(c)
        term = product(u.component(0), derivative(fc, 1)) + product(u.component(1), derivative(fc, 2))
        out.append(term.coeffs[0])
    return SpectralField(f.grid, np.stack(out), u.real and f.real)


def strain(u: SpectralField) -> list[list[SpectralField]]:
    """Deformation matrix M(u)_{ij} = d_i u_j + d_j u_i (div M(u) = Delta u when div u = 0)."""
    d = [[derivative(u.component(j), i + 1) for j in range(2)] for i in range(2)]
    return [[d[i][j] + d[j][i] for j in range(2)] for i in range(2)]


def matrix_divergence(m: list[list[SpectralField]]) -> SpectralField:
    """Row-wise divergence: (div m)_j = sum_i d_i m_{ij}."""
    comps = [(derivative(m[0][j], 1) + derivative(m[1][j], 2)).coeffs[0] for j in range(2)]
    return SpectralField(m[0][0].grid, np.stack(comps), m[0][0].real)


def pointwise_modulus(f: SpectralField) -> np.ndarray:
    x = to_physical(f)
    if f.comps == 2:
        return np.sqrt(np.abs(x[0]) ** 2 + np.abs(x[1]) ** 2)
    return np.abs(x)


def lp_norm(f: SpectralField, p: float) -> float:
    """Equal-weight quadrature of |f|^p over one period (so ||1||_p = L^(2/p)).

    Vector fields use the pointwise Euclidean modulus; p = inf is the max over
    grid points.
    """
    if not (p >= 1):
        raise ValidationError(f"p must lie in [1, inf], got {p}")
    mod = pointwise_modulus(f)
    return lp_norm_samples(mod, f.grid.spacing, p)


def lp_norm_samples(mod: np.ndarray, spacing: float, p: float) -> float:
    if math.isinf(p):
        return float(mod.max())
    area = spacing * spacing
    if p == 2:
        return float(math.sqrt(np.sum(mod * mod) * area))
    if p == 1:
        return float(np.sum(mod) * area)
    scale = mod.max()
    if scale == 0:
        return 0.0
    return float(scale * (np.sum((mod / scale) ** p) * area) ** (1.0 / p))


def l2_norm_spectral(f: SpectralField) -> float:
    """L^2 norm computed from coefficients (Parseval)."""
    n = f.grid.n
    return float(math.sqrt(np.sum(np.abs(f.coeffs) ** 2)) * f.grid.spacing / n)


def divergence_residual(u: SpectralField) -> float:
    """max_k |k . u_hat(k)| / max_k |u_hat(k)| (0 for the zero field)."""
    k1, k2 = u.grid.odd_wavenumbers
    top = np.max(np.abs(k1 * u.coeffs[0] + k2 * u.coeffs[1]))
    kmax = max(np.max(np.abs(k1)), np.max(np.abs(k2)))
    bottom = np.max(np.abs(u.coeffs)) * kmax
    return float(top / bottom) if bottom > 0 else 0.0


def hermitian_defect(f: SpectralField) -> float:
    """max |c(k) - conj(c(-k))| relative to max |c|."""
    c = f.coeffs
    flipped = np.conj(np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1)))
    scale = np.max(np.abs(c))
    return float(np.max(np.abs(c - flipped)) / scale) if scale > 0 else 0.0


# --- snapshot files -------------------------------------------------------


def write_snapshot(path: str | Path, f: SpectralField) -> None:
    """Text snapshot: one header line, then row-major real samples one per line."""
    samples = to_physical(f).real
    if f.comps == 1:
        samples = samples[None]
    header = f"{SNAPSHOT_MAGIC}, n={f.grid.n}, L={f.grid.box_length!r}, comps={f.comps}\n"
    body = "\n".join(repr(float(x)) for x in samples.ravel())
    Path(path).write_text(header + body + "\n")


def read_snapshot(path: str | Path) -> SpectralField:
    lines = Path(path).read_text().split("\n", 1)
    head = [part.strip() for part in lines[0].split(",")]
    if head[0] != SNAPSHOT_MAGIC:
        raise ValidationError(f"{path}: not an {SNAPSHOT_MAGIC} file")
    meta = dict(part.split("=", 1) for part in head[1:])
    grid = Grid(int(meta["n"]), float(meta["L"]))
    comps = int(meta["comps"])
    values = np.array(lines[1].split(), dtype=float)
    if values.size != comps * grid.n**2:
        raise DimensionError(f"{path}: expected {comps * grid.n**2} values, found {values.size}")
    return to_spectral(values.reshape(comps, grid.n, grid.n), grid)


def real_field(grid: Grid, samples: np.ndarray, solenoidal: bool = False) -> SpectralField:
    f = to_spectral(np.asarray(samples, dtype=float), grid)
    return replace(f, solenoidal=solenoidal)


__all__ = [
    "DEFAULT_BOX",
    "Grid",
    "SpectralField",
    "advection",
    "dealias",
    "derivative",
    "divergence",
    "divergence_residual",
    "dot",
    "gradient",
    "hermitian_defect",
    "inverse_laplacian",
    "l2_norm_spectral",
    "laplacian",
    "leray_project",
    "lp_norm",
    "matrix_divergence",
    "perp_gradient",
    "product",
    "read_snapshot",
    "real_field",
    "strain",
    "to_physical",
    "to_spectral",
    "write_snapshot",
    "zeros",
]
