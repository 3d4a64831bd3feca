"""Periodic-box discretization and Fourier multipliers.

The box ``[-L/2, L/2)^n`` stands in for R^n.  Transforms follow

    phi_hat(xi) = sum_x phi(x) exp(-i xi.x) h^n,

with the inverse carrying ``1/L^n``.  Internally the transform is taken
relative to the first grid point, which changes spectra by a unimodular
phase that no multiplier, norm, or convolution can see.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Branch",
    "BRANCHES",
    "SpectralGrid",
    "NormSpec",
    "bessel_multiplier",
    "free_propagate",
    "sobolev_norm",
    "hnorm",
    "gradient",
    "multiply_x",
    "apply_J",
    "effective_radius",
    "clean_horizon",
    "SupportError",
    "write_field",
    "read_field",
]


class Branch(enum.IntEnum):
    """Half-wave branch sign."""

    PLUS = 1
    MINUS = -1

    @property
    def symbol(self) -> str:
        return "+" if self is Branch.PLUS else "-"


BRANCHES = (Branch.PLUS, Branch.MINUS)


class SupportError(ValueError):
    """A field reaches too close to the box boundary for x-weighted work."""


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid with ``points`` samples per axis on a box of side ``box_length``."""

    dim: int
    points: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points < 4 or self.points % 2:
            raise ValueError(f"points must be even and >= 4, got {self.points}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def h(self) -> float:
        return self.box_length / self.points

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Centered 1D coordinates ``-L/2 + j h``."""
        return -0.5 * self.box_length + self.h * np.arange(self.points)

    @cached_property
    def x(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(xj**2 for xj in self.x) * np.ones(self.shape)

    @cached_property
    def xi_axis(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.h)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi_axis] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def xi2(self) -> np.ndarray:
        return sum(kj**2 for kj in self.xi) * np.ones(self.shape)

    @cached_property
    def bracket(self) -> np.ndarray:
        """``<xi> = sqrt(1 + |xi|^2)`` on the frequency lattice."""
        return np.sqrt(1.0 + self.xi2)

    @cached_property
    def derivative_symbols(self) -> tuple[np.ndarray, ...]:
        # i xi_j with the self-conjugate Nyquist mode dropped so that real fields stay real
        out = []
        nyq = self.points // 2
        for j in range(self.dim):
            k = self.xi_axis.copy()
            k[nyq] = 0.0
            sh = [1] * self.dim
            sh[j] = self.points
            out.append(1j * k.reshape(sh))
        return tuple(out)

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(f, axes=self.axes) * self.cell_volume

    def ifft(self, fhat: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(fhat, axes=self.axes) / self.cell_volume

    def apply_symbol(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(np.fft.fftn(f, axes=self.axes) * symbol, axes=self.axes)

    def integrate(self, density: np.ndarray) -> float:
        return float(np.sum(density.real)) * self.cell_volume

    def plane_wave(self, modes) -> tuple[np.ndarray, np.ndarray]:
        """``exp(i k.x)`` for integer lattice modes; returns ``(field, k)``."""
        modes = tuple(int(m) for m in modes)
        if len(modes) != self.dim:
            raise ValueError("need one mode index per axis")
        k = np.array(modes, dtype=float) * 2 * np.pi / self.box_length
        phase = sum(kj * xj for kj, xj in zip(k, self.x))
        return np.exp(1j * phase) * np.ones(self.shape), k

    def check_shape(self, f: np.ndarray) -> None:
        if tuple(f.shape[-self.dim :]) != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")

    def to_json(self) -> dict:
        return {"dim": self.dim, "points": self.points, "box_length": self.box_length}


@dataclass(frozen=True)
class NormSpec:
    """``|| <x>^k <i grad>^beta phi ||_{L^p}``; ``p = math.inf`` for the sup norm."""

    beta: float = 0.0
    p: float = 2.0
    k: float = 0.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"Lebesgue exponent must be >= 1, got {self.p}")
        if self.k < 0:
            raise ValueError(f"weight order must be >= 0, got {self.k}")


def bessel_multiplier(grid: SpectralGrid, f: np.ndarray, s: float) -> np.ndarray:
    """Apply ``<i grad>^s``; negative ``s`` is fine, the symbol is >= 1."""
    if s == 0:
        return np.array(f, dtype=complex)
    return grid.apply_symbol(f, grid.bracket**s)


def free_propagate(grid: SpectralGrid, f: np.ndarray, t: float, eps: int) -> np.ndarray:
    """Half-wave group ``U_eps(t) = exp(-i eps <i grad> t)``."""
    if t == 0:
        return np.array(f, dtype=complex)
    return grid.apply_symbol(f, np.exp(-1j * int(eps) * t * grid.bracket))


def sobolev_norm(grid: SpectralGrid, f: np.ndarray, spec: NormSpec = NormSpec()) -> float:
    """Weighted Bessel-potential norm.

    Leading axes beyond the grid shape are treated as vector components and
    combined pointwise in the Euclidean sense.
    """
    grid.check_shape(f)
    if spec.p == 2 and spec.k == 0:
        fhat = grid.fft(f)
        w = grid.bracket ** (2 * spec.beta) if spec.beta else 1.0
        return math.sqrt(float(np.sum(np.abs(fhat) ** 2 * w)) / grid.volume)
    g = bessel_multiplier(grid, f, spec.beta)
    mag = np.abs(g)
    if g.ndim > grid.dim:
        mag = np.sqrt(np.sum(mag**2, axis=tuple(range(g.ndim - grid.dim))))
    if spec.k:
        mag = mag * (1.0 + grid.r2) ** (spec.k / 2)
    if math.isinf(spec.p):
        return float(mag.max())
    return float(np.sum(mag**spec.p) * grid.cell_volume) ** (1.0 / spec.p)


def hnorm(grid: SpectralGrid, f: np.ndarray, beta: float) -> float:
    """Shortcut for the unweighted L^2-based norm of order ``beta``."""
    return sobolev_norm(grid, f, NormSpec(beta=beta))


def gradient(grid: SpectralGrid, f: np.ndarray) -> np.ndarray:
    """Spectral gradient; returns shape ``(dim, *grid.shape)``."""
    fhat = np.fft.fftn(f, axes=grid.axes)
    return np.stack([np.fft.ifftn(fhat * d, axes=grid.axes) for d in grid.derivative_symbols])


def multiply_x(grid: SpectralGrid, f: np.ndarray) -> np.ndarray:
    """Componentwise ``x_j f`` with the centered coordinate; shape ``(dim, *shape)``."""
    return np.stack([xj * f for xj in grid.x])


def apply_J(grid: SpectralGrid, f: np.ndarray, t: float, eps: int) -> np.ndarray:
    """``J_eps f = <i grad>(x f) + i eps t grad f``, one component per direction."""
    out = bessel_multiplier(grid, multiply_x(grid, f), 1.0)
    if t != 0:
        out = out + 1j * int(eps) * t * gradient(grid, f)
    return out


def effective_radius(grid: SpectralGrid, *fields: np.ndarray, threshold: float = 1e-12) -> float:
    """Largest centered radius where any field exceeds ``threshold`` times its peak."""
    radius = 0.0
    r = np.sqrt(grid.r2)
    for f in fields:
        mag = np.abs(f)
        if mag.ndim > grid.dim:
            mag = mag.reshape(-1, *grid.shape).max(axis=0)
        peak = mag.max()
        if peak == 0:
            continue
        mask = mag > threshold * peak
        radius = max(radius, float(r[mask].max()))
    return radius


def clean_horizon(grid: SpectralGrid, *fields: np.ndarray, threshold: float = 1e-12) -> float:
    """Time for which unit-speed signals from the data stay off the boundary."""
    return 0.5 * grid.box_length - effective_radius(grid, *fields, threshold=threshold)


def require_support(grid: SpectralGrid, f: np.ndarray, fraction: float = 0.5, threshold: float = 1e-12):
    """Raise :class:`SupportError` unless the field lives inside ``fraction * L/2`` of the center."""
    radius = effective_radius(grid, f, threshold=threshold)
    limit = fraction * 0.5 * grid.box_length
    if radius > limit:
        raise SupportError(f"field support radius {radius:.4g} exceeds {limit:.4g}")
    return radius


# Binary field format: little-endian int64 dim, int64 points per axis,
# float64 box length per axis, then interleaved float64 (re, im) samples
# in row-major order.


def write_field(path, grid: SpectralGrid, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.complex128)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    header = struct.pack(
        f"<q{grid.dim}q{grid.dim}d",
        grid.dim,
        *([grid.points] * grid.dim),
        *([grid.box_length] * grid.dim),
    )
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values).astype("<c16").tobytes())


def read_field(path) -> tuple[SpectralGrid, np.ndarray]:
    data = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<q", data, 0)
    if dim not in (1, 2, 3):
        raise ValueError(f"bad field header: dim={dim}")
    points = struct.unpack_from(f"<{dim}q", data, 8)
    lengths = struct.unpack_from(f"<{dim}d", data, 8 + 8 * dim)
    if len(set(points)) != 1 or len(set(lengths)) != 1:
        raise ValueError("only isotropic grids are supported")
    grid = SpectralGrid(dim, points[0], lengths[0])
    offset = 8 + 16 * dim
    payload = np.frombuffer(data, dtype="<c16", offset=offset)
    if payload.size != math.prod(grid.shape):
        raise ValueError("field payload size does not match header")
    return grid, payload.reshape(grid.shape).astype(np.complex128)
