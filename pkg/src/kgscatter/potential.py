"""Convolution potential ``|x|^{-gamma}`` and the cubic Hartree force."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .spectral import SpectralGrid

__all__ = [
    "Backend",
    "OriginRule",
    "PotentialSpec",
    "KernelMultiplier",
    "box_integral",
    "riesz_constant",
    "build_kernel",
    "convolve",
    "hartree_force",
    "expansion_coefficients",
    "force_from_halfwaves",
    "force_from_halfwaves_expanded",
]


class Backend(str, enum.Enum):
    TRUNCATED_KERNEL = "truncated-kernel"
    RIESZ_MULTIPLIER = "riesz-multiplier"


class OriginRule(str, enum.Enum):
    CELL_AVERAGE = "cell-average"
    # the singular origin sample is left out (set to zero)
    PLAIN_SAMPLE = "plain-sample"


@dataclass(frozen=True)
class PotentialSpec:
    """Kernel choice plus the coupling ``lambda`` in ``F = lambda (V * |u|^2) u``.

    The default coupling ``-1`` is the defocusing sign of the theorem; any
    other value is outside its scope.
    """

    gamma: float
    backend: Backend = Backend.TRUNCATED_KERNEL
    origin_rule: OriginRule = OriginRule.CELL_AVERAGE
    coupling: float = -1.0
    padded: bool = False

    def __post_init__(self):
        g = self.gamma
        if isinstance(g, (Fraction, str)):
            g = float(Fraction(g))
        object.__setattr__(self, "gamma", float(g))
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "origin_rule", OriginRule(self.origin_rule))
        object.__setattr__(self, "coupling", float(self.coupling))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def in_theorem_scope(self) -> bool:
        return self.coupling == -1.0

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "backend": self.backend.value,
            "origin_rule": self.origin_rule.value,
            "coupling": self.coupling,
            "padded": self.padded,
        }


@dataclass(frozen=True, eq=False)
class KernelMultiplier:
    """Spectrum of the discrete kernel, in the physical transform convention.

    When ``padded`` is set the spectrum lives on a doubled grid and
    convolution is linear (no periodic images) on the original box.
    """

    grid: SpectralGrid
    spec: PotentialSpec
    spectrum: np.ndarray
    work_grid: SpectralGrid

    @property
    def padded(self) -> bool:
        return self.work_grid is not self.grid

    @property
    def zero_mode(self) -> float:
        return float(self.spectrum.flat[0])


@lru_cache(maxsize=None)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def box_integral(n: int, gamma: float, half_width: float, order: int = 96) -> float:
    """``int_{[-a,a]^n} |x|^{-gamma} dx`` by the pyramid decomposition.

    Each of the ``2n`` pyramids with apex at the origin reduces to the
    smooth face integral ``a/(n-gamma) int (a^2+|y|^2)^{-gamma/2} dy`` over
    ``[-a,a]^{n-1}``, done by tensor Gauss-Legendre.
    """
    if not 0 < gamma < n:
        raise ValueError(f"|x|^-gamma is not locally integrable for gamma={gamma}, n={n}")
    a = float(half_width)
    if n == 1:
        return 2.0 * a ** (1 - gamma) / (1 - gamma)
    nodes, weights = _legendre(order)
    y = a * nodes
    wy = a * weights
    pts = np.meshgrid(*([y] * (n - 1)), indexing="ij")
    wts = np.prod(np.meshgrid(*([wy] * (n - 1)), indexing="ij"), axis=0)
    rho2 = a * a + sum(p * p for p in pts)
    face = float(np.sum(wts * rho2 ** (-gamma / 2)))
    return 2 * n * a / (n - gamma) * face


def riesz_constant(n: int, gamma: float) -> float:
    """Fourier transform of ``|x|^{-gamma}`` is ``c |xi|^{gamma-n}``; returns ``c``."""
    return 2 ** (n - gamma) * math.pi ** (n / 2) * gamma_fn((n - gamma) / 2) / gamma_fn(gamma / 2)


def _spatial_kernel(grid: SpectralGrid, spec: PotentialSpec) -> np.ndarray:
    r = np.sqrt(grid.r2)
    origin = (grid.points // 2,) * grid.dim
    r[origin] = 1.0
    k = r ** (-spec.gamma)
    if spec.origin_rule is OriginRule.CELL_AVERAGE:
        k[origin] = box_integral(grid.dim, spec.gamma, 0.5 * grid.h) / grid.cell_volume
    else:
        k[origin] = 0.0
    return k


def build_kernel(grid: SpectralGrid, spec: PotentialSpec) -> KernelMultiplier:
    n = grid.dim
    if spec.gamma >= n:
        raise ValueError(f"gamma={spec.gamma} must be < n={n}")
    work = SpectralGrid(n, 2 * grid.points, 2 * grid.box_length) if spec.padded else grid
    if spec.backend is Backend.TRUNCATED_KERNEL:
        k = np.fft.ifftshift(_spatial_kernel(work, spec))
        spectrum = np.fft.fftn(k).real * work.cell_volume
    else:
        xi = np.sqrt(work.xi2)
        xi.flat[0] = 1.0
        spectrum = riesz_constant(n, spec.gamma) * xi ** (spec.gamma - n)
        spectrum.flat[0] = box_integral(n, spec.gamma, 0.5 * work.box_length)
    return KernelMultiplier(grid=grid, spec=spec, spectrum=spectrum, work_grid=work)


def _pad(mult: KernelMultiplier, f: np.ndarray) -> np.ndarray:
    n, m = mult.grid.points, mult.work_grid.points
    out = np.zeros((m,) * mult.grid.dim, dtype=f.dtype)
    sl = (slice(n // 2, n // 2 + n),) * mult.grid.dim
    out[sl] = f
    return out


def _crop(mult: KernelMultiplier, f: np.ndarray) -> np.ndarray:
    n = mult.grid.points
    return f[(slice(n // 2, n // 2 + n),) * mult.grid.dim]


def convolve(mult: KernelMultiplier, density: np.ndarray) -> np.ndarray:
    """``(V * density)(x) ~ sum_y K(x - y) density(y) h^n``."""
    if density.shape != mult.grid.shape:
        raise ValueError(f"density shape {density.shape} does not match kernel grid {mult.grid.shape}")
    work = _pad(mult, density) if mult.padded else density
    if np.isrealobj(work):
        half = mult.spectrum[..., : work.shape[-1] // 2 + 1]
        out = np.fft.irfftn(np.fft.rfftn(work) * half, s=work.shape, axes=tuple(range(work.ndim)))
    else:
        out = np.fft.ifftn(np.fft.fftn(work) * mult.spectrum)
    return _crop(mult, out) if mult.padded else out


def hartree_force(u: np.ndarray, mult: KernelMultiplier, coupling: float | None = None) -> np.ndarray:
    """``coupling * (V * |u|^2) u``; coupling defaults to the kernel spec's."""
    lam = mult.spec.coupling if coupling is None else coupling
    if lam == 0:
        return np.zeros_like(u, dtype=complex)
    density = (u * np.conj(u)).real if np.iscomplexobj(u) else u * u
    return lam * convolve(mult, density) * u


def expansion_coefficients(coupling: float) -> dict[tuple[int, int, int], float]:
    """Constants of the eight-term expansion of the force in half-wave variables.

    From ``u = (w+ - w-)/2``: ``C = coupling * e1 e2 e3 / 8``.
    """
    return {
        signs: coupling * signs[0] * signs[1] * signs[2] / 8.0
        for signs in itertools.product((1, -1), repeat=3)
    }


def force_from_halfwaves(w_plus, w_minus, mult: KernelMultiplier, coupling: float | None = None):
    """Force of the reconstructed ``u = (w+ - w-)/2``."""
    return hartree_force(0.5 * (w_plus - w_minus), mult, coupling)


def force_from_halfwaves_expanded(w_plus, w_minus, mult: KernelMultiplier, coupling: float | None = None):
    """Same force, summed term by term over the eight branch triples."""
    lam = mult.spec.coupling if coupling is None else coupling
    w = {1: np.asarray(w_plus), -1: np.asarray(w_minus)}
    out = np.zeros(mult.grid.shape, dtype=complex)
    for (e1, e2, e3), c in expansion_coefficients(lam).items():
        out += c * convolve(mult, np.conj(w[e1]) * w[e2]) * w[e3]
    return out
