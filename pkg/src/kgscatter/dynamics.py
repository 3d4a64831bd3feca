"""Half-wave variables, Duhamel integrals, Strang splitting and Picard iteration.

Conventions: ``w^eps = i <D>^{-1} v + eps u`` with ``<D> = <i grad>``, so that
``u = (w+ - w-)/2`` and ``v = -(i/2) <D> (w+ + w-)``.  In these variables the
equation ``u_tt - Lap u + u = F(u)`` becomes

    (i d/dt - eps <D>) w^eps = -<D>^{-1} F(u),

whose integral form is ``w^eps(t) = U_eps(t - t0) w^eps(t0) + i Psi_eps[F]``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .potential import KernelMultiplier, hartree_force
from .spectral import BRANCHES, SpectralGrid, bessel_multiplier

log = logging.getLogger(__name__)

__all__ = [
    "FieldState",
    "HalfWavePair",
    "Trajectory",
    "HorizonError",
    "PicardDivergence",
    "gaussian_data",
    "to_halfwaves",
    "from_halfwaves",
    "duhamel",
    "StrangStepper",
    "step_strang",
    "evolve",
    "energy",
    "halfwave_time_derivative",
    "halfwave_residual",
    "picard_iterate",
    "PicardResult",
    "richardson_estimate",
]


class HorizonError(RuntimeError):
    """Requested run is longer than the box can represent faithfully."""


class PicardDivergence(RuntimeError):
    """Successive Picard differences kept growing."""


@dataclass
class FieldState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must share a grid")


@dataclass
class HalfWavePair:
    w_plus: np.ndarray
    w_minus: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.w_plus.shape != self.w_minus.shape:
            raise ValueError("w+ and w- must share a grid")

    def branch(self, eps: int) -> np.ndarray:
        return self.w_plus if eps > 0 else self.w_minus

    def stacked(self) -> np.ndarray:
        return np.stack([self.w_plus, self.w_minus])


@dataclass
class Trajectory:
    """Half-wave samples ``w[j, b]`` at ``times[j]``; ``b = 0`` is ``+``."""

    grid: SpectralGrid
    times: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.w.shape[:2] != (len(self.times), 2):
            raise ValueError("samples must have shape (n_times, 2, *grid.shape)")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def pair(self, j: int) -> HalfWavePair:
        return HalfWavePair(self.w[j, 0], self.w[j, 1], float(self.times[j]))

    def state(self, j: int) -> FieldState:
        return from_halfwaves(self.grid, self.pair(j))


def gaussian_data(grid: SpectralGrid, amplitude: float, sigma: float, k0=None):
    """Modulated Gaussian ``a exp(-|x|^2 / (2 sigma^2)) exp(i k0.x)`` with zero velocity."""
    f = amplitude * np.exp(-grid.r2 / (2 * sigma**2))
    if k0 is not None and np.any(np.asarray(k0) != 0):
        k0 = np.broadcast_to(np.asarray(k0, dtype=float), (grid.dim,))
        f = f * np.exp(1j * sum(kj * xj for kj, xj in zip(k0, grid.x)))
    else:
        f = f.astype(complex)
    return f, np.zeros(grid.shape, dtype=complex)


def to_halfwaves(grid: SpectralGrid, f: np.ndarray, g: np.ndarray, t: float = 0.0) -> HalfWavePair:
    if f.shape != g.shape:
        raise ValueError("f and g must share a grid")
    grid.check_shape(f)
    a = 1j * bessel_multiplier(grid, g, -1.0)
    return HalfWavePair(a + f, a - f, t)


def from_halfwaves(grid: SpectralGrid, pair: HalfWavePair) -> FieldState:
    u = 0.5 * (pair.w_plus - pair.w_minus)
    v = -0.5j * bessel_multiplier(grid, pair.w_plus + pair.w_minus, 1.0)
    return FieldState(u, v, pair.t)


def duhamel(
    grid: SpectralGrid,
    times: np.ndarray,
    g: np.ndarray,
    T: float,
    t: float,
    eps: int,
) -> np.ndarray:
    """``int_T^t U_eps(t - tau) <D>^{-1} g(tau) dtau`` by composite trapezoid.

    ``times`` must be a uniform lattice containing both ``T`` and ``t``;
    ``g[j]`` is the integrand source at ``times[j]``.
    """
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        raise ValueError("no samples")
    d = np.diff(times)
    tol = 1e-9 * (abs(d).max() if len(d) else 1.0)
    lo, hi = min(T, t), max(T, t)
    j0 = int(np.argmin(abs(times - lo)))
    j1 = int(np.argmin(abs(times - hi)))
    if abs(times[j0] - lo) > tol or abs(times[j1] - hi) > tol:
        raise ValueError(f"samples do not cover [{lo}, {hi}] on their lattice")
    if j1 == j0:
        return np.zeros(grid.shape, dtype=complex)
    seg = times[j0 : j1 + 1]
    steps = np.diff(seg)
    if np.ptp(steps) > tol:
        raise ValueError("duhamel needs a uniform sample lattice")
    dtau = steps[0]
    weights = np.full(len(seg), dtau)
    weights[[0, -1]] *= 0.5
    acc = np.zeros(grid.shape, dtype=complex)
    for wj, tau, gj in zip(weights, seg, g[j0 : j1 + 1]):
        acc += wj * np.exp(-1j * eps * (t - tau) * grid.bracket) * np.fft.fftn(gj)
    acc /= grid.bracket
    out = np.fft.ifftn(acc)
    return out if t >= T else -out


class StrangStepper:
    """Kick-drift-kick splitting with the free Klein-Gordon flow as the drift.

    The drift multipliers are cached per ``dt``.
    """

    def __init__(self, grid: SpectralGrid, mult: Optional[KernelMultiplier], coupling: Optional[float] = None):
        self.grid = grid
        self.mult = mult
        if coupling is None:
            coupling = mult.spec.coupling if mult is not None else 0.0
        if coupling != 0 and mult is None:
            raise ValueError("nonzero coupling needs a kernel")
        self.coupling = float(coupling)
        self._cache: dict[float, tuple] = {}

    def _drift(self, dt: float):
        if dt not in self._cache:
            k = self.grid.bracket
            c, s = np.cos(dt * k), np.sin(dt * k)
            self._cache[dt] = (c, s / k, -k * s)
        return self._cache[dt]

    def force(self, u: np.ndarray) -> np.ndarray:
        if self.coupling == 0:
            return np.zeros_like(u)
        return hartree_force(u, self.mult, self.coupling)

    def drift(self, u, v, dt):
        c, s_over_k, mk_s = self._drift(dt)
        uh = np.fft.fftn(u)
        vh = np.fft.fftn(v)
        return np.fft.ifftn(c * uh + s_over_k * vh), np.fft.ifftn(mk_s * uh + c * vh)

    def step(self, state: FieldState, dt: float) -> FieldState:
        v = state.v + 0.5 * dt * self.force(state.u)
        u, v = self.drift(state.u, v, dt)
        v = v + 0.5 * dt * self.force(u)
        return FieldState(u, v, state.t + dt)

    def run(self, state: FieldState, n_steps: int, dt: float, record: Sequence[int] = ()):
        """Advance ``n_steps``; yields ``(step_index, FieldState)`` at indices in ``record``.

        The end-of-step force is reused for the next half-kick.
        """
        record = set(record)
        u, v, t0 = state.u, state.v, state.t
        if 0 in record:
            yield 0, FieldState(u, v, t0)
        F = self.force(u)
        for k in range(1, n_steps + 1):
            v = v + 0.5 * dt * F
            u, v = self.drift(u, v, dt)
            F = self.force(u)
            v = v + 0.5 * dt * F
            if k in record:
                yield k, FieldState(u, v, t0 + k * dt)


def step_strang(grid, state: FieldState, dt: float, mult: Optional[KernelMultiplier], coupling=None) -> FieldState:
    return StrangStepper(grid, mult, coupling).step(state, dt)


def _step_count(span: float, dt: float) -> int:
    n = round(span / dt)
    if n < 0 or abs(n * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"duration {span} is not an integral number of steps of {dt}")
    return int(n)


def evolve(
    grid: SpectralGrid,
    state: FieldState,
    t_end: float,
    dt: float,
    mult: Optional[KernelMultiplier],
    coupling: Optional[float] = None,
    sample_times: Optional[Sequence[float]] = None,
    horizon: Optional[float] = None,
    strict_horizon: bool = False,
) -> Trajectory:
    """Strang evolution from ``state.t`` to ``t_end`` with half-wave samples.

    ``sample_times`` defaults to the two endpoints and must lie on the step
    lattice.  ``horizon`` is the clean-horizon length; exceeding it raises in
    strict (theorem) mode and warns otherwise.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    span = t_end - state.t
    n_steps = _step_count(span, dt)
    if horizon is not None and span > horizon:
        msg = f"run length {span:.4g} exceeds the clean horizon {horizon:.4g}"
        if strict_horizon:
            raise HorizonError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if sample_times is None:
        sample_times = [state.t, t_end]
    idx = sorted({_step_count(ts - state.t, dt) for ts in sample_times})
    if idx and idx[-1] > n_steps:
        raise ValueError("sample time beyond t_end")
    stepper = StrangStepper(grid, mult, coupling)
    times, samples = [], []
    for k, st in stepper.run(state, n_steps, dt, idx):
        pair = to_halfwaves(grid, st.u, st.v, st.t)
        times.append(state.t + k * dt)
        samples.append(pair.stacked())
    meta = {
        "integrator": "strang",
        "dt": dt,
        "coupling": stepper.coupling,
        "grid": grid.to_json(),
        "potential": None if mult is None else mult.spec.to_json(),
    }
    return Trajectory(grid, np.array(times), np.array(samples), meta)


def energy(grid: SpectralGrid, state: FieldState, mult: Optional[KernelMultiplier], coupling=None) -> float:
    """``int |v|^2/2 + |grad u|^2/2 + |u|^2/2 - (coupling/4)(V*|u|^2)|u|^2``."""
    if coupling is None:
        coupling = mult.spec.coupling if mult is not None else 0.0
    u, v = state.u, state.v
    uh = grid.fft(u)
    # |grad u|^2 + |u|^2 summed spectrally (Parseval), Nyquist included
    kinetic = float(np.sum(np.abs(uh) ** 2 * (1.0 + grid.xi2))) / grid.volume
    e = 0.5 * grid.integrate(np.abs(v) ** 2) + 0.5 * kinetic
    if coupling != 0:
        from .potential import convolve

        rho = np.abs(u) ** 2
        e -= 0.25 * coupling * grid.integrate(convolve(mult, rho).real * rho)
    return e


def halfwave_time_derivative(grid, pair: HalfWavePair, mult, coupling=None) -> np.ndarray:
    """``d/dt w^eps = -i eps <D> w^eps + i <D>^{-1} F(u)`` from the equation."""
    u = 0.5 * (pair.w_plus - pair.w_minus)
    if coupling is None:
        coupling = mult.spec.coupling if mult is not None else 0.0
    src = 0.0
    if coupling != 0:
        src = 1j * bessel_multiplier(grid, hartree_force(u, mult, coupling), -1.0)
    return np.stack([-1j * e * bessel_multiplier(grid, pair.branch(e), 1.0) + src for e in BRANCHES])


def halfwave_residual(grid, traj: Trajectory, mult, coupling=None) -> float:
    """Max over interior samples of ``sum_eps ||L_eps w + <D>^{-1} F||_{L^2}``.

    ``d/dt`` is the fourth-order central difference of the samples, which
    must be uniformly spaced.
    """
    if len(traj) < 5:
        raise ValueError("need at least five samples")
    d = np.diff(traj.times)
    if np.ptp(d) > 1e-9 * d.max():
        raise ValueError("samples must be uniformly spaced")
    ds = d[0]
    if coupling is None:
        coupling = mult.spec.coupling if mult is not None else 0.0
    worst = 0.0
    for j in range(2, len(traj) - 2):
        dw = (-traj.w[j + 2] + 8 * traj.w[j + 1] - 8 * traj.w[j - 1] + traj.w[j - 2]) / (12 * ds)
        exact = halfwave_time_derivative(grid, traj.pair(j), mult, coupling)
        # i dw - eps<D>w + <D>^{-1}F = i (dw - exact)
        res = sum(math.sqrt(grid.integrate(np.abs(dw[b] - exact[b]) ** 2)) for b in range(2))
        worst = max(worst, res)
    return worst


@dataclass
class PicardResult:
    trajectory: Trajectory
    differences: list[float]
    diverged: bool
    iterates: list[Trajectory] = field(default_factory=list)

    @property
    def ratios(self) -> list[float]:
        d = self.differences
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]

    def contraction_ratio(self, start: int = 2, floor: float = 0.0) -> Optional[float]:
        """Largest ``D_{k+1}/D_k`` over ``k >= start`` with ``D_k`` above ``floor``.

        ``None`` when no admissible ratio exists (converged before ``start``).
        """
        d = self.differences
        vals = [d[k] / d[k - 1] for k in range(start, len(d)) if d[k - 1] > floor and d[k] > floor]
        return max(vals) if vals else None

    @property
    def final_difference(self) -> float:
        return self.differences[-1] if self.differences else 0.0


def _hbeta_weights(grid, beta):
    return grid.bracket ** (2 * beta) * grid.cell_volume**2 / grid.volume


def picard_iterate(
    grid: SpectralGrid,
    w0: HalfWavePair,
    T: float,
    dtau: float,
    iterations: int,
    mult: Optional[KernelMultiplier],
    coupling: Optional[float] = None,
    beta: float = 1.0,
    tol: float = 0.0,
    strict: bool = True,
    keep_iterates: bool = False,
    horizon: Optional[float] = None,
    strict_horizon: bool = False,
) -> PicardResult:
    """Fixed-point sweeps of the Duhamel map on the lattice ``w0.t + j dtau``.

    Sweep ``k`` builds ``w_k = U(t - t0) w0 + i Psi[F(w_{k-1})]`` from the
    previous iterate, starting at the free flow, with trapezoid quadrature in
    the interaction picture.  ``differences[k-1]`` is the sup over nodes of
    the branch-summed ``H^beta`` distance between sweeps ``k`` and ``k-1``.
    Stops early once a difference drops to ``tol``.  Three consecutive
    growths are divergence: raised when ``strict``, flagged otherwise.
    """
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    m = _step_count(T, dtau)
    if horizon is not None and T > horizon:
        msg = f"run length {T:.4g} exceeds the clean horizon {horizon:.4g}"
        if strict_horizon:
            raise HorizonError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if coupling is None:
        coupling = mult.spec.coupling if mult is not None else 0.0
    t0 = w0.t
    taus = t0 + dtau * np.arange(m + 1)
    rel = taus - t0
    k = grid.bracket
    w0_hat = np.stack([np.fft.fftn(w0.w_plus), np.fft.fftn(w0.w_minus)])
    eps = np.array([1, -1]).reshape((2,) + (1,) * grid.dim)
    weights = _hbeta_weights(grid, beta)

    # spectral samples of the current iterate, shape (m+1, 2, *shape)
    current = np.empty((m + 1, 2) + grid.shape, dtype=complex)
    for j, s in enumerate(rel):
        current[j] = np.exp(-1j * eps * s * k) * w0_hat

    def to_traj(spec_samples):
        phys = np.fft.ifftn(spec_samples, axes=grid.axes)
        return Trajectory(grid, taus.copy(), phys, meta)

    meta = {
        "integrator": "picard",
        "dtau": dtau,
        "coupling": coupling,
        "grid": grid.to_json(),
        "potential": None if mult is None else mult.spec.to_json(),
        "t0": t0,
    }
    iterates = [to_traj(current)] if keep_iterates else []
    diffs: list[float] = []
    growth = 0
    diverged = False
    if coupling == 0:
        iterations = min(iterations, 1)
    for sweep in range(iterations):
        new = np.empty_like(current)
        acc = np.zeros((2,) + grid.shape, dtype=complex)
        prev_term = None
        sup = 0.0
        for j, s in enumerate(rel):
            u = np.fft.ifftn(0.5 * (current[j, 0] - current[j, 1]))
            if coupling != 0:
                Fh = np.fft.fftn(hartree_force(u, mult, coupling)) / k
            else:
                Fh = np.zeros(grid.shape, dtype=complex)
            # interaction-picture integrand U_eps(-(tau - t0)) <D>^{-1} F
            term = np.exp(1j * eps * s * k) * Fh
            if prev_term is not None:
                acc += 0.5 * dtau * (prev_term + term)
            prev_term = term
            new[j] = np.exp(-1j * eps * s * k) * (w0_hat + 1j * acc)
            diff = new[j] - current[j]
            dn = sum(math.sqrt(float(np.sum(np.abs(diff[b]) ** 2 * weights))) for b in range(2))
            sup = max(sup, dn)
        diffs.append(sup)
        current = new
        if keep_iterates:
            iterates.append(to_traj(current))
        log.debug("picard sweep %d: D=%.3e", sweep + 1, sup)
        if len(diffs) > 1 and diffs[-1] > diffs[-2]:
            growth += 1
        else:
            growth = 0
        if growth >= 3:
            diverged = True
            if strict:
                raise PicardDivergence(f"Picard differences grew for 3 sweeps: {diffs}")
            break
        if sup <= tol:
            break
    return PicardResult(to_traj(current), diffs, diverged, iterates)


def richardson_estimate(coarse: float, order: int = 2) -> float:
    """Error of the coarse run from its distance to the half-step run."""
    return coarse * 2**order / (2**order - 1)
