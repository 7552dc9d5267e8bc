"""Strang split-step Fourier solver for the periodic NLS

    i u_t + u_xx - (V(x) + eps W(x)) u - sigma(x) |u|^2 u = 0

on a periodic grid over [-L, L).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.fft as sfft

from .potentials import PeriodicFunction, evaluate

__all__ = [
    "SimulationError",
    "GridSpec",
    "SimulationConfig",
    "SimulationState",
    "Snapshot",
    "Trajectory",
    "build_grid",
    "SplitStepSolver",
    "kinetic_half_step",
    "potential_nonlinear_step",
    "strang_step",
    "simulate",
    "write_snapshot_csv",
    "write_metadata",
]

# relative dx adjustment allowed when rounding to an FFT-friendly length
DX_SLACK = 0.01


class SimulationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class GridSpec:
    L: float
    n: int

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * math.pi * sfft.fftfreq(self.n, d=self.dx)


def build_grid(min_half_length: float, dx: float, cell: float, max_tries: int = 10_000) -> GridSpec:
    """Smallest commensurate, FFT-friendly grid with half length >= ``min_half_length``.

    The domain length ``2L`` is an integer multiple of ``cell`` and the point count
    is a fast FFT length with spacing within 1% of ``dx``.
    """
    if dx <= 0 or cell <= 0 or min_half_length <= 0:
        raise ValueError("grid parameters must be positive")
    m = max(1, math.ceil(2.0 * min_half_length / cell - 1e-12))
    for _ in range(max_tries):
        length = m * cell
        lo = math.ceil(length / (dx * (1.0 + DX_SLACK)))
        n = sfft.next_fast_len(max(lo, 8))
        if abs(length / n / dx - 1.0) <= DX_SLACK:
            return GridSpec(0.5 * length, n)
        m += 1
    raise ValueError("no commensurate FFT-friendly grid found")


def _check_commensurate(f: PeriodicFunction, length: float, name: str) -> None:
    for h, a in f.coeffs.items():
        if a == 0 or h == 0:
            continue
        cycles = h * f.fundamental * length / (2.0 * math.pi)
        if abs(cycles - round(cycles)) > 1e-8 * max(1.0, abs(cycles)):
            raise ValueError(f"{name}: harmonic {h} is not periodic on a domain of length {length}")


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridSpec
    dt: float
    epsilon: float
    V: PeriodicFunction
    W: PeriodicFunction
    sigma: PeriodicFunction
    t_end: float
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        for f, name in ((self.V, "V"), (self.W, "W"), (self.sigma, "sigma")):
            if not f.real:
                raise ValueError(f"{name} must be real")
            _check_commensurate(f, 2.0 * self.grid.L, name)


@dataclass
class SimulationState:
    x: np.ndarray
    u: np.ndarray
    t: float = 0.0
    mass: float = field(init=False)

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.shape != self.x.shape:
            raise ValueError("field and grid lengths differ")
        self.mass = _mass(self.u, self.x[1] - self.x[0])

    def copy(self) -> "SimulationState":
        return SimulationState(self.x, self.u.copy(), self.t)


def _mass(u: np.ndarray, dx: float) -> float:
    return float(np.vdot(u, u).real) * dx


class SplitStepSolver:
    """Holds the sampled potentials and the spectral propagators for one config."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.x = config.grid.x
        self.dx = config.grid.dx
        self.xi2 = config.grid.wavenumbers**2
        self.linear = evaluate(config.V, self.x) + config.epsilon * evaluate(config.W, self.x)
        self.sigma = evaluate(config.sigma, self.x)
        self.has_nonlinearity = bool(np.any(self.sigma != 0))
        self._propagators: dict[float, np.ndarray] = {}

    def _kinetic_phase(self, tau: float) -> np.ndarray:
        prop = self._propagators.get(tau)
        if prop is None:
            prop = np.exp(-1j * self.xi2 * tau)
            if len(self._propagators) < 8:
                self._propagators[tau] = prop
        return prop

    def kinetic(self, u: np.ndarray, tau: float) -> np.ndarray:
        """Exact flow of ``i u_t = -u_xx`` over ``tau``."""
        w = self.config.threads
        return sfft.ifft(sfft.fft(u, workers=w) * self._kinetic_phase(tau), workers=w)

    def potential_nonlinear(self, u: np.ndarray, tau: float) -> np.ndarray:
        """Exact flow of ``i u_t = (V + eps W) u + sigma |u|^2 u`` over ``tau``; |u| is invariant."""
        phase = self.linear
        if self.has_nonlinearity:
            phase = phase + self.sigma * (u.real**2 + u.imag**2)
        phase = phase * tau
        return u * (np.cos(phase) - 1j * np.sin(phase))

    def strang(self, u: np.ndarray, tau: float) -> np.ndarray:
        u = self.kinetic(u, 0.5 * tau)
        u = self.potential_nonlinear(u, tau)
        return self.kinetic(u, 0.5 * tau)

    def advance(self, u: np.ndarray, tau: float, steps: int, first_step: int = 0, monitor=None) -> np.ndarray:
        """``steps`` Strang steps with adjacent half kinetic steps merged."""
        if steps <= 0:
            return u
        u = self.kinetic(u, 0.5 * tau)
        for i in range(steps):
            u = self.potential_nonlinear(u, tau)
            u = self.kinetic(u, tau if i < steps - 1 else 0.5 * tau)
            if monitor is not None:
                monitor(first_step + i + 1, u)
        return u


def kinetic_half_step(solver: SplitStepSolver, state: SimulationState, half_dt: float) -> SimulationState:
    return SimulationState(state.x, solver.kinetic(state.u, half_dt), state.t)


def potential_nonlinear_step(solver: SplitStepSolver, state: SimulationState, dt: float) -> SimulationState:
    return SimulationState(state.x, solver.potential_nonlinear(state.u, dt), state.t)


def strang_step(solver: SplitStepSolver, state: SimulationState, dt: float) -> SimulationState:
    return SimulationState(state.x, solver.strang(state.u, dt), state.t + dt)


@dataclass
class Snapshot:
    t: float
    u: np.ndarray


@dataclass
class Trajectory:
    x: np.ndarray
    snapshots: list[Snapshot]
    metadata: dict

    def at(self, t: float) -> np.ndarray:
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s.u
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


class _MassMonitor:
    def __init__(self, mass0: float, dx: float):
        self.dx = dx
        self.mass0 = mass0
        self.last = mass0
        self.max_step_drift = 0.0

    def __call__(self, step: int, u: np.ndarray) -> None:
        m = _mass(u, self.dx)
        if not math.isfinite(m):
            raise SimulationError(f"non-finite field after step {step}", step)
        if self.last > 0:
            self.max_step_drift = max(self.max_step_drift, abs(m - self.last) / self.last)
        self.last = m


def simulate(
    config: SimulationConfig,
    u0: np.ndarray,
    snapshot_times: Sequence[float] | None = None,
    solver: SplitStepSolver | None = None,
) -> Trajectory:
    """Integrate from ``u0`` at t=0, recording snapshots at the requested times.

    Snapshot times are hit exactly; when a time is not a multiple of ``dt`` the
    last step before it is shortened, and this is flagged in the metadata.
    """
    solver = solver or SplitStepSolver(config)
    u = np.asarray(u0, dtype=complex).copy()
    if u.shape != solver.x.shape:
        raise ValueError(f"u0 has shape {u.shape}, grid has {solver.x.shape}")
    if not np.all(np.isfinite(u)):
        raise SimulationError("non-finite initial data", 0)
    times = sorted(set([0.0, *(snapshot_times or ()), config.t_end]))
    if times[0] < 0 or times[-1] > config.t_end + 1e-12:
        raise ValueError("snapshot times must lie in [0, t_end]")
    dt = config.dt
    mass0 = _mass(u, solver.dx)
    monitor = _MassMonitor(mass0, solver.dx)
    snaps = [Snapshot(0.0, u.copy())]
    t, step, adjusted = 0.0, 0, []
    for target in times[1:]:
        span = target - t
        full = int(math.floor(span / dt + 1e-9))
        rest = span - full * dt
        if rest < 1e-9 * dt:
            rest = 0.0
        u = solver.advance(u, dt, full, step, monitor)
        step += full
        if rest > 0.0:
            u = solver.strang(u, rest)
            step += 1
            monitor(step, u)
            adjusted.append((target, rest))
        t = target
        snaps.append(Snapshot(target, u.copy()))
    mass_end = _mass(u, solver.dx)
    meta = {
        "L": config.grid.L,
        "n": config.grid.n,
        "dx": config.grid.dx,
        "dt": dt,
        "epsilon": config.epsilon,
        "t_end": config.t_end,
        "steps": step,
        "dt_adjusted": bool(adjusted),
        "adjusted_steps": ";".join(f"{a:.17g}@{b:.17g}" for a, b in adjusted) or "none",
        "mass_initial": mass0,
        "mass_final": mass_end,
        "mass_drift": abs(mass_end - mass0) / mass0 if mass0 > 0 else 0.0,
        "max_step_mass_drift": monitor.max_step_drift,
        "boundary_tail": float(max(abs(u[0]), abs(u[-1]))) if u.size else 0.0,
    }
    return Trajectory(solver.x, snaps, meta)


def time_reversal_error(solver: SplitStepSolver, u0: np.ndarray, dt: float, steps: int) -> float:
    """Step forward, conjugate, step forward again, conjugate; sup distance to ``u0``."""
    u = solver.advance(np.asarray(u0, dtype=complex), dt, steps)
    u = solver.advance(np.conj(u), dt, steps)
    return float(np.max(np.abs(np.conj(u) - u0)))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_snapshot_csv(stream: TextIO, x: np.ndarray, u: np.ndarray, header: Iterable[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write("x,re_u,im_u,abs_u\n")
    a = np.abs(u)
    for xi, ui, ai in zip(x.tolist(), u.tolist(), a.tolist()):
        stream.write(f"{_fmt(xi)},{_fmt(ui.real)},{_fmt(ui.imag)},{_fmt(ai)}\n")


def write_metadata(stream: TextIO, meta: dict, header: Iterable[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    for k, v in meta.items():
        if isinstance(v, float):
            v = _fmt(v)
        stream.write(f"{k}={v}\n")
