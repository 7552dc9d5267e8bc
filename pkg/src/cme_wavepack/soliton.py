"""Explicit two-parameter gap soliton family of the CME with beta = gamma = 0."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cme import CmeCoefficients, EnvelopePair, cme_residual

__all__ = [
    "SolitonParams",
    "SolitonCheck",
    "gap_soliton",
    "decay_rate",
    "default_x_grid",
    "verify_soliton",
]


@dataclass(frozen=True)
class SolitonParams:
    v: float  # velocity in units of c_g
    delta: float  # detuning in [0, pi]
    coeffs: CmeCoefficients

    def __post_init__(self) -> None:
        if not abs(self.v) < 1.0:
            raise ValueError(f"soliton velocity must satisfy |v| < 1, got {self.v}")
        if not (0.0 <= self.delta <= math.pi):
            raise ValueError(f"detuning must lie in [0, pi], got {self.delta}")
        c = self.coeffs
        if c.kappa * c.alpha == 0.0:
            raise ValueError("soliton family needs kappa * alpha != 0")
        if c.c_g == 0.0:
            raise ValueError("soliton family needs c_g != 0")
        if c.beta != 0 or c.gamma != 0:
            raise ValueError("explicit soliton family requires beta = gamma = 0")

    @property
    def nu(self) -> float:
        return math.copysign(1.0, self.coeffs.kappa * self.coeffs.alpha)

    @property
    def mu(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.v**2)


def decay_rate(params: SolitonParams) -> float:
    """Exponential decay rate of ``|A_pm|`` in X."""
    c = params.coeffs
    return params.mu * abs(c.kappa * math.sin(params.delta)) / abs(c.c_g)


def _sech(z: np.ndarray) -> np.ndarray:
    # 2 / (e^z + e^-z) without overflow for large |Re z|
    z = np.asarray(z, dtype=complex)
    flip = z.real < 0
    zz = np.where(flip, -z, z)
    e = np.exp(-zz)
    return 2.0 * e / (1.0 + e * e)


def _phase_eta(theta: np.ndarray, nu: float, delta: float, v: float) -> np.ndarray:
    """``exp(i eta)`` continued along theta from the principal branch at theta -> -inf.

    With ``w = e^{2 theta} + e^{-i nu delta}`` the base is ``-w / conj(w)``, so
    ``eta = p (pi + 2 arg w)`` with ``arg w`` continuous in theta.
    """
    p = 2.0 * v / (3.0 - v * v)
    big = theta > 0
    # scale by e^{-2 theta} on the right half to avoid overflow; arg is unchanged
    damp = np.exp(-2.0 * np.abs(theta))
    re = np.where(big, 1.0 + math.cos(delta) * damp, damp + math.cos(delta))
    im = np.where(big, -nu * math.sin(delta) * damp, -nu * math.sin(delta))
    arg_w = np.arctan2(im, re)
    return np.exp(1j * p * (math.pi + 2.0 * arg_w))


def gap_soliton(params: SolitonParams, X, T=0.0) -> EnvelopePair:
    X = np.atleast_1d(np.asarray(X, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    c = params.coeffs
    v, delta, nu, mu = params.v, params.delta, params.nu, params.mu
    a = math.sqrt(2.0 * (1.0 - v * v) / (3.0 - v * v))
    Delta = ((1.0 - v) / (1.0 + v)) ** 0.25
    amp = a * math.sqrt(abs(c.kappa) / (2.0 * abs(c.alpha))) * math.sin(delta)
    XX, TT = np.meshgrid(X, T)
    if delta == 0.0 or delta == math.pi:
        # degenerate endpoints: sin(delta) = 0 exactly, but sin(math.pi) is not 0 in floats
        # and would multiply a sech pole
        zero = np.zeros(XX.shape, dtype=complex)
        return EnvelopePair(X, T, zero, zero.copy())
    theta = mu * c.kappa * math.sin(delta) * (XX / c.c_g - v * TT)
    zeta = mu * c.kappa * math.cos(delta) * (v * XX / c.c_g - TT)
    common = amp * _phase_eta(theta, nu, delta, v) * np.exp(1j * nu * zeta)
    if c.kappa_s != 0.0:
        common = common * np.exp(1j * c.kappa_s * TT)
    a_plus = nu * common / Delta * _sech(theta - 0.5j * nu * delta)
    a_minus = -common * Delta * _sech(theta + 0.5j * nu * delta)
    return EnvelopePair(X, T, a_plus, a_minus)


def default_x_grid(params: SolitonParams, points_per_width: int = 40, widths: float = 20.0):
    """Uniform X grid covering +/- ``widths`` decay lengths around the soliton centre."""
    r = decay_rate(params)
    if r == 0.0:
        raise ValueError("soliton has zero decay rate (delta = 0 or pi)")
    h = 1.0 / (r * points_per_width)
    n = int(math.ceil(widths / (r * h)))
    return h * np.arange(-n, n + 1)


@dataclass(frozen=True)
class SolitonCheck:
    sup_residual: float  # at the requested resolution
    refined_residual: float  # at twice the resolution
    peak: float
    h: float
    tolerance: float = 1e-6  # relative to peak

    @property
    def relative(self) -> float:
        return self.sup_residual / self.peak if self.peak else self.sup_residual

    @property
    def order(self) -> float:
        """Observed order of the residual decrease under halving of the steps."""
        if self.refined_residual == 0.0 or self.sup_residual == 0.0:
            return math.inf
        return math.log2(self.sup_residual / self.refined_residual)

    @property
    def passed(self) -> bool:
        return self.relative < self.tolerance and self.order >= 2.0


def _residual_on_grid(params: SolitonParams, points_per_width: int, widths: float, n_time: int):
    X = default_x_grid(params, points_per_width, widths)
    h = X[1] - X[0]
    # time step matched to the X step along characteristics
    ht = h / abs(params.coeffs.c_g)
    T = ht * (np.arange(n_time) - n_time // 2)
    env = gap_soliton(params, X, T)
    return cme_residual(env, params.coeffs).sup, env.peak(), h


def verify_soliton(
    params: SolitonParams,
    points_per_width: int = 40,
    widths: float = 12.0,
    n_time: int = 9,
    tolerance: float = 1e-6,
) -> SolitonCheck:
    """CME residual of the explicit soliton with 4th-order differences, plus one refinement.

    A sech-width is the decay length ``1 / decay_rate``.
    """
    sup, peak, h = _residual_on_grid(params, points_per_width, widths, n_time)
    fine, _, _ = _residual_on_grid(params, 2 * points_per_width, widths, n_time)
    return SolitonCheck(sup, fine, peak, h, tolerance)
