"""Periodic coefficient functions V, W and sigma as truncated Fourier series.

A :class:`PeriodicFunction` stores harmonics ``a_n`` of ``exp(i n w x)`` where the
physical wavenumber is ``w = wavenumber * scale``.  ``wavenumber`` is kept as an
exact :class:`fractions.Fraction` whenever possible so that membership tests such
as ``n * k_W in Z`` are decided exactly; ``scale`` is the float reciprocal-lattice
unit (``1`` for 2*pi-periodic structures, ``2*pi/P`` for a P-periodic one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Union

import numpy as np

Rational = Fraction
Wavenumber = Union[Fraction, float]

__all__ = [
    "Rational",
    "PeriodicFunction",
    "EllipticParams",
    "evaluate",
    "jacobi_sn",
    "ellipk",
    "fourier_coefficients_from_samples",
    "parse_rational",
    "constant",
    "cosine",
    "cos_shifted",
    "cos_series",
    "sn_squared",
    "from_harmonics",
]

# relative tolerance for a_{-n} = conj(a_n) in real functions
_REAL_TOL = 1e-12


def parse_rational(text: str | int | Fraction) -> Fraction:
    """Parse ``"p/q"``, an integer or a terminating decimal into a reduced Fraction."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed rational {text!r}") from exc


@dataclass(frozen=True)
class PeriodicFunction:
    coeffs: Mapping[int, complex] = field(default_factory=dict)
    wavenumber: Wavenumber = Fraction(1)
    scale: float = 1.0
    real: bool = True
    # False when the series is a truncation of an infinite one (e.g. sampled sn^2)
    exact: bool = True

    def __post_init__(self) -> None:
        coeffs = {int(n): complex(a) for n, a in dict(self.coeffs).items()}
        object.__setattr__(self, "coeffs", coeffs)
        w = self.wavenumber
        if isinstance(w, int):
            w = Fraction(w)
        elif not isinstance(w, Fraction):
            w = float(w)
        object.__setattr__(self, "wavenumber", w)
        if w == 0 and any(n != 0 for n in coeffs):
            raise ValueError("zero base wavenumber with non-constant harmonics")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.real:
            bound = _REAL_TOL * max(1.0, sum(abs(a) for a in coeffs.values()))
            for n, a in coeffs.items():
                partner = coeffs.get(-n, 0.0)
                if abs(partner - a.conjugate()) > bound:
                    raise ValueError(
                        f"real function requires a_(-n) = conj(a_n); violated at n={n}"
                    )

    @property
    def is_rational(self) -> bool:
        return isinstance(self.wavenumber, Fraction)

    @property
    def fundamental(self) -> float:
        """Physical base wavenumber."""
        return float(self.wavenumber) * self.scale

    @property
    def period(self) -> float:
        if self.fundamental == 0:
            return math.inf
        return 2 * math.pi / self.fundamental

    def frequency(self, n: int) -> float:
        return n * self.fundamental

    def norm1(self) -> float:
        return float(sum(abs(a) for a in self.coeffs.values()))

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def mean(self) -> complex:
        return self.coeffs.get(0, 0.0)

    def conj(self) -> "PeriodicFunction":
        return PeriodicFunction(
            {-n: a.conjugate() for n, a in self.coeffs.items()},
            self.wavenumber,
            self.scale,
            self.real,
            self.exact,
        )

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(a) <= tol for a in self.coeffs.values())


def evaluate(f: PeriodicFunction, x) -> np.ndarray:
    """Sum ``a_n exp(i n w x)`` at each point of ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=complex)
    w = f.fundamental
    for n, a in f.coeffs.items():
        if a == 0:
            continue
        if n == 0:
            out += a
        else:
            out += a * np.exp(1j * (n * w) * x)
    if f.real:
        return out.real.copy()
    return out


@dataclass(frozen=True)
class EllipticParams:
    """Jacobi parameter ``m`` (not the modulus k; ``m = k**2``)."""

    m: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.m < 1.0):
            raise ValueError(f"elliptic parameter must satisfy 0 <= m < 1, got {self.m}")


def _agm_sequence(m: float, tol: float = 1e-16):
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    a_seq, c_seq = [a], [c]
    while abs(c) > tol * a and len(a_seq) < 64:
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    return a_seq, c_seq


def ellipk(m: float) -> float:
    """Complete elliptic integral of the first kind K(m) via the AGM."""
    EllipticParams(m)
    a_seq, _ = _agm_sequence(m)
    return math.pi / (2.0 * a_seq[-1])


def jacobi_sn(x, params: EllipticParams | float):
    """Jacobi elliptic sine sn(x | m) by the descending Landen (AGM) scheme."""
    m = params.m if isinstance(params, EllipticParams) else EllipticParams(float(params)).m
    x_arr = np.asarray(x, dtype=float)
    a_seq, c_seq = _agm_sequence(m)
    n_last = len(a_seq) - 1
    phi = (2.0**n_last) * a_seq[-1] * x_arr
    for n in range(n_last, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c_seq[n] / a_seq[n] * np.sin(phi)))
    out = np.sin(phi)
    if np.ndim(x) == 0:
        return float(out)
    return out


def fourier_coefficients_from_samples(
    samples,
    n_max: int,
    wavenumber: Wavenumber = Fraction(1),
    scale: float = 1.0,
    real: bool | None = None,
) -> PeriodicFunction:
    """Discrete Fourier coefficients of samples taken on ``[0, period)``.

    The samples must be uniform over exactly one period of the function and
    exclude the right endpoint.
    """
    samples = np.asarray(samples)
    n_samples = samples.shape[0]
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if n_samples < 2 * n_max + 1:
        raise ValueError(
            f"need at least {2 * n_max + 1} samples for n_max={n_max}, got {n_samples}"
        )
    if real is None:
        real = bool(np.isrealobj(samples) or np.max(np.abs(np.imag(samples)), initial=0.0) == 0.0)
    spectrum = np.fft.fft(samples) / n_samples
    coeffs = {n: complex(spectrum[n % n_samples]) for n in range(-n_max, n_max + 1)}
    if real:
        coeffs = {n: 0.5 * (coeffs[n] + coeffs[-n].conjugate()) for n in coeffs}
    return PeriodicFunction(coeffs, wavenumber, scale, real=real, exact=False)


# ---------------------------------------------------------------- builtins


def constant(value: float) -> PeriodicFunction:
    return PeriodicFunction({0: value}, Fraction(1), 1.0, real=True)


def cosine(amplitude: float, wavenumber: Wavenumber = Fraction(1), scale: float = 1.0) -> PeriodicFunction:
    """``amplitude * cos(wavenumber * scale * x)``."""
    half = 0.5 * amplitude
    return PeriodicFunction({1: half, -1: half}, wavenumber, scale, real=True)


def cos_shifted(amplitude: float = 2.0) -> PeriodicFunction:
    """``amplitude * (cos(x) + 1)``, the 2*pi-periodic cosine lattice."""
    half = 0.5 * amplitude
    return PeriodicFunction({0: amplitude, 1: half, -1: half}, Fraction(1), 1.0, real=True)


def cos_series(
    terms: Iterable[tuple[int, float]], wavenumber: Wavenumber = Fraction(1), scale: float = 1.0
) -> PeriodicFunction:
    """``sum_j b_j cos(n_j * wavenumber * scale * x)`` for ``terms = [(n_j, b_j), ...]``."""
    coeffs: dict[int, complex] = {}
    for n, b in terms:
        n = int(n)
        if n == 0:
            coeffs[0] = coeffs.get(0, 0.0) + b
            continue
        coeffs[n] = coeffs.get(n, 0.0) + 0.5 * b
        coeffs[-n] = coeffs.get(-n, 0.0) + 0.5 * b
    return PeriodicFunction(coeffs, wavenumber, scale, real=True)


def from_harmonics(
    harmonics: Iterable[tuple[int, float, float]],
    wavenumber: Wavenumber = Fraction(1),
    scale: float = 1.0,
    real: bool | None = None,
) -> PeriodicFunction:
    """Build from explicit ``(n, re, im)`` triples."""
    coeffs: dict[int, complex] = {}
    for n, re, im in harmonics:
        coeffs[int(n)] = coeffs.get(int(n), 0.0) + complex(re, im)
    if real is None:
        real = all(
            abs(coeffs.get(-n, 0.0) - a.conjugate()) <= _REAL_TOL * max(1.0, abs(a))
            for n, a in coeffs.items()
        )
    return PeriodicFunction(coeffs, wavenumber, scale, real=real)


def sn_squared(m: float = 0.5, n_max: int = 32, n_samples: int | None = None) -> PeriodicFunction:
    """``sn(x | m)**2`` on its fundamental period ``2 K(m)``."""
    params = EllipticParams(m)
    period = 2.0 * ellipk(params.m)
    if n_samples is None:
        n_samples = max(256, 8 * n_max)
    x = np.arange(n_samples) * (period / n_samples)
    samples = jacobi_sn(x, params) ** 2
    return fourier_coefficients_from_samples(
        samples, n_max, wavenumber=Fraction(1), scale=2.0 * math.pi / period, real=True
    )
