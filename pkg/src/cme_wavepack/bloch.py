"""Bloch bands of ``-(d/dx + ik)^2 p + V p = omega p`` in a plane-wave basis.

Wavenumbers handed around as :class:`~fractions.Fraction` are measured in units
of the reciprocal lattice ``g = 2*pi/P``; physical wavenumbers are plain floats.
Eigenfunctions are stored as plane-wave coefficient vectors ``c_m`` of
``exp(i g m x)``, ``m = -M..M``, normalised so that ``<p, p>_P = P * sum|c_m|^2 = 1``.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence, TextIO

import numpy as np

from .potentials import PeriodicFunction, evaluate

__all__ = [
    "BlochError",
    "AmbiguousMultiplicityError",
    "GapConditionError",
    "BlochProblem",
    "BlochMode",
    "BlochBandSet",
    "CarrierCase",
    "CarrierPair",
    "assemble_bloch_matrix",
    "solve_at",
    "solve_bands",
    "default_k_grid",
    "select_carrier_pair",
    "group_velocity",
    "group_velocity_fd",
    "fix_phases",
    "periodic_grid",
    "inner",
    "quadrature_points",
    "write_bands_csv",
    "write_mode_csv",
]


class BlochError(RuntimeError):
    pass


class AmbiguousMultiplicityError(BlochError):
    def __init__(self, message: str, gap_below: float, gap_above: float):
        super().__init__(f"{message} (gap below={gap_below:.3e}, gap above={gap_above:.3e})")
        self.gap_below = gap_below
        self.gap_above = gap_above


class GapConditionError(BlochError):
    pass


def periodic_grid(period: float, n: int) -> np.ndarray:
    return np.arange(n) * (period / n)


def inner(f: np.ndarray, g: np.ndarray, period: float) -> complex:
    """Trapezoidal ``<f, g>_P = int_0^P f conj(g) dx`` on a uniform periodic grid."""
    return complex(np.sum(f * np.conj(g)) * (period / f.shape[-1]))


def quadrature_points(cutoff: int, minimum: int = 2048) -> int:
    # quartic products of modes carry harmonics up to 4M
    n = max(minimum, 8 * cutoff + 1)
    return 1 << (n - 1).bit_length()


@dataclass(frozen=True)
class BlochProblem:
    potential: PeriodicFunction
    period: float = 2 * math.pi
    cutoff: int = 64

    def __post_init__(self) -> None:
        if self.cutoff < 8:
            raise ValueError(f"plane-wave cutoff must be >= 8, got {self.cutoff}")
        if not self.potential.real:
            raise ValueError("Bloch problem requires a real potential")
        if self.period <= 0:
            raise ValueError("period must be positive")
        self.lattice_coefficients  # validates commensurability

    @property
    def g(self) -> float:
        return 2 * math.pi / self.period

    @property
    def size(self) -> int:
        return 2 * self.cutoff + 1

    @property
    def m(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)

    @property
    def lattice_coefficients(self) -> dict[int, complex]:
        """Fourier coefficients of V indexed by reciprocal-lattice vector ``j`` (``j * g``)."""
        out: dict[int, complex] = {}
        g = self.g
        for n, a in self.potential.coeffs.items():
            j = n * self.potential.fundamental / g
            jr = round(j)
            if abs(j - jr) > 1e-9 * max(1.0, abs(j)):
                raise ValueError(
                    f"potential harmonic {n} (wavenumber {n * self.potential.fundamental}) "
                    f"is not commensurate with period {self.period}"
                )
            out[jr] = out.get(jr, 0.0) + a
        return out

    def in_zone(self, k: float) -> bool:
        return abs(k) <= 0.5 * self.g * (1 + 1e-12)

    def velocity_diagonal(self, k: float) -> np.ndarray:
        """Diagonal of ``dL/dk = 2(k - i d/dx)`` in the plane-wave basis."""
        return 2.0 * (k + self.g * self.m)

    def with_period_multiple(self, n: int) -> "BlochProblem":
        """Same potential on an ``n``-fold supercell, cutoff scaled to keep resolution."""
        return BlochProblem(self.potential, self.period * n, self.cutoff * n)


def assemble_bloch_matrix(problem: BlochProblem, k: float) -> np.ndarray:
    """Hermitian plane-wave matrix of the Bloch operator at wavenumber ``k``."""
    if not problem.in_zone(k):
        raise ValueError(f"k={k} outside the closed Brillouin zone |k| <= {0.5 * problem.g}")
    M = problem.cutoff
    size = problem.size
    vhat = np.zeros(4 * M + 1, dtype=complex)
    for j, a in problem.lattice_coefficients.items():
        if abs(j) <= 2 * M:
            vhat[j + 2 * M] += a
    m = problem.m
    diff = m[:, None] - m[None, :]
    T = vhat[diff + 2 * M]
    H = np.triu(T, 1)
    H = H + H.conj().T
    H[np.diag_indices(size)] = (k + problem.g * m) ** 2 + vhat[2 * M].real
    return H


def solve_at(problem: BlochProblem, k: float, n_bands: int | None = None):
    """Size-ordered eigenvalues and unit eigenvectors (columns) at one ``k``."""
    H = assemble_bloch_matrix(problem, k)
    try:
        w, v = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(H)
        raise BlochError(f"eigensolver failed at k={k} (condition number {cond:.3e})") from exc
    if n_bands is not None:
        w, v = w[:n_bands], v[:, :n_bands]
    return w, v


@dataclass(frozen=True)
class BlochMode:
    """A normalised Bloch eigenfunction ``p(x)`` with its wavenumber ``k``."""

    coeffs: np.ndarray
    k: float
    period: float

    @property
    def g(self) -> float:
        return 2 * math.pi / self.period

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def m(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)

    def samples(self, n: int) -> np.ndarray:
        """``p`` on ``periodic_grid(period, n)``."""
        if n < self.coeffs.shape[0]:
            raise ValueError("too few sample points for the plane-wave cutoff")
        buf = np.zeros(n, dtype=complex)
        buf[self.m % n] = self.coeffs
        return np.fft.ifft(buf) * n

    def derivative_samples(self, n: int) -> np.ndarray:
        buf = np.zeros(n, dtype=complex)
        buf[self.m % n] = 1j * self.g * self.m * self.coeffs
        return np.fft.ifft(buf) * n

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._sum(x, 0.0)

    def bloch_wave(self, x) -> np.ndarray:
        """``p(x) exp(i k x)`` at arbitrary points."""
        x = np.asarray(x, dtype=float)
        return self._sum(x, self.k)

    def _sum(self, x: np.ndarray, shift: float) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        c = self.coeffs
        keep = np.abs(c) > 1e-17 * np.max(np.abs(c))
        for mm, cm in zip(self.m[keep], c[keep]):
            out += cm * np.exp(1j * (shift + self.g * mm) * x)
        return out

    def norm2(self) -> float:
        return float(self.period * np.sum(np.abs(self.coeffs) ** 2))

    def inner(self, other: "BlochMode") -> complex:
        return complex(self.period * np.vdot(other.coeffs, self.coeffs))

    def scaled(self, factor: complex) -> "BlochMode":
        return replace(self, coeffs=self.coeffs * factor)


@dataclass
class BlochBandSet:
    problem: BlochProblem
    k_grid: np.ndarray
    eigenvalues: np.ndarray  # (n_k, n_bands)
    eigenvectors: np.ndarray  # (n_k, size, n_bands), unit columns

    @property
    def n_bands(self) -> int:
        return self.eigenvalues.shape[1]

    def band(self, n: int) -> np.ndarray:
        """Band ``n`` (1-based, size ordering) over the k grid."""
        return self.eigenvalues[:, n - 1]

    def mode(self, ik: int, n: int) -> BlochMode:
        vec = self.eigenvectors[ik, :, n - 1] / math.sqrt(self.problem.period)
        return BlochMode(vec, float(self.k_grid[ik]), self.problem.period)


def default_k_grid(
    problem: BlochProblem,
    n: int = 201,
    refine_near: Sequence[float] = (),
    refine_width: float = 0.02,
    refine_factor: int = 10,
) -> np.ndarray:
    """``n`` uniform points on ``(-g/2, g/2]``, densified around ``refine_near``.

    ``refine_near`` and ``refine_width`` are physical wavenumbers.
    """
    half = 0.5 * problem.g
    grid = np.linspace(-half, half, n + 1)[1:]
    extra = []
    spacing = problem.g / n / refine_factor
    for k0 in refine_near:
        lo = max(-half + spacing, k0 - refine_width)
        hi = min(half, k0 + refine_width)
        extra.append(np.arange(lo, hi + 0.5 * spacing, spacing))
    if extra:
        grid = np.unique(np.concatenate([grid, *extra]))
    return grid


def solve_bands(
    problem: BlochProblem,
    n_bands: int,
    k_grid: Sequence[float] | None = None,
    threads: int = 1,
) -> BlochBandSet:
    """Eigenvalues and eigenvectors on a k grid; independent problems per k."""
    if n_bands < 1 or n_bands > problem.size - 4:
        raise ValueError(
            f"n_bands={n_bands} must lie in [1, {problem.size - 4}] for cutoff {problem.cutoff}"
        )
    ks = np.asarray(default_k_grid(problem) if k_grid is None else k_grid, dtype=float)
    for k in ks:
        if not problem.in_zone(k):
            raise ValueError(f"k={k} outside the Brillouin zone")

    def work(k):
        return solve_at(problem, float(k), n_bands)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, ks))
    else:
        results = [work(k) for k in ks]
    w = np.stack([r[0] for r in results])
    v = np.stack([r[1] for r in results])
    return BlochBandSet(problem, ks, w, v)


# ---------------------------------------------------------------- carriers


class CarrierCase(str, enum.Enum):
    SIMPLE_PAIR = "a"
    DOUBLE_POINT = "b"


@dataclass(frozen=True)
class CarrierPair:
    case: CarrierCase
    k_plus: Fraction  # units of g
    k_minus: Fraction
    omega0: float
    band_index: int  # n0 (case a) or n_* (case b), 1-based size ordering
    p_plus: BlochMode
    p_minus: BlochMode
    c_g: float
    problem: BlochProblem = field(repr=False)
    phases_fixed: bool = False

    @property
    def period(self) -> float:
        return self.problem.period

    @property
    def g(self) -> float:
        return self.problem.g

    @property
    def k_plus_phys(self) -> float:
        return float(self.k_plus) * self.g

    @property
    def k_minus_phys(self) -> float:
        return float(self.k_minus) * self.g

    @property
    def reduction_order(self) -> int:
        """``N`` with ``N k_pm in Z`` (denominator of ``k_+``)."""
        return self.k_plus.denominator


def _canonical_sign(c: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(c)))
    lead = c[i]
    if lead.real < 0 or (lead.real == 0 and lead.imag < 0):
        return -c
    return c


def _partner_coeffs(c: np.ndarray, k_plus: Fraction) -> np.ndarray:
    """Coefficients of the conjugate partner ``p_-`` of ``p_+``.

    ``p_- = conj(p_+)`` except at the zone edge double point, where
    ``p_- = conj(p_+) exp(-i g x)``.
    """
    rev = np.conj(c[::-1])
    if k_plus % 1 == Fraction(1, 2):
        out = np.zeros_like(c)
        out[:-1] = rev[1:]
        return out
    return rev


def _wrap_zone(k: float, g: float) -> float:
    half = 0.5 * g
    while k > half * (1 + 1e-12):
        k -= g
    while k <= -half * (1 + 1e-12):
        k += g
    return k


def select_carrier_pair(
    bands: BlochBandSet | BlochProblem,
    k0: Fraction,
    band_hint: int | None = None,
    omega_hint: float | None = None,
    gap_tol: float = 1e-6,
    orientation: int = 1,
) -> CarrierPair:
    """Pick the two carrier Bloch modes at ``k0`` (units of ``g``).

    ``k0`` in ``(0, 1/2)`` gives case (a), ``k0`` in ``{0, 1/2}`` case (b). In case (b)
    ``band_hint`` is the lower index ``n_*`` of the degenerate pair; ``orientation``
    selects whether ``p_+`` is the branch with positive (+1) or negative (-1) slope.
    """
    problem = bands.problem if isinstance(bands, BlochBandSet) else bands
    k0 = Fraction(k0)
    if band_hint is None and omega_hint is None:
        raise ValueError("need band_hint or omega_hint")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    g = problem.g
    k_phys = float(k0) * g
    w, v = solve_at(problem, k_phys)
    scale = max(1.0, abs(float(np.median(np.abs(w[:8])))))
    simple_tol = math.sqrt(gap_tol)

    def gaps(i: int) -> tuple[float, float]:
        below = (w[i] - w[i - 1]) / max(1.0, abs(w[i])) if i > 0 else math.inf
        above = (w[i + 1] - w[i]) / max(1.0, abs(w[i])) if i + 1 < len(w) else math.inf
        return below, above

    if k0 in (Fraction(0), Fraction(1, 2)):
        if band_hint is not None:
            lo = band_hint - 1
        else:
            mids = 0.5 * (w[:-1] + w[1:])
            spread = np.abs(w[1:] - w[:-1]) / max(1.0, scale)
            score = np.abs(mids - omega_hint) + 1e3 * np.maximum(spread - gap_tol, 0.0)
            lo = int(np.argmin(score))
        if lo < 0 or lo + 1 >= len(w) - 4:
            raise ValueError(f"band index {lo + 1} out of the resolved range")
        split = (w[lo + 1] - w[lo]) / max(1.0, abs(w[lo]))
        if split > gap_tol:
            below, above = gaps(lo)
            if split > simple_tol:
                raise BlochError(
                    f"eigenvalue {w[lo]:.12g} at k0={k0} is simple (relative gap {split:.3e}); "
                    "a simple eigenvalue at k in {0, 1/2} has zero group velocity"
                )
            raise AmbiguousMultiplicityError(
                f"cannot classify multiplicity at k0={k0}, bands {lo + 1},{lo + 2}", below, split
            )
        U = v[:, lo : lo + 2]
        D = U.conj().T @ (problem.velocity_diagonal(k_phys)[:, None] * U)
        slopes, rot = np.linalg.eigh(0.5 * (D + D.conj().T))
        pick = 1 if orientation == 1 else 0
        vec = U @ rot[:, pick]
        c_plus = _canonical_sign(vec / math.sqrt(problem.period))
        omega0 = float(0.5 * (w[lo] + w[lo + 1]))
        case = CarrierCase.DOUBLE_POINT
        k_plus = k_minus = k0
        band_index = lo + 1
    else:
        if not (Fraction(0) < k0 < Fraction(1, 2)):
            raise ValueError(f"carrier wavenumber k0={k0} must lie in (0, 1/2) or {{0, 1/2}}")
        if band_hint is not None:
            i = band_hint - 1
        else:
            i = int(np.argmin(np.abs(w - omega_hint)))
        if i < 0 or i >= len(w) - 4:
            raise ValueError(f"band index {i + 1} out of the resolved range")
        below, above = gaps(i)
        smallest = min(below, above)
        if smallest <= gap_tol:
            raise BlochError(f"eigenvalue at k0={k0}, band {i + 1} is degenerate; case (a) needs a simple one")
        if smallest < simple_tol:
            raise AmbiguousMultiplicityError(f"cannot classify multiplicity at k0={k0}, band {i + 1}", below, above)
        c_plus = _canonical_sign(v[:, i] / math.sqrt(problem.period))
        omega0 = float(w[i])
        case = CarrierCase.SIMPLE_PAIR
        k_plus, k_minus = k0, -k0
        band_index = i + 1

    p_plus = BlochMode(c_plus, float(k_plus) * g, problem.period)
    p_minus = BlochMode(_partner_coeffs(c_plus, k_plus), float(k_minus) * g, problem.period)
    pair = CarrierPair(case, k_plus, k_minus, omega0, band_index, p_plus, p_minus, 0.0, problem)
    return replace(pair, c_g=group_velocity(pair))


def group_velocity(pair: CarrierPair) -> float:
    """``c_g = 2 <k_+ p_+ - i p_+', p_+>_P`` evaluated on plane-wave coefficients."""
    p = pair.p_plus
    weights = np.abs(p.coeffs) ** 2
    return float(2.0 * p.period * np.sum((pair.k_plus_phys + p.g * p.m) * weights))


def group_velocity_fd(pair: CarrierPair, h: float | None = None) -> float:
    """Centered finite difference of the carrier's (relabelled) band at ``k_+``."""
    problem = pair.problem
    g = problem.g
    if h is None:
        h = 1e-4 * g
    k = pair.k_plus_phys
    kp = _wrap_zone(k + h, g)
    km = _wrap_zone(k - h, g)
    wp, _ = solve_at(problem, kp)
    wm, _ = solve_at(problem, km)
    n = pair.band_index - 1
    if pair.case is CarrierCase.SIMPLE_PAIR:
        return float((wp[n] - wm[n]) / (2 * h))
    if pair.c_g >= 0:
        return float((wp[n + 1] - wm[n]) / (2 * h))
    return float((wp[n] - wm[n + 1]) / (2 * h))


def fix_phases(pair: CarrierPair, w_split, n_quad: int | None = None) -> CarrierPair:
    """Rotate ``p_+`` so that the coupling coefficient kappa is real and non-negative.

    ``w_split`` is a W-splitting exposing ``w1`` and ``w2_plus``; the coupling
    function is ``W2_+`` in case (a) and ``W1`` in case (b).
    """
    coupling = w_split.w2_plus if pair.case is CarrierCase.SIMPLE_PAIR else w_split.w1
    n = n_quad or quadrature_points(pair.problem.cutoff)
    x = periodic_grid(pair.period, n)
    wx = evaluate(coupling, x)
    pp = pair.p_plus.samples(n)
    pm = pair.p_minus.samples(n)
    z = inner(wx * pp, pm, pair.period)
    if abs(z) < 1e-12:
        raise GapConditionError(
            f"no coupling: |<W p_+, p_->| = {abs(z):.3e}; gap condition fails"
        )
    # kappa = -z rotates as exp(2 i phi)
    phi = 0.5 * (math.pi - math.atan2(z.imag, z.real))
    c_plus = _canonical_sign(pair.p_plus.coeffs * np.exp(1j * phi))
    p_plus = replace(pair.p_plus, coeffs=c_plus)
    p_minus = replace(pair.p_minus, coeffs=_partner_coeffs(c_plus, pair.k_plus))
    return replace(pair, p_plus=p_plus, p_minus=p_minus, phases_fixed=True)


# ---------------------------------------------------------------- export


def write_bands_csv(bands: BlochBandSet, stream: TextIO, header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["k"] + [f"omega_{n + 1}" for n in range(bands.n_bands)])
    for ik, k in enumerate(bands.k_grid):
        writer.writerow([f"{k:.17g}"] + [f"{w:.17g}" for w in bands.eigenvalues[ik]])


def write_mode_csv(mode: BlochMode, stream: TextIO, n: int = 512, header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["x", "re_p", "im_p"])
    x = periodic_grid(mode.period, n)
    p = mode.samples(n)
    for xi, pi in zip(x, p):
        writer.writerow([f"{xi:.17g}", f"{pi.real:.17g}", f"{pi.imag:.17g}"])
