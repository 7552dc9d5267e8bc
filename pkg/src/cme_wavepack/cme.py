"""W-splitting, gap conditions, coupled-mode coefficients and CME residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Union

import numpy as np

from .bloch import (
    BlochMode,
    CarrierCase,
    CarrierPair,
    inner,
    periodic_grid,
    quadrature_points,
)
from .potentials import PeriodicFunction, evaluate

__all__ = [
    "CoefficientConsistencyError",
    "WSplitting",
    "QSplitting",
    "GapReport",
    "CmeCoefficients",
    "EnvelopePair",
    "CmeResidual",
    "split_w",
    "split_w_q",
    "check_gap_conditions",
    "compute_coefficients",
    "q_modes",
    "rational_reduction",
    "cme_residual",
]

Number = Union[Fraction, float]

# integrality tolerance on the irrational (float) path
INTEGRALITY_TOL = 1e-9
# redundant coefficient expressions must agree to this
CONSISTENCY_TOL = 1e-6


class CoefficientConsistencyError(RuntimeError):
    pass


def _is_integer(x: Number) -> bool:
    if isinstance(x, Fraction):
        return x.denominator == 1
    return abs(x - round(x)) < INTEGRALITY_TOL


def _as_int(x: Number) -> int:
    return int(x) if isinstance(x, Fraction) else int(round(x))


def _relative_wavenumber(W: PeriodicFunction, g: float) -> Number:
    """Base wavenumber of ``W`` in units of the lattice ``g``; exact when possible."""
    if W.is_rational and abs(W.scale - g) <= 1e-12 * g:
        return W.wavenumber
    ratio = W.fundamental / g
    if W.is_rational:
        # e.g. W on a 2*pi lattice and g = 1/N for a Q-cell: scale ratio is rational
        inv = g / W.scale
        approx = Fraction(inv).limit_denominator(10**6)
        if abs(float(approx) - inv) <= 1e-12 * inv and approx != 0:
            return W.wavenumber / approx
    return ratio


@dataclass(frozen=True)
class WSplitting:
    w1: PeriodicFunction
    w2_plus: PeriodicFunction
    w2_minus: PeriodicFunction
    w3_plus: PeriodicFunction
    w3_minus: PeriodicFunction
    k_w: Number  # base wavenumber of W in units of g
    index_sets: dict = field(default_factory=dict)
    source: PeriodicFunction | None = None
    k_plus: Fraction = Fraction(0)
    k_minus: Fraction = Fraction(0)

    def reassembled(self, sign: int) -> dict:
        """Frequencies (units of g) -> amplitude of ``W1 + W2_s exp(-2 i k_s x) + W3_s``."""
        k_s = self.k_plus if sign > 0 else self.k_minus
        w2 = self.w2_plus if sign > 0 else self.w2_minus
        w3 = self.w3_plus if sign > 0 else self.w3_minus
        out: dict = {}
        for j, a in self.w1.coeffs.items():
            out[Fraction(j)] = out.get(Fraction(j), 0) + a
        for j, a in w2.coeffs.items():
            f = Fraction(j) - 2 * k_s
            out[f] = out.get(f, 0) + a
        for n, a in w3.coeffs.items():
            f = n * self.k_w
            out[f] = out.get(f, 0) + a
        return out


def split_w(W: PeriodicFunction, pair: CarrierPair) -> WSplitting:
    """Partition the harmonics of ``W`` by ``n k_W in Z`` and ``n k_W + 2 k_pm in Z``."""
    g = pair.g
    k_w = _relative_wavenumber(W, g)
    if not isinstance(k_w, Fraction) and not W.exact:
        raise ValueError(
            "W with irrational wavenumber must have finitely many harmonics; "
            "a truncated (sampled) series is not admissible"
        )
    k_p, k_m = pair.k_plus, pair.k_minus
    w1: dict[int, complex] = {}
    w2p: dict[int, complex] = {}
    w2m: dict[int, complex] = {}
    w3p: dict[int, complex] = {}
    w3m: dict[int, complex] = {}
    sets: dict[str, list[int]] = {"W1": [], "W2+": [], "W2-": [], "W3+": [], "W3-": []}
    for n in sorted(W.coeffs):
        a = W.coeffs[n]
        if a == 0:
            continue
        f = n * k_w
        if _is_integer(f):
            w1[_as_int(f)] = a
            sets["W1"].append(n)
            continue
        for k_s, w2, w3, lab in ((k_p, w2p, w3p, "+"), (k_m, w2m, w3m, "-")):
            shifted = f + 2 * k_s
            if _is_integer(shifted):
                w2[_as_int(shifted)] = a
                sets["W2" + lab].append(n)
            else:
                w3[n] = a
                sets["W3" + lab].append(n)
    mk = lambda c, real: PeriodicFunction(c, Fraction(1), g, real=real)  # noqa: E731
    return WSplitting(
        w1=mk(w1, W.real),
        w2_plus=mk(w2p, False),
        w2_minus=mk(w2m, False),
        w3_plus=PeriodicFunction(w3p, k_w, g, real=False),
        w3_minus=PeriodicFunction(w3m, k_w, g, real=False),
        k_w=k_w,
        index_sets=sets,
        source=W,
        k_plus=k_p,
        k_minus=k_m,
    )


@dataclass(frozen=True)
class QSplitting:
    """``W = W_Q1 + W_QR`` relative to the supercell ``Q = N P``."""

    w1: PeriodicFunction  # harmonics on the Q-lattice g/N
    wr: PeriodicFunction
    N: int
    z1: list
    zr: list


def split_w_q(W: PeriodicFunction, pair: CarrierPair, N: int | None = None) -> QSplitting:
    N = N or pair.reduction_order
    g = pair.g
    k_w = _relative_wavenumber(W, g)
    w1: dict[int, complex] = {}
    wr: dict[int, complex] = {}
    z1, zr = [], []
    for n in sorted(W.coeffs):
        a = W.coeffs[n]
        if a == 0 or n == 0:
            if n == 0 and a != 0:
                w1[0] = a
            continue
        f = N * n * k_w
        if _is_integer(f):
            w1[_as_int(f)] = a
            z1.append(n)
        else:
            wr[n] = a
            zr.append(n)
    return QSplitting(
        w1=PeriodicFunction(w1, Fraction(1), g / N, real=W.real),
        wr=PeriodicFunction(wr, k_w, g, real=False),
        N=N,
        z1=z1,
        zr=zr,
    )


@dataclass(frozen=True)
class GapReport:
    necessary_ok: bool
    kappa_nonzero: bool
    coupling: float  # |<W p_+, p_->|
    candidate_indices: list

    def __bool__(self) -> bool:
        return self.necessary_ok and self.kappa_nonzero


def _samples(pair: CarrierPair, n: int | None = None):
    n = n or quadrature_points(pair.problem.cutoff)
    x = periodic_grid(pair.period, n)
    return n, x


def _lattice_samples(f: PeriodicFunction, period: float, x: np.ndarray) -> np.ndarray:
    for h, a in f.coeffs.items():
        if a == 0 or h == 0:
            continue
        cycles = h * f.fundamental * period / (2 * math.pi)
        if abs(cycles - round(cycles)) > 1e-9 * max(1.0, abs(cycles)):
            raise ValueError(f"function harmonic {h} is not periodic on the cell of length {period}")
    return evaluate(f, x)


def check_gap_conditions(split: WSplitting, pair: CarrierPair, threshold: float = 1e-8) -> GapReport:
    if pair.case is CarrierCase.SIMPLE_PAIR:
        candidates = list(split.index_sets.get("W2+", []))
        coupling_fn = split.w2_plus
    else:
        candidates = list(split.index_sets.get("W1", []))
        candidates = [n for n in candidates if n != 0]
        coupling_fn = split.w1
    necessary = len(candidates) > 0
    n, x = _samples(pair)
    z = inner(evaluate(coupling_fn, x) * pair.p_plus.samples(n), pair.p_minus.samples(n), pair.period)
    return GapReport(necessary, abs(z) > threshold, abs(z), candidates)


@dataclass(frozen=True)
class CmeCoefficients:
    c_g: float
    kappa: float
    kappa_s: float
    alpha: float
    beta: complex = 0j
    gamma: complex = 0j
    N: int = 1  # (alpha, beta, gamma) are divided by N after rational reduction
    case: str = "a"
    deltas: dict = field(default_factory=dict, compare=False)

    def table(self) -> list[tuple[str, float]]:
        return [
            ("c_g", self.c_g),
            ("kappa", self.kappa),
            ("kappa_s", self.kappa_s),
            ("alpha", self.alpha),
            ("beta_re", self.beta.real),
            ("beta_im", self.beta.imag),
            ("gamma_re", self.gamma.real),
            ("gamma_im", self.gamma.imag),
            ("N", self.N),
        ]


def _agree(name: str, values: list[complex], deltas: dict, tol: float = CONSISTENCY_TOL) -> complex:
    ref = values[0]
    spread = max(abs(v - ref) for v in values)
    deltas[name] = spread
    if spread > tol * max(1.0, abs(ref)):
        raise CoefficientConsistencyError(
            f"redundant expressions for {name} disagree by {spread:.3e}: {values}"
        )
    return ref


def _real(name: str, value: complex, tol: float = CONSISTENCY_TOL) -> float:
    if abs(value.imag) > tol * max(1.0, abs(value)):
        raise CoefficientConsistencyError(
            f"{name} = {value} is not real; were the carrier phases fixed?"
        )
    return float(value.real)


def compute_coefficients(
    pair: CarrierPair,
    split: WSplitting,
    sigma: PeriodicFunction,
    n_quad: int | None = None,
) -> CmeCoefficients:
    """All CME coefficients, each from every redundant expression as a cross-check."""
    n, x = _samples(pair, n_quad)
    P = pair.period
    pp, pm = pair.p_plus.samples(n), pair.p_minus.samples(n)
    dpp, dpm = pair.p_plus.derivative_samples(n), pair.p_minus.derivative_samples(n)
    s = _lattice_samples(sigma, P, x)
    w1 = _lattice_samples(split.w1, P, x)
    ip = lambda f, h: inner(f, h, P)  # noqa: E731
    kp, km = pair.k_plus_phys, pair.k_minus_phys
    d: dict[str, float] = {}

    c_g = _agree("c_g", [2 * ip(kp * pp - 1j * dpp, pp), -2 * ip(km * pm - 1j * dpm, pm)], d)
    kappa_s = _agree("kappa_s", [-ip(w1 * pp, pp), -ip(w1 * pm, pm)], d)
    if pair.case is CarrierCase.SIMPLE_PAIR:
        w2p = _lattice_samples(split.w2_plus, P, x)
        w2m = _lattice_samples(split.w2_minus, P, x)
        kappa = _agree("kappa", [-ip(w2m * pm, pp), -ip(w2p * pp, pm)], d)
    else:
        kappa = _agree("kappa", [-ip(w1 * pm, pp), -ip(w1 * pp, pm)], d)
    ap, am = np.abs(pp) ** 2, np.abs(pm) ** 2
    alpha = _agree(
        "alpha",
        [-ip(s * pp**2, pp**2), -ip(s * pm**2, pm**2), -ip(s * am * pp, pp), -ip(s * ap * pm, pm)],
        d,
    )
    beta: complex = 0j
    gamma: complex = 0j
    if pair.case is CarrierCase.DOUBLE_POINT:
        beta = _agree(
            "beta",
            [
                -ip(s * ap * pm, pp),
                -ip(s * am * pm, pp),
                -np.conj(ip(s * ap * pp, pm)),
                -np.conj(ip(s * am * pp, pm)),
            ],
            d,
        )
        gamma = _agree(
            "gamma",
            [-ip(s * pm**2 * np.conj(pp), pp), -np.conj(ip(s * pp**2 * np.conj(pm), pm))],
            d,
        )
    elif pair.k_plus == Fraction(1, 4):
        e = np.exp(1j * pair.g * x)
        gamma = _agree(
            "gamma",
            [
                -ip(s * pm**2 * np.conj(pp) * np.conj(e), pp),
                -np.conj(ip(s * pp**2 * np.conj(pm) * e, pm)),
            ],
            d,
        )
    return CmeCoefficients(
        c_g=_real("c_g", c_g),
        kappa=_real("kappa", kappa),
        kappa_s=_real("kappa_s", kappa_s),
        alpha=_real("alpha", alpha),
        beta=complex(beta),
        gamma=complex(gamma),
        N=1,
        case=pair.case.value,
        deltas=d,
    )


def q_modes(pair: CarrierPair) -> tuple[BlochMode, BlochMode]:
    """``q_pm = p_pm exp(i k_pm x) / sqrt(N)`` as k=0 modes of the supercell ``Q = N P``."""
    N = pair.reduction_order
    M = pair.problem.cutoff
    MQ = N * (M + 1)
    out = []
    for p, k in ((pair.p_plus, pair.k_plus), (pair.p_minus, pair.k_minus)):
        shift = k * N
        if shift.denominator != 1:
            raise ValueError("k_pm * N must be an integer")
        c = np.zeros(2 * MQ + 1, dtype=complex)
        j = N * p.m + int(shift)
        c[j + MQ] = p.coeffs / math.sqrt(N)
        out.append(BlochMode(c, 0.0, N * pair.period))
    return out[0], out[1]


def rational_reduction(
    pair: CarrierPair,
    coeffs: CmeCoefficients,
    W: PeriodicFunction | None = None,
    sigma: PeriodicFunction | None = None,
    tol: float = 1e-8,
) -> CmeCoefficients:
    """Coefficients for the supercell ansatz with ``q_pm``: nonlinear ones divided by ``N``.

    When ``W`` (and ``sigma``) are given, kappa, kappa_s (and alpha_Q) are recomputed
    directly on the supercell with ``W_Q1`` and ``q_pm`` and compared.
    """
    if not isinstance(pair.k_plus, Fraction):
        raise ValueError("rational reduction needs rational carrier wavenumbers")
    N = pair.reduction_order
    if coeffs.N != 1:
        raise ValueError("coefficients are already reduced")
    d = dict(coeffs.deltas)
    if W is not None or sigma is not None:
        qp, qm = q_modes(pair)
        Q = N * pair.period
        n = quadrature_points(qp.cutoff)
        x = periodic_grid(Q, n)
        sp, sm = qp.samples(n), qm.samples(n)
        if W is not None:
            wq = _lattice_samples(split_w_q(W, pair, N).w1, Q, x)
            ks_q = -inner(wq * sp, sp, Q)
            kap_q = -inner(wq * sm, sp, Q)
            d["kappa_s_Q"] = abs(ks_q - coeffs.kappa_s)
            d["kappa_Q"] = abs(kap_q - coeffs.kappa)
            if max(d["kappa_s_Q"], d["kappa_Q"]) > tol:
                raise CoefficientConsistencyError(
                    f"supercell linear coefficients differ: kappa_s {ks_q} vs {coeffs.kappa_s}, "
                    f"kappa {kap_q} vs {coeffs.kappa}"
                )
        if sigma is not None:
            s = _lattice_samples(sigma, Q, x)
            a_q = -inner(s * sp**2, sp**2, Q)
            d["alpha_Q"] = abs(a_q - coeffs.alpha / N)
            if d["alpha_Q"] > tol:
                raise CoefficientConsistencyError(f"alpha_Q {a_q} vs alpha/N {coeffs.alpha / N}")
    return replace(
        coeffs,
        alpha=coeffs.alpha / N,
        beta=coeffs.beta / N,
        gamma=coeffs.gamma / N,
        N=N,
        deltas=d,
    )


# ---------------------------------------------------------------- residual


@dataclass
class EnvelopePair:
    X: np.ndarray  # slow space grid
    T: np.ndarray  # slow time grid
    A_plus: np.ndarray  # (len(T), len(X))
    A_minus: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.atleast_1d(np.asarray(self.X, dtype=float))
        self.T = np.atleast_1d(np.asarray(self.T, dtype=float))
        shape = (self.T.size, self.X.size)
        self.A_plus = np.asarray(self.A_plus, dtype=complex).reshape(shape)
        self.A_minus = np.asarray(self.A_minus, dtype=complex).reshape(shape)

    def peak(self) -> float:
        return float(max(np.max(np.abs(self.A_plus)), np.max(np.abs(self.A_minus))))


@dataclass
class CmeResidual:
    r_plus: np.ndarray
    r_minus: np.ndarray
    sup_plus: float
    sup_minus: float

    @property
    def sup(self) -> float:
        return max(self.sup_plus, self.sup_minus)


def _d4(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order centered first derivative at interior points (two dropped per side)."""
    n = f.shape[axis]
    s = lambda a, b: np.take(f, np.arange(a, n + b), axis=axis)  # noqa: E731
    return (-s(4, 0) + 8 * s(3, -1) - 8 * s(1, -3) + s(0, -4)) / (12 * h)


def _envelope_width_points(env: EnvelopePair) -> int:
    profile = np.max(np.abs(env.A_plus) ** 2 + np.abs(env.A_minus) ** 2, axis=0)
    top = profile.max()
    return int(np.count_nonzero(profile >= 0.5 * top))


def cme_residual(env: EnvelopePair, coeffs: CmeCoefficients) -> CmeResidual:
    """Pointwise residual of both coupled-mode equations on interior grid points."""
    X, T = env.X, env.T
    if X.size < 5 or T.size < 5:
        raise ValueError("need at least 5 points in X and T for 4th-order differences")
    hx, ht = X[1] - X[0], T[1] - T[0]
    if not (np.allclose(np.diff(X), hx, rtol=1e-9) and np.allclose(np.diff(T), ht, rtol=1e-9)):
        raise ValueError("X and T grids must be uniform")
    if env.peak() > 0:
        width = _envelope_width_points(env)
        if width < 5:
            raise ValueError(f"grid too coarse: only {width} points per envelope width")
    Ap, Am = env.A_plus, env.A_minus
    dT_p, dT_m = _d4(Ap, ht, 0)[:, 2:-2], _d4(Am, ht, 0)[:, 2:-2]
    dX_p, dX_m = _d4(Ap, hx, 1)[2:-2, :], _d4(Am, hx, 1)[2:-2, :]
    ap, am = Ap[2:-2, 2:-2], Am[2:-2, 2:-2]
    c = coeffs
    bp, bm = np.abs(ap) ** 2, np.abs(am) ** 2
    beta, gamma = c.beta, c.gamma
    r_plus = (
        1j * (dT_p + c.c_g * dX_p)
        + c.kappa * am
        + c.kappa_s * ap
        + c.alpha * (bp + 2 * bm) * ap
        + beta * (bm + 2 * bp) * am
        + np.conj(beta) * ap**2 * np.conj(am)
        + gamma * am**2 * np.conj(ap)
    )
    r_minus = (
        1j * (dT_m - c.c_g * dX_m)
        + c.kappa * ap
        + c.kappa_s * am
        + c.alpha * (bm + 2 * bp) * am
        + np.conj(beta) * (bp + 2 * bm) * ap
        + beta * am**2 * np.conj(ap)
        + np.conj(gamma) * ap**2 * np.conj(am)
    )
    return CmeResidual(
        r_plus,
        r_minus,
        float(np.max(np.abs(r_plus), initial=0.0)),
        float(np.max(np.abs(r_minus), initial=0.0)),
    )
