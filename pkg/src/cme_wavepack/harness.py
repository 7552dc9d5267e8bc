"""Approximate solutions from envelopes and carriers, and epsilon-convergence studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .bloch import BlochProblem, CarrierPair, fix_phases, select_carrier_pair
from .cme import (
    CmeCoefficients,
    EnvelopePair,
    compute_coefficients,
    rational_reduction,
    split_w,
    split_w_q,
    WSplitting,
)
from .pnls import GridSpec, SimulationConfig, SplitStepSolver, build_grid, simulate
from .potentials import PeriodicFunction
from .setups import NamedSetup
from .soliton import SolitonParams, decay_rate, gap_soliton

__all__ = [
    "Prepared",
    "AnsatzSpec",
    "EpsilonRecord",
    "ConvergenceReport",
    "prepare",
    "prepare_setup",
    "q_form_pair",
    "build_uapp",
    "sup_error",
    "fit_rate",
    "commensurate_cell",
    "run_epsilon",
    "convergence_study",
    "case_b_study",
    "soliton_params",
    "domain_half_length",
    "envelope_coefficients",
]


@dataclass(frozen=True)
class Prepared:
    """Phase-fixed carriers, W-splitting and CME coefficients for one configuration."""

    pair: CarrierPair
    split: WSplitting
    coeffs: CmeCoefficients
    V: PeriodicFunction
    W: PeriodicFunction
    sigma: PeriodicFunction


def prepare(
    V: PeriodicFunction,
    W: PeriodicFunction,
    sigma: PeriodicFunction,
    period: float,
    k0: Fraction,
    band_hint: int | None = None,
    omega_hint: float | None = None,
    cutoff: int = 64,
) -> Prepared:
    problem = BlochProblem(V, period, cutoff)
    pair = select_carrier_pair(problem, k0, band_hint=band_hint, omega_hint=omega_hint)
    split = split_w(W, pair)
    pair = fix_phases(pair, split)
    coeffs = compute_coefficients(pair, split, sigma)
    return Prepared(pair, split, coeffs, V, W, sigma)


def prepare_setup(setup: NamedSetup) -> Prepared:
    return prepare(
        setup.V,
        setup.W,
        setup.sigma,
        setup.period,
        setup.k0,
        setup.band_hint,
        setup.omega_hint,
        setup.cutoff,
    )


def envelope_coefficients(prep: Prepared, drop_beta_gamma: bool = False) -> CmeCoefficients:
    c = prep.coeffs
    if drop_beta_gamma:
        c = replace(c, beta=0j, gamma=0j)
    return c


def q_form_pair(prep: Prepared) -> CarrierPair:
    """Carriers ``q_pm`` from an independent Bloch solve on the supercell ``Q = N P`` at k=0.

    ``p_+`` keeps its own group velocity sign, so ``q_+`` is taken on the branch with
    the same sign.
    """
    pair = prep.pair
    N = pair.reduction_order
    problem = pair.problem.with_period_multiple(N)
    orientation = 1 if pair.c_g > 0 else -1
    q = select_carrier_pair(problem, Fraction(0), omega_hint=pair.omega0, orientation=orientation)
    return fix_phases(q, split_w_q(prep.W, pair, N))


@dataclass(frozen=True)
class AnsatzSpec:
    pair: CarrierPair
    epsilon: float
    soliton: SolitonParams | None = None
    envelope: EnvelopePair | None = None
    omega0: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon <= 0.2):
            raise ValueError(f"epsilon must lie in (0, 0.2], got {self.epsilon}")
        if (self.soliton is None) == (self.envelope is None):
            raise ValueError("give exactly one envelope source: soliton or tabulated envelope")

    @property
    def frequency(self) -> float:
        return self.pair.omega0 if self.omega0 is None else self.omega0


def _tabulated(env: EnvelopePair, X: np.ndarray, T: float) -> tuple[np.ndarray, np.ndarray]:
    hits = np.nonzero(np.abs(env.T - T) <= 1e-12 * max(1.0, abs(T)))[0]
    if hits.size == 0:
        raise ValueError(f"tabulated envelope has no slice at T={T}")
    if X.min() < env.X[0] or X.max() > env.X[-1]:
        raise ValueError(
            f"envelope grid [{env.X[0]}, {env.X[-1]}] does not cover eps*x range "
            f"[{X.min()}, {X.max()}]"
        )
    i = hits[0]
    out = []
    for A in (env.A_plus[i], env.A_minus[i]):
        out.append(CubicSpline(env.X, A.real)(X) + 1j * CubicSpline(env.X, A.imag)(X))
    return out[0], out[1]


def build_uapp(spec: AnsatzSpec, x, t: float) -> np.ndarray:
    """``eps^(1/2) exp(-i w0 t) (A_+ p_+ e^{i k_+ x} + A_- p_- e^{i k_- x})`` at the points ``x``."""
    x = np.asarray(x, dtype=float)
    eps = spec.epsilon
    X, T = eps * x, eps * t
    if spec.soliton is not None:
        env = gap_soliton(spec.soliton, X, T)
        a_plus, a_minus = env.A_plus[0], env.A_minus[0]
    else:
        a_plus, a_minus = _tabulated(spec.envelope, X, T)
    carrier_plus = spec.pair.p_plus.bloch_wave(x)
    carrier_minus = spec.pair.p_minus.bloch_wave(x)
    return math.sqrt(eps) * np.exp(-1j * spec.frequency * t) * (a_plus * carrier_plus + a_minus * carrier_minus)


def sup_error(u: np.ndarray, uapp: np.ndarray) -> float:
    u, uapp = np.asarray(u), np.asarray(uapp)
    if u.shape != uapp.shape:
        raise ValueError(f"grid mismatch: {u.shape} vs {uapp.shape}")
    return float(np.max(np.abs(u - uapp), initial=0.0))


def fit_rate(epsilons: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(eps) and the RMS fit deviation."""
    e = np.asarray(epsilons, dtype=float)
    r = np.asarray(errors, dtype=float)
    if e.size < 2 or e.size != r.size:
        raise ValueError("need matching epsilon and error lists with at least two entries")
    if np.any(r <= 0) or np.any(e <= 0):
        raise ValueError("errors and epsilons must be positive")
    lx, ly = np.log(e), np.log(r)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def commensurate_cell(prep: Prepared, max_multiple: int = 1000) -> float:
    """Shortest multiple of ``N P`` on which W, sigma and the carriers are all periodic."""
    base = prep.pair.reduction_order * prep.pair.period
    for m in range(1, max_multiple + 1):
        length = m * base
        ok = True
        for f in (prep.W, prep.sigma, prep.V):
            for h, a in f.coeffs.items():
                if a == 0 or h == 0:
                    continue
                cycles = h * f.fundamental * length / (2 * math.pi)
                if abs(cycles - round(cycles)) > 1e-8 * max(1.0, abs(cycles)):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return length
    raise ValueError("no common period found for W, sigma and the carriers")


@dataclass(frozen=True)
class EpsilonRecord:
    epsilon: float
    sup_error: float
    t_end: float
    mass_drift: float
    L: float
    n: int
    l2_error: float
    initial_error: float


@dataclass
class ConvergenceReport:
    setup: str
    epsilons: list[float]
    sup_errors: list[float]
    fitted_rate: float
    fit_residual: float
    records: list[EpsilonRecord] = field(default_factory=list)
    monotone: bool = True
    window: tuple[float, float] = (-math.inf, math.inf)
    caveat: str = ""

    def __post_init__(self) -> None:
        if len(self.epsilons) != len(self.sup_errors):
            raise ValueError("epsilons and errors differ in length")

    @property
    def in_window(self) -> bool:
        lo, hi = self.window
        return lo <= self.fitted_rate <= hi


def soliton_params(setup: NamedSetup, prep: Prepared) -> SolitonParams:
    return SolitonParams(setup.v, setup.delta, envelope_coefficients(prep, setup.drop_beta_gamma))


def domain_half_length(setup: NamedSetup, params: SolitonParams, epsilon: float) -> float:
    """Soliton margin of ``tail_widths`` decay lengths plus the distance travelled by t_end."""
    travel = abs(params.coeffs.c_g * params.v) * setup.t_end(epsilon)
    return setup.tail_widths / (decay_rate(params) * epsilon) + travel


def run_epsilon(
    setup: NamedSetup,
    prep: Prepared,
    epsilon: float,
    threads: int = 1,
    t_end: float | None = None,
) -> tuple[EpsilonRecord, dict]:
    params = soliton_params(setup, prep)
    t_end = setup.t_end(epsilon) if t_end is None else t_end
    grid = build_grid(domain_half_length(setup, params, epsilon), setup.dx, commensurate_cell(prep))
    config = SimulationConfig(grid, setup.dt, epsilon, prep.V, prep.W, prep.sigma, t_end, threads)
    spec = AnsatzSpec(prep.pair, epsilon, soliton=params)
    x = grid.x
    u0 = build_uapp(spec, x, 0.0)
    traj = simulate(config, u0, solver=SplitStepSolver(config))
    uapp_end = build_uapp(spec, x, t_end)
    diff = traj.final.u - uapp_end
    record = EpsilonRecord(
        epsilon=epsilon,
        sup_error=sup_error(traj.final.u, uapp_end),
        t_end=t_end,
        mass_drift=traj.metadata["mass_drift"],
        L=grid.L,
        n=grid.n,
        l2_error=float(np.sqrt(np.sum(np.abs(diff) ** 2) * grid.dx)),
        initial_error=sup_error(traj.snapshots[0].u, u0),
    )
    return record, traj.metadata


def convergence_study(
    setup: NamedSetup,
    epsilons: Sequence[float] | None = None,
    threads: int = 1,
    workers: int = 1,
    progress: Callable[[EpsilonRecord], None] | None = None,
) -> ConvergenceReport:
    """Simulate from ``u_app(., 0)`` for each epsilon and fit the sup-error rate."""
    epsilons = sorted(setup.epsilons if epsilons is None else epsilons)
    if len(epsilons) < 2:
        raise ValueError("need at least two epsilon values")
    prep = prepare_setup(setup)

    def one(eps: float) -> EpsilonRecord:
        rec, _ = run_epsilon(setup, prep, eps, threads)
        if progress is not None:
            progress(rec)
        return rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, epsilons))
    else:
        records = [one(e) for e in epsilons]
    records.sort(key=lambda r: r.epsilon)
    errs = [r.sup_error for r in records]
    rate, resid = fit_rate(epsilons, errs)
    monotone = all(a < b for a, b in zip(errs, errs[1:]))
    caveat = ""
    if setup.drop_beta_gamma:
        caveat = "envelopes use the beta = gamma = 0 soliton; small nonzero beta, gamma neglected"
    return ConvergenceReport(
        setup=setup.id,
        epsilons=list(epsilons),
        sup_errors=errs,
        fitted_rate=rate,
        fit_residual=resid,
        records=records,
        monotone=monotone,
        window=setup.rate_window,
        caveat=caveat,
    )


def case_b_study(setup: NamedSetup, epsilons: Sequence[float] | None = None, threads: int = 1) -> ConvergenceReport:
    if Fraction(setup.k0) not in (Fraction(0), Fraction(1, 2)):
        raise ValueError("case (b) study needs a double point k0 in {0, 1/2}")
    if not setup.drop_beta_gamma:
        setup = replace(setup, drop_beta_gamma=True)
    return convergence_study(setup, epsilons, threads)
