import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cme_wavepack.bloch import BlochProblem, GapConditionError, fix_phases, select_carrier_pair
from cme_wavepack.cme import (
    CmeCoefficients,
    EnvelopePair,
    check_gap_conditions,
    cme_residual,
    compute_coefficients,
    q_modes,
    rational_reduction,
    split_w,
    split_w_q,
)
from cme_wavepack.harness import prepare
from cme_wavepack.potentials import constant, cos_series, cos_shifted, cosine

V_COS = cos_shifted(2.0)
SIGMA = constant(-1.0)


def _reassembly_exact(split, W):
    expected = {}
    for n, a in W.coeffs.items():
        if a != 0:
            f = n * split.k_w
            expected[f] = expected.get(f, 0) + a
    for sign in (1, -1):
        assert split.reassembled(sign) == expected


def test_sec611_coefficients(sec611):
    _, prep = sec611
    c = prep.coeffs
    assert c.c_g == pytest.approx(-0.3341, abs=2e-3)
    assert c.kappa == pytest.approx(0.3826, abs=2e-3)
    assert abs(c.kappa_s) < 1e-6
    assert c.alpha == pytest.approx(0.2509, abs=2e-3)
    assert c.beta == 0 and c.gamma == 0
    assert max(c.deltas.values()) < 1e-9


def test_sec612_splitting_and_shift(sec612):
    _, prep = sec612
    s = prep.split
    assert s.index_sets["W1"] == [-10, 10]
    assert s.index_sets["W2+"] == [-2] and s.index_sets["W2-"] == [2]
    _reassembly_exact(s, prep.W)
    assert prep.coeffs.kappa_s == pytest.approx(0.1324, abs=2e-3)


def test_reassembly_exact_for_generic_series():
    V = cos_shifted(2.0)
    W = cos_series([(1, 1.0), (3, 2 / 7), (5, -1 / 3), (10, 1 / 11)], Fraction(1, 5))
    pair = select_carrier_pair(BlochProblem(V, 2 * math.pi, 32), Fraction(1, 5), band_hint=2)
    _reassembly_exact(split_w(W, pair), W)


def test_kappa_is_independent_oracle_inner_product(sec611):
    # kappa from the full W and the phase-fixed modes: -<W p_+ e^{ik_+x}, p_- e^{ik_-x}> over 5 cells
    _, prep = sec611
    pair = prep.pair
    Q = 5 * pair.period
    x = np.linspace(0.0, Q, 8000, endpoint=False)
    u_p = pair.p_plus.bloch_wave(x)
    u_m = pair.p_minus.bloch_wave(x)
    kappa = -np.sum(np.cos(0.4 * x) * u_p * np.conj(u_m)) * (x[1] - x[0]) / 5
    # conj convention: inner(f, g) = int f conj(g)
    assert abs(kappa - prep.coeffs.kappa) < 1e-10 or abs(np.conj(kappa) - prep.coeffs.kappa) < 1e-10


def test_gap_condition_fails_without_resonant_harmonic():
    pair = select_carrier_pair(BlochProblem(V_COS, 2 * math.pi, 32), Fraction(1, 5), band_hint=2)
    split = split_w(cosine(1.0, Fraction(3)), pair)
    report = check_gap_conditions(split, pair)
    assert not report
    assert not report.necessary_ok


def test_zero_w_gives_zero_kappa():
    pair = select_carrier_pair(BlochProblem(V_COS, 2 * math.pi, 32), Fraction(1, 5), band_hint=2)
    split = split_w(constant(0.0), pair)
    c = compute_coefficients(pair, split, SIGMA)
    assert c.kappa == 0.0 and c.kappa_s == 0.0
    with pytest.raises(GapConditionError):
        fix_phases(pair, split)


def test_redundant_expressions_agree_and_real(sec611, sec612, sec62):
    for _, prep in (sec611, sec612, sec62):
        c = prep.coeffs
        assert max(c.deltas.values()) < 1e-9
        for v in (c.c_g, c.kappa, c.kappa_s, c.alpha):
            assert isinstance(v, float)
        assert c.kappa >= 0


def test_sec62_double_point_values(sec62):
    _, prep = sec62
    c = prep.coeffs
    assert c.case == "b"
    assert c.kappa > 0 and c.alpha > 0
    assert abs(c.gamma) < 5e-5
    # beta is computed with unit-norm modes on one lattice period
    assert 1e-4 < abs(c.beta) < 5e-3


def test_rational_reduction_n5(sec611):
    _, prep = sec611
    q = rational_reduction(prep.pair, prep.coeffs, prep.W, prep.sigma)
    assert q.N == 5
    assert q.alpha == pytest.approx(prep.coeffs.alpha / 5, rel=1e-12)
    assert q.kappa == prep.coeffs.kappa and q.kappa_s == prep.coeffs.kappa_s
    assert q.deltas["kappa_Q"] < 1e-10 and q.deltas["alpha_Q"] < 1e-10


def test_rational_reduction_n3():
    prep = prepare(V_COS, cosine(1.0, Fraction(2, 3)), SIGMA, 2 * math.pi, Fraction(1, 3), band_hint=2, cutoff=32)
    assert prep.pair.reduction_order == 3
    q = rational_reduction(prep.pair, prep.coeffs, prep.W, prep.sigma)
    assert q.alpha == pytest.approx(prep.coeffs.alpha / 3, rel=1e-12)
    qp, qm = q_modes(prep.pair)
    assert qp.period == pytest.approx(6 * math.pi)
    assert qp.norm2() == pytest.approx(1.0, abs=1e-12)


def test_rational_reduction_identity_for_n1(sec62):
    _, prep = sec62
    q = rational_reduction(prep.pair, prep.coeffs)
    assert q.N == 1
    assert q.alpha == prep.coeffs.alpha and q.beta == prep.coeffs.beta


def test_q_split_matches_cell(sec611):
    _, prep = sec611
    qs = split_w_q(prep.W, prep.pair, 5)
    assert qs.z1 == [-1, 1] and qs.zr == []


def _coeffs(**kw):
    base = dict(c_g=1.0, kappa=0.7, kappa_s=0.2, alpha=0.4)
    base.update(kw)
    return CmeCoefficients(**base)


def test_residual_zero_envelope():
    X = np.linspace(-1, 1, 11)
    T = np.linspace(0, 1, 7)
    env = EnvelopePair(X, T, np.zeros((7, 11)), np.zeros((7, 11)))
    assert cme_residual(env, _coeffs()).sup == 0.0


def test_residual_constant_envelope():
    c = 0.3
    X = np.linspace(-1, 1, 11)
    T = np.linspace(0, 1, 7)
    ones = np.ones((7, 11))
    co = _coeffs(kappa_s=0.0)
    res = cme_residual(EnvelopePair(X, T, c * ones, c * ones), co)
    assert res.sup == pytest.approx(abs(co.kappa * c + 3 * co.alpha * c**3), rel=1e-12)


def test_residual_rejects_tiny_grids():
    X = np.linspace(-1, 1, 4)
    with pytest.raises(ValueError):
        cme_residual(EnvelopePair(X, np.linspace(0, 1, 6), np.ones((6, 4)), np.ones((6, 4))), _coeffs())


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0.1, 1.0))
def test_kappa_s_is_a_gauge_phase(ks, amp):
    # A_pm = a e^{i(ks - kappa - 3 alpha a^2) T} solves the spatially constant system
    co = _coeffs(kappa_s=ks)
    X = np.linspace(-1, 1, 9)
    T = np.linspace(0, 0.5, 41)
    lam = ks + co.kappa + 3 * co.alpha * amp**2
    A = amp * np.exp(1j * lam * T)[:, None] * np.ones(9)
    res = cme_residual(EnvelopePair(X, T, A, A), co)
    assert res.sup < 1e-5 * max(1.0, lam**4)


def test_quarter_wavenumber_gamma():
    # at k0 = 1/4 the term A_-^2 conj(A_+) is resonant; oracle from full Bloch waves over 4 cells
    P = 2 * math.pi
    prep = prepare(V_COS, cosine(1.0, Fraction(1, 2)), SIGMA, P, Fraction(1, 4), band_hint=2, cutoff=32)
    c = prep.coeffs
    x = np.linspace(0.0, 4 * P, 4096, endpoint=False)
    up = prep.pair.p_plus.bloch_wave(x)
    um = prep.pair.p_minus.bloch_wave(x)
    oracle = np.sum(um**2 * np.conj(up) ** 2) * (x[1] - x[0]) / 4
    assert abs(c.gamma) > 1e-3
    assert abs(c.gamma - oracle) < 1e-10
    # V = 0: the carriers are constants and the resonant integral vanishes
    free = prepare(constant(0.0), cosine(1.0, Fraction(1, 2)), SIGMA, P, Fraction(1, 4), band_hint=1, cutoff=16)
    assert abs(free.coeffs.gamma) < 1e-14
    assert free.coeffs.alpha == pytest.approx(1 / P, rel=1e-10)


def test_beta_finite_difference_oracle(sec62):
    # independent route: real-space 4th-order FD eigenproblem on one period, Simpson-free trapezoid
    _, prep = sec62
    pair = prep.pair
    V = prep.V
    P = pair.period
    n = 1200
    h = P / n
    x = np.arange(n) * h
    lap = (np.diag(-30.0 * np.ones(n)) + 16 * (np.eye(n, k=1) + np.eye(n, k=-1)) - (np.eye(n, k=2) + np.eye(n, k=-2)))
    for (i, j, c) in ((0, n - 1, 16), (n - 1, 0, 16), (0, n - 2, -1), (n - 2, 0, -1), (1, n - 1, -1), (n - 1, 1, -1)):
        lap[i, j] = c
    H = -lap / (12 * h * h) + np.diag(V(x))
    w, vecs = np.linalg.eigh(H)
    i = int(np.argmin(np.abs(w - pair.omega0)))
    assert abs(w[i] - pair.omega0) < 1e-5
    # project the degenerate space onto the library's carriers; beta is basis-covariant
    pp = pair.p_plus.samples(n)
    pm = pair.p_minus.samples(n)
    span = vecs[:, i - 1 : i + 2]
    sub = span[:, np.argsort(np.abs(w[i - 1 : i + 2] - pair.omega0))[:2]]
    proj_p = sub @ (sub.conj().T @ pp)
    proj_m = sub @ (sub.conj().T @ pm)
    assert np.max(np.abs(proj_p - pp)) < 1e-5 and np.max(np.abs(proj_m - pm)) < 1e-5
    s = -1.0
    beta = -np.sum(s * np.abs(proj_p) ** 2 * proj_m * np.conj(proj_p)) * h
    assert abs(beta - prep.coeffs.beta) < 1e-6
