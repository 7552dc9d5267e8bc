import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cme_wavepack.cme import EnvelopePair
from cme_wavepack.harness import (
    AnsatzSpec,
    build_uapp,
    case_b_study,
    commensurate_cell,
    domain_half_length,
    fit_rate,
    q_form_pair,
    soliton_params,
    sup_error,
)
from cme_wavepack.cme import rational_reduction
from cme_wavepack.soliton import SolitonParams, decay_rate, gap_soliton


def test_sup_error_examples():
    assert sup_error(np.zeros(4), np.zeros(4)) == 0.0
    assert sup_error(np.array([1.0, 2.0j]), np.array([1.0, 0.0])) == 2.0
    with pytest.raises(ValueError):
        sup_error(np.zeros(3), np.zeros(4))


def test_fit_rate_exact_power_law():
    e = [0.01, 0.02, 0.03, 0.04, 0.05]
    rate, resid = fit_rate(e, [3.0 * x**1.5 for x in e])
    assert rate == pytest.approx(1.5, abs=1e-12)
    assert resid < 1e-12
    with pytest.raises(ValueError):
        fit_rate([0.1], [1.0])
    with pytest.raises(ValueError):
        fit_rate([0.1, 0.2], [0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=6),
    st.floats(1e-3, 1e3),
)
def test_fit_rate_invariant_under_error_scaling(errors, scale):
    eps = [0.01 * (i + 1) for i in range(len(errors))]
    r1, f1 = fit_rate(eps, errors)
    r2, f2 = fit_rate(eps, [scale * e for e in errors])
    assert r2 == pytest.approx(r1, abs=1e-9)
    assert f2 == pytest.approx(f1, abs=1e-9)


def _spec(setup, prep, eps, pair=None):
    return AnsatzSpec(pair or prep.pair, eps, soliton=soliton_params(setup, prep))


def test_uapp_epsilon_scaling(sec611):
    setup, prep = sec611
    # at X = eps x fixed, u_app scales like eps^(1/2) up to the carrier factor
    X = np.linspace(-3, 3, 13)
    u1 = build_uapp(_spec(setup, prep, 0.01), X / 0.01, 0.0)
    u4 = build_uapp(_spec(setup, prep, 0.04), X / 0.04, 0.0)
    c1 = prep.pair.p_plus.bloch_wave(X / 0.01)
    c4 = prep.pair.p_plus.bloch_wave(X / 0.04)
    env = gap_soliton(soliton_params(setup, prep), X)
    part1 = (u1 - math.sqrt(0.01) * env.A_minus[0] * prep.pair.p_minus.bloch_wave(X / 0.01)) / c1
    part4 = (u4 - math.sqrt(0.04) * env.A_minus[0] * prep.pair.p_minus.bloch_wave(X / 0.04)) / c4
    ratio = part4 / part1
    assert np.max(np.abs(ratio - 2.0)) < 1e-6


def test_p_form_equals_q_form(sec611, sec612):
    for setup, prep in (sec611, sec612):
        # q_pm = p_pm e^{i k_pm x} / sqrt(N) from an independent supercell solve; the reduced
        # nonlinear coefficient alpha/N makes the envelopes sqrt(N) larger
        q_pair = q_form_pair(prep)
        reduced = rational_reduction(prep.pair, prep.coeffs, prep.W, prep.sigma)
        q_params = SolitonParams(setup.v, setup.delta, reduced)
        x = np.linspace(-200, 200, 4001)
        for t in (0.0, 7.5):
            up = build_uapp(_spec(setup, prep, 0.03), x, t)
            uq = build_uapp(AnsatzSpec(q_pair, 0.03, soliton=q_params), x, t)
            assert np.max(np.abs(up - uq)) < 1e-10


def test_zero_envelope_gives_zero(sec611):
    _, prep = sec611
    X = np.linspace(-10, 10, 21)
    env = EnvelopePair(X, [0.0], np.zeros(21), np.zeros(21))
    u = build_uapp(AnsatzSpec(prep.pair, 0.05, envelope=env), np.linspace(-100, 100, 50), 0.0)
    assert np.all(u == 0)


def test_triangle_bound(sec611):
    setup, prep = sec611
    eps = 0.01
    x = np.linspace(-300, 300, 6001)
    u = build_uapp(_spec(setup, prep, eps), x, 0.0)
    env = gap_soliton(soliton_params(setup, prep), eps * x)
    bound = math.sqrt(eps) * np.max(
        np.abs(env.A_plus[0]) * np.abs(prep.pair.p_plus.bloch_wave(x))
        + np.abs(env.A_minus[0]) * np.abs(prep.pair.p_minus.bloch_wave(x))
    )
    assert np.max(np.abs(u)) <= bound * (1 + 1e-12)


def test_tabulated_envelope_matches_soliton_and_coverage(sec611):
    setup, prep = sec611
    params = soliton_params(setup, prep)
    X = np.linspace(-40, 40, 8001)
    sol = gap_soliton(params, X, 0.0)
    spec_tab = AnsatzSpec(prep.pair, 0.02, envelope=sol)
    x = np.linspace(-1000, 1000, 301)
    assert sup_error(build_uapp(spec_tab, x, 0.0), build_uapp(_spec(setup, prep, 0.02), x, 0.0)) < 1e-8
    with pytest.raises(ValueError, match="cover"):
        build_uapp(spec_tab, np.linspace(-5000, 5000, 11), 0.0)
    with pytest.raises(ValueError):
        build_uapp(spec_tab, x, 1.0)


def test_ansatz_spec_validation(sec611):
    setup, prep = sec611
    with pytest.raises(ValueError):
        _spec(setup, prep, 0.3)
    with pytest.raises(ValueError):
        AnsatzSpec(prep.pair, 0.01)


def test_domain_and_cell(sec611, sec62):
    setup, prep = sec611
    assert commensurate_cell(prep) == pytest.approx(10 * math.pi)
    params = soliton_params(setup, prep)
    half = domain_half_length(setup, params, 0.05)
    travel = abs(params.coeffs.c_g * params.v) * setup.t_end(0.05)
    assert half == pytest.approx(setup.tail_widths / (decay_rate(params) * 0.05) + travel, rel=1e-14)
    s62, p62 = sec62
    assert commensurate_cell(p62) == pytest.approx(p62.pair.period)


def test_case_b_study_requires_double_point(sec611):
    setup, _ = sec611
    with pytest.raises(ValueError):
        case_b_study(setup)
