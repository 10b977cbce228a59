import math

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmclab import analytic
from gmclab.analytic import ChaosParams
from gmclab.errors import DomainError, PoleError

gammas = st.floats(min_value=0.1, max_value=1.99)


@pytest.mark.parametrize("g,d,expected", [(2.0, 2, 2.0), (1.0, 2, 2.5), (1.5, 2, 0.75 + 4 / 3)])
def test_coupling_q_examples(g, d, expected):
    assert analytic.coupling_q(g, d) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("g", [0.0, -1.0, 2.5])
def test_coupling_q_out_of_range(g):
    with pytest.raises(DomainError):
        analytic.coupling_q(g, 2)


def test_psi_examples():
    assert analytic.psi(1.0, 1.0) == pytest.approx(1.0)
    assert analytic.psi(3.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    g = math.sqrt(2.0)
    assert analytic.psi(analytic.p_zero(g), g) == pytest.approx(-1.0, abs=1e-13)


def test_p_zero_golden_ratio():
    assert analytic.p_zero(math.sqrt(2.0)) == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-13)


def test_p_zero_root_by_independent_solver():
    root = mp.findroot(lambda p: analytic.psi(float(p), 1.0) + 1, 4.0)
    assert analytic.p_zero(1.0) == pytest.approx(float(root), rel=1e-12)


@given(gammas)
def test_p_zero_exceeds_moment_power(g):
    assert analytic.p_zero(g) > 4.0 / (g * g) - 1.0


@given(gammas)
def test_psi_at_p_zero(g):
    assert abs(analytic.psi(analytic.p_zero(g), g) + 1.0) < 1e-9


@given(gammas)
def test_prefactor_identity(g):
    m = ChaosParams(g).moment_power
    assert abs(m / (m + 1.0) - (1.0 - g * g / 4.0)) < 1e-14


@given(gammas, st.floats(min_value=-3, max_value=6))
def test_psi_sign_change_at_moment_power(g, p):
    # psi is concave with roots 0 and 4/g^2 - 1
    root = 4.0 / (g * g) - 1.0
    val = analytic.psi(p, g)
    if 1e-6 < p < root - 1e-6:
        assert val > 0
    elif p > root + 1e-6 or p < -1e-6:
        assert val < 0


def test_l_ratio_examples():
    assert analytic.l_ratio(0.5) == pytest.approx(1.0, rel=1e-15)
    assert analytic.l_ratio(0.25) == pytest.approx(float(mp.gamma(0.25) / mp.gamma(0.75)), rel=1e-13)
    assert analytic.l_ratio(0.25) == pytest.approx(2.9586751, rel=1e-7)
    assert analytic.l_ratio(-0.5) == pytest.approx(-4.0, rel=1e-13)


@pytest.mark.parametrize("x", [0.0, -1.0, 1.0, 2.0])
def test_l_ratio_poles(x):
    with pytest.raises(PoleError):
        analytic.l_ratio(x)


def _oracle_gamma_points():
    return [-4.5, -3.7, -2.2, -1.5, -0.3, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.3, 4.0,
            5.5, 6.1, 7.7, 9.0, 10.5, 12.25, 14.0, 16.5, 18.0, 20.2, 22.0, 24.75, 26.0, 28.3, 29.9]


@pytest.mark.parametrize("x", _oracle_gamma_points())
def test_gamma_fn_against_oracle(x):
    exact = float(mp.gamma(x))
    assert analytic.gamma_fn(x) == pytest.approx(exact, rel=1e-13)


def test_gamma_fn_pole():
    with pytest.raises(PoleError):
        analytic.gamma_fn(-2.0)


def test_reflection_2d_oracle():
    g = mp.mpf(1)
    q = g / 2 + 2 / g
    m, k = 2 / g * (q - 1), g / 2 * (q - 1)
    ell = mp.gamma(g ** 2 / 4) / mp.gamma(1 - g ** 2 / 4)
    exact = -(mp.pi * ell) ** m / m * mp.gamma(-k) / (mp.gamma(k) * mp.gamma(m))
    val = analytic.reflection_closed_2d(1.0, 1.0)
    assert val == pytest.approx(float(exact), rel=1e-9)
    assert val == pytest.approx(527.990638713, rel=1e-10)


@pytest.mark.parametrize("g", [0.5, 1.0, 1.5])
def test_reflection_2d_positive(g):
    assert analytic.reflection_closed_2d(g, g) > 0


def test_reflection_2d_limit_at_q():
    q = analytic.coupling_q(1.0)
    vals = [analytic.reflection_closed_2d(q - e, 1.0) for e in (1e-3, 1e-5, 1e-7)]
    assert all(math.isfinite(v) and v > 0 for v in vals)
    # zero exponent: the moment tends to 1
    assert vals[-1] == pytest.approx(1.0, rel=1e-5)


def test_reflection_2d_domain():
    with pytest.raises(DomainError):
        analytic.reflection_closed_2d(0.4, 1.0)
    with pytest.raises(DomainError):
        analytic.reflection_closed_2d(2.6, 1.0)


@given(gammas, st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_reflection_2d_finite_across_open_range(g, u):
    # (g/2)(Q - alpha) stays in (0, 1) here, so no Gamma pole is reachable
    q = analytic.coupling_q(g)
    alpha = g / 2 + u * (q - g / 2)
    assert 0 < g / 2 * (q - alpha) < 1
    assert math.isfinite(analytic.log_reflection_2d(alpha, g))


def test_reflection_1d_examples():
    assert analytic.reflection_closed_1d(1.0) == pytest.approx(4.0, rel=1e-12)
    for g in (0.5, 1.2):
        gg = mp.mpf(g)
        e = 2 / gg * (gg / 2 + 1 / gg - gg)
        exact = (2 * mp.pi) ** e / ((1 - gg ** 2 / 2) * mp.gamma(1 - gg ** 2 / 2) ** (2 / gg ** 2))
        assert analytic.reflection_closed_1d(g) == pytest.approx(float(exact), rel=1e-12)
        assert analytic.reflection_closed_1d(g) > 0


def test_reflection_1d_domain():
    with pytest.raises(DomainError):
        analytic.reflection_closed_1d(math.sqrt(2.0))


def test_small_gamma_log_space():
    # the exponent (2/g)(Q - g) is huge here; the log form must stay finite
    assert math.isfinite(analytic.log_reflection_2d(0.05, 0.05))


def test_tail_constant_prefactor():
    t = analytic.tail_constant(ChaosParams(1.0))
    assert t.prefactor == pytest.approx(0.75 * analytic.reflection_closed_2d(1.0, 1.0), rel=1e-14)
    assert t.exponent == pytest.approx(4.0)
    t1 = analytic.tail_constant(ChaosParams(1.0, dim=1))
    assert t1.prefactor == pytest.approx(0.5 * 4.0, rel=1e-12)


def test_tail_asymptote_example():
    g = 1.5
    p = ChaosParams(g)
    val = analytic.tail_asymptote(100.0, p, math.pi / 4)
    expected = (1 - 0.5625) * analytic.reflection_closed_2d(g, g) * (math.pi / 4) * 100 ** (-16 / 9)
    assert val == pytest.approx(expected, rel=1e-13)


def test_tail_asymptote_1d_power():
    p = ChaosParams(1.2, dim=1)
    r = analytic.tail_asymptote(20.0, p, 1.0) / analytic.tail_asymptote(10.0, p, 1.0)
    assert r == pytest.approx(2.0 ** (-2 / 1.44), rel=1e-13)


@pytest.mark.parametrize("t,geo", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_tail_asymptote_domain(t, geo):
    with pytest.raises(DomainError):
        analytic.tail_asymptote(t, ChaosParams(1.0), geo)


def test_neumann_geometry_quadrature():
    g = 1.5
    p = ChaosParams(g)
    c = 4.0 / g * (p.q - g)
    exact = float(mp.quad(lambda r: 2 * mp.pi * r * (1 - r * r) ** (-c), [0, 0.5]))
    assert analytic.neumann_geometry(p, 0.5) == pytest.approx(exact, rel=1e-9)


@settings(max_examples=30)
@given(gammas, st.sampled_from([1, 2]))
def test_chaos_params_consistency(g, d):
    if d == 1 and g >= math.sqrt(2):
        return
    p = ChaosParams(g, d)
    assert p.q == pytest.approx(g / 2 + d / g)
    assert p.moment_power == pytest.approx(2.0 / g * (p.q - g))
