import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmclab import analytic
from gmclab.errors import DomainError, FitError
from gmclab.estimators import (EstimateReport, GridConfig, PathConfig, TailCurve,
                               curve_from_exceedance, curve_from_localized,
                               estimate_reflection_1d, estimate_reflection_2d, fit_exponent,
                               plateau, reflection_samples, sample_quantum_sphere,
                               singular_direct_samples, tail_localized, tail_naive,
                               tail_singular_direct, theory_curve)
from gmclab.fields import neumann_disk
from gmclab.rng import Streams
from gmclab.stats import mean_and_se

COARSE = PathConfig(step=1 / 32)


def _curve(t, p, se=None, ex=None, meta=None):
    n = len(t)
    return TailCurve(t, p, np.zeros(n) if se is None else se,
                     np.full(n, 100) if ex is None else ex, "naive", 1000, meta or {})


def test_path_config_halved():
    c = PathConfig()
    assert c.step == 2.0 ** -7 and c.theta_count == 4 * c.n_modes
    assert c.halved().step == c.step / 2


@settings(max_examples=30)
@given(st.floats(0.5, 4.0), st.floats(-3, 3))
def test_fit_recovers_power_law(a, lnc):
    t = np.geomspace(1, 1e3, 12)
    p = math.exp(lnc) * t ** (-a)
    fit = fit_exponent(_curve(t, p), min_exceedances=0)
    assert abs(fit.slope + a) < 1e-10
    assert abs(fit.intercept - lnc) < 1e-10
    slope, intercept, se = fit
    assert se < 1e-8


def test_fit_drops_zero_point():
    t = np.geomspace(1, 100, 6)
    p = 2.0 * t ** -1.5
    p[3] = 0.0
    fit = fit_exponent(_curve(t, p), min_exceedances=0)
    assert fit.n_points == 5 and abs(fit.slope + 1.5) < 1e-10


def test_fit_insufficient_points():
    with pytest.raises(FitError):
        fit_exponent(_curve([1.0, 2.0], [0.5, 0.2]), min_exceedances=0)


def test_plateau_of_exact_power_law():
    t = np.geomspace(10, 1e4, 10)
    p = 3.0 * t ** -2.0
    lev, se = plateau(_curve(t, p, se=0.01 * p), 2.0)
    assert lev == pytest.approx(3.0, rel=1e-12)


def test_curve_validation():
    with pytest.raises(DomainError):
        _curve([2.0, 1.0], [0.1, 0.2])
    with pytest.raises(DomainError):
        TailCurve([1.0], [0.1], [0.0], [1], "bogus", 1)


def test_curve_csv_and_json_roundtrip():
    c = _curve([1.0, 2.0], [0.5, 0.25], se=[0.01, 0.02], meta={"gamma": 1.0})
    text = c.to_csv()
    assert text.splitlines()[0] == "t,p,se,kind"
    assert text.splitlines()[2] == "2,0.25,0.02,naive"
    assert "\r" not in text
    back = TailCurve.from_json_dict(json.loads(json.dumps(c.to_json_dict())))
    assert np.array_equal(back.probabilities, c.probabilities) and back.meta == c.meta


def test_report_json_keys():
    r = EstimateReport("x", 1.0, 0.1, 0.9, 10, "abc", {"master_seed": 1}, None, {"k": 1})
    d = r.to_json_dict()
    assert set(d) == {"name", "estimate", "stderr", "mom", "n", "seed", "config_sha",
                      "runtime_s", "details"}
    assert EstimateReport.from_json_dict(d) == r


def test_monotone_cleanup():
    c = _curve([1.0, 2.0, 3.0], [0.5, 0.6, 0.1], se=[0.1, 0.1, 0.1])
    assert np.all(np.diff(c.monotone) <= 0)
    assert np.array_equal(c.probabilities, [0.5, 0.6, 0.1])


def test_exceedance_curve_bounds():
    c = curve_from_exceedance(np.array([1.0, 2.0, 3.0]), [0.0, 10.0], "naive")
    assert c.probabilities[0] == 1.0
    assert c.probabilities[1] == 0.0 and c.std_errors[1] == pytest.approx(1.0)
    assert c.low_confidence.all()


@settings(max_examples=30)
@given(st.lists(st.floats(0.01, 100), min_size=5, max_size=50), st.floats(0.1, 50))
def test_localized_integrand_bounded(masses, t):
    # each term is area/M with M > t, so the estimate never exceeds area/t
    c = curve_from_localized(np.array(masses), 2.0, [t])
    assert c.probabilities[0] <= 2.0 / t + 1e-12


def test_reflection_zero_exponent_limit():
    # rho^p -> 1 for every positive rho as p -> 0
    rho, _ = reflection_samples(500, np.random.default_rng(0), 1.0, 1.0, COARSE, 2, False)
    assert np.all(rho > 0)
    for p, tol in ((1e-3, 0.05), (1e-6, 1e-4), (1e-9, 1e-7)):
        assert abs(np.mean(rho ** p) - 1.0) < tol


def test_reflection_domain():
    with pytest.raises(DomainError):
        estimate_reflection_2d(3.0, 1.0, 1000)
    with pytest.raises(DomainError):
        estimate_reflection_2d(1.0, 1.0, 10)
    with pytest.raises(DomainError):
        estimate_reflection_1d(1.5, 1000)


def test_reflection_2d_moderate():
    rep = estimate_reflection_2d(1.5, 1.5, 4000, COARSE, Streams(3, "r15"))
    closed = analytic.reflection_closed_2d(1.5, 1.5)
    assert abs(rep.point_estimate - closed) / closed < 0.10
    assert rep.median_of_means > 0 and rep.n_samples == 4000


def test_reflection_1d_half_step():
    rep = estimate_reflection_1d(1.0, 4000, COARSE, Streams(2, "r1d"), half_step_check=True)
    assert rep.details["step_shift_in_se"] < 1.0
    assert abs(rep.point_estimate - 4.0) / 4.0 < 0.15


def test_rho_half_resolution_consistency():
    g = 1.5
    rho, rho_c = reflection_samples(4000, np.random.default_rng(5), g, g, COARSE, 2, True)
    d, se = mean_and_se(rho ** 0.5 - rho_c ** 0.5)
    assert abs(d) < 3 * se


def test_reflection_workers_identical():
    a = estimate_reflection_2d(1.5, 1.5, 1200, COARSE, Streams(9, "w", block_size=400, workers=1))
    b = estimate_reflection_2d(1.5, 1.5, 1200, COARSE, Streams(9, "w", block_size=400, workers=3))
    assert a.point_estimate == b.point_estimate and a.std_error == b.std_error


@pytest.mark.slow
def test_moment_finiteness():
    # E[rho^p] settles below the critical power 4/g^2 and keeps growing above it
    g = 1.5
    crit = 4 / g ** 2
    rho, _ = reflection_samples(100_000, np.random.default_rng(11), g, g, COARSE, 2, False)
    small, big = rho[:10_000], rho
    lo = [np.mean(x ** (0.5 * crit)) for x in (small, big)]
    hi = [np.mean(x ** (1.2 * crit)) for x in (small, big)]
    _, se = mean_and_se(big ** (0.5 * crit))
    assert abs(lo[0] - lo[1]) < 3 * mean_and_se(small ** (0.5 * crit))[1] + 3 * se
    # a sample maximum dominates the heavy moment: the ratio of the largest
    # term to the sum stays of order one
    top = np.max(big ** (1.2 * crit)) / np.sum(big ** (1.2 * crit))
    assert top > 0.01
    assert top > 100 * np.max(big ** (0.5 * crit)) / np.sum(big ** (0.5 * crit))


def test_quantum_sphere():
    cfg = PathConfig(step=1 / 16, n_modes=8)
    for i in range(3):
        meas, w = sample_quantum_sphere(1.5, cfg, np.random.default_rng(i), horizon=20)
        assert abs(float(meas.atoms.sum()) - 1.0) < 1e-10
        assert w > 0


@pytest.mark.slow
def test_quantum_sphere_mean_weight():
    g = 1.5
    cfg = PathConfig(step=1 / 16, n_modes=8)
    rng = np.random.default_rng(4)
    w = np.array([sample_quantum_sphere(g, cfg, rng, horizon=20)[1] for _ in range(2000)])
    m, se = mean_and_se(w)
    closed = analytic.reflection_closed_2d(g, g)
    assert abs(m - closed) / closed < 0.10


def test_tail_naive_edges():
    c = tail_naive("square(0,0,0.5)", 1.0, [0.0, 1e9], 500, Streams(0, "nv"),
                   grid=GridConfig(1 / 16))
    assert c.probabilities[0] == 1.0
    assert c.probabilities[1] == 0.0 and c.std_errors[1] == pytest.approx(3 / 500)


def test_localized_total_probability():
    # above gamma ~ 1.2 the statistic 1/M has a heavy upper tail (the truncated
    # circle chaos degenerates past sqrt 2) and its sample SE is unreliable
    c = tail_localized("disk(0,0,0.5)", 1.0, [0.0], 8000, Streams(1, "t0"), path_cfg=COARSE)
    assert abs(c.probabilities[0] - 1.0) < 3 * c.std_errors[0]


def test_localized_matches_naive_at_one():
    grid = GridConfig(1 / 32)
    loc = tail_localized("square(0,0,1)", 1.5, [1.0], 8000, Streams(2, "lm"), method="grid",
                         grid=grid)
    nai = tail_naive("square(0,0,1)", 1.5, [1.0], 8000, Streams(2, "nm"), grid=grid)
    z = abs(loc.probabilities[0] - nai.probabilities[0]) / math.hypot(loc.std_errors[0],
                                                                      nai.std_errors[0])
    assert z < 3


def test_localized_polar_vs_grid_methods():
    ts = [0.5, 1.0]
    pol = tail_localized("disk(0,0,0.5)", 1.0, ts, 4000, Streams(3, "pp"), path_cfg=COARSE)
    grd = tail_localized("disk(0,0,0.5)", 1.0, ts, 4000, Streams(3, "pg"), method="grid")
    for a, b, sa, sb in zip(pol.probabilities, grd.probabilities, pol.std_errors, grd.std_errors):
        # the grid field is regularized at the cell scale; allow its O(spacing) bias
        assert abs(a - b) < 3 * math.hypot(sa, sb) + 0.05 * b


def test_localized_workers_identical():
    kw = dict(path_cfg=COARSE, stratified=True)
    a = tail_localized("disk(0,0,0.5)", 1.5, [1.0, 4.0], 600,
                       Streams(4, "lw", block_size=200, workers=1), **kw)
    b = tail_localized("disk(0,0,0.5)", 1.5, [1.0, 4.0], 600,
                       Streams(4, "lw", block_size=200, workers=2), **kw)
    assert np.array_equal(a.probabilities, b.probabilities)


def test_localized_unknown_method():
    with pytest.raises(DomainError):
        tail_localized("disk(0,0,0.5)", 1.5, [1.0], 10, method="magic")


def test_neumann_polar_runs():
    c = tail_localized("disk(0,0,0.5)", 1.5, [0.0, 2.0], 300, Streams(6, "nm"),
                       kernel=neumann_disk(), path_cfg=COARSE)
    assert c.meta["kernel"] == "neumann_disk"
    assert 0 < c.probabilities[1] < c.probabilities[0]


def test_singular_factors_independent():
    # the circle-mean factor is independent of (M, I(M)); I(M) itself is cut at
    # the last passage below -M and so depends on M
    rng = np.random.default_rng(8)
    a, b, c = singular_direct_samples(3000, rng, 1.5, 0.5, COARSE)
    la, lb, lc = np.log(a), np.log(b), np.log(c)
    for x, y in ((la, lb), (la, lc)):
        assert abs(np.corrcoef(x, y)[0, 1]) < 3 / math.sqrt(3000)
    assert np.corrcoef(lb, lc)[0, 1] > 3 / math.sqrt(3000)


def test_singular_r_to_one():
    a, _, _ = singular_direct_samples(1000, np.random.default_rng(1), 1.5, 1 - 1e-12, COARSE)
    assert np.allclose(a, 1.0, atol=1e-5)
    with pytest.raises(DomainError):
        singular_direct_samples(10, np.random.default_rng(1), 1.5, 1.0, COARSE)


def test_singular_direct_forms():
    ts = [1.0, 10.0]
    e = tail_singular_direct(1.5, 0.5, ts, 500, Streams(0, "sd"), COARSE)
    loc = tail_singular_direct(1.5, 0.5, ts, 500, Streams(0, "sd"), COARSE, form="localized",
                               area=2.0)
    assert e.kind == loc.kind == "singular_direct"
    assert e.meta["form"] == "exceedance" and loc.meta["form"] == "localized"
    # same samples: area * E[1{X>t}/X] <= area * P(X > t) / t
    assert np.all(loc.probabilities <= 2.0 * e.probabilities / np.array(ts) + 1e-12)
    with pytest.raises(DomainError):
        tail_singular_direct(1.5, 0.5, ts, 10, form="weird")


def test_theory_curve_ratio():
    c = _curve([3.0, 6.0], [0.1, 0.01], meta={"gamma": 1.5, "dim": 2, "geometry": 0.5})
    th = theory_curve(c)
    assert th[1] / th[0] == pytest.approx(2 ** (-4 / 1.5 ** 2), rel=1e-12)


class _FlatLateral:
    """Lateral stand-in with chaos density summing to one: the ring mass is constant."""

    cos_only = True
    n_theta = 2

    def __init__(self, batch):
        self.batch = batch

    def chaos_density(self, gamma):
        return np.full((self.batch, 2), 0.5)

    def keep(self, rows):
        self.batch = int(np.sum(rows))

    def advance(self, h):
        pass


def _dufresne_cdf(gamma, nu):
    # int_0^inf exp(gamma (B_s - nu s)) ds has the law of 2 / (gamma^2 G), G ~ Gamma(2 nu / gamma)
    from scipy import stats
    return lambda y: stats.gamma.sf(2.0 / (gamma * gamma * y), 2.0 * nu / gamma)


@pytest.mark.parametrize("split", [False, True])
def test_engine_matches_exponential_functional_law(split):
    from gmclab.estimators import _integrate, _Side
    from gmclab.paths import FreeStream, RadialStream, sample_max
    from gmclab.stats import ks_one_sample

    g, n = 1.5, 20_000
    nu = analytic.coupling_q(g) - g
    cfg = PathConfig()
    rng = np.random.default_rng(2024)
    if split:
        m = sample_max(g, rng, n)
        right, _ = _integrate(_FlatLateral(n), _Side(RadialStream(nu, n, rng), nu), g, cfg, cfg.step)
        left, _ = _integrate(_FlatLateral(n), _Side(RadialStream(nu, n, rng), nu, level=m), g, cfg,
                             cfg.step)
        x = np.exp(g * m) * (right + left)
    else:
        x, _ = _integrate(_FlatLateral(n), _Side(FreeStream(nu, n, rng), nu), g, cfg, cfg.step)
    _, p = ks_one_sample(x, _dufresne_cdf(g, nu))
    assert p > 0.01
