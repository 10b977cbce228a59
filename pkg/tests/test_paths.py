import math

import numpy as np
import pytest
from scipy import stats

from gmclab.analytic import coupling_q
from gmclab.errors import DomainError, HorizonError
from gmclab.gmc import RingMassProcess
from gmclab.paths import (DriftPath, FreeStream, RadialStream, TwoSidedPath, decompose_at_max,
                          last_level_index, reassemble, sample_conditioned_negative,
                          sample_drift_bm, sample_max, sample_two_sided, weighted_integral)
from gmclab.stats import ks_one_sample, ks_two_sample, mean_and_se
from gmclab.validate import regeneration_samples

H = 2.0 ** -7


def _within(x, target, sigmas=3.0):
    m, se = mean_and_se(x)
    return abs(m - target) < sigmas * se


def test_drift_bm_moments(rng):
    p = sample_drift_bm(1.5, 2.0, H, rng, n_paths=10_000)
    end = p.values[:, -1]
    assert _within(end, -3.0)
    v = end.var(ddof=1)
    assert abs(v - 2.0) < 3 * 2.0 * math.sqrt(2 / 9_999)


def test_drift_bm_increments_normal(rng):
    p = sample_drift_bm(0.7, 1.0, 1 / 1000, rng, n_paths=100)
    z = (np.diff(p.values, axis=-1) + 0.7 / 1000) * math.sqrt(1000)
    assert z.size == 100_000
    assert ks_one_sample(z.ravel(), stats.norm.cdf)[1] > 0.01


def test_drift_bm_domain(rng):
    with pytest.raises(DomainError):
        sample_drift_bm(0.0, 1.0, H, rng)
    with pytest.raises(DomainError):
        sample_drift_bm(1.0, -1.0, H, rng)


def test_sample_max_mean(rng):
    m = sample_max(1.0, rng, 1_000_000)
    assert _within(m, 1.0 / 3.0)


def test_decompose_monotone_path():
    vals = -np.arange(10.0)
    sp = decompose_at_max(DriftPath(0.1, vals, 1.0, 0.9))
    assert sp.max_value == 0.0 and sp.argmax_time == 0.0
    assert np.array_equal(sp.post_max.values, vals)


def test_decompose_reassemble(rng):
    p = sample_drift_bm(1.0, 30.0, H, rng)
    sp = decompose_at_max(p)
    assert np.allclose(reassemble(sp), p.values)
    assert np.all(sp.pre_max.values <= 0) and np.all(sp.post_max.values <= 0)


def test_decompose_near_horizon_raises():
    with pytest.raises(HorizonError):
        decompose_at_max(DriftPath(0.1, np.arange(10.0), 1.0, 0.9))


def _bridge_max(vals, h, rng):
    # exact maximum of Brownian motion between grid points given the endpoints
    a, b = vals[:, :-1], vals[:, 1:]
    u = rng.random(a.shape)
    m = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * h * np.log(u)))
    return m.max(axis=1)


def test_split_max_law(rng):
    g = 1.0
    nu = coupling_q(g) - g
    n = 10_000
    p = sample_drift_bm(nu, 12.0, H, rng, n_paths=n)
    grid_max = np.array([decompose_at_max(DriftPath(H, v, nu, 12.0)).max_value for v in p.values])
    assert np.allclose(grid_max, p.values.max(axis=1))
    # the grid maximum sits below the continuous one; restore the exact law
    exact = _bridge_max(p.values, H, rng)
    assert np.all(exact >= grid_max)
    _, pv = ks_two_sample(exact, sample_max(g, rng, n))
    assert pv > 0.01


def test_post_max_matches_conditioned(rng):
    g, nu, h = 1.0, 1.5, 2.0 ** -10
    k = int(5.0 / h)
    n = 10_000
    post = sample_conditioned_negative(nu, 5.0, h, rng, n_paths=n, method="williams").values
    direct = sample_conditioned_negative(nu, 5.0, h, rng, n_paths=n).values

    def functional(v):
        w = np.full(k + 1, h)
        w[0] = w[-1] = h / 2
        return np.exp(g * v) @ w

    assert ks_two_sample(functional(post), functional(direct))[1] > 0.01


@pytest.mark.parametrize("method", ["radial", "williams", "htransform"])
def test_conditioned_negative_nonpositive(rng, method):
    p = sample_conditioned_negative(1.5, 2.0, H, rng, n_paths=50, method=method)
    assert np.all(p.values <= 0) and np.all(p.values[:, 0] == 0)


def test_conditioned_value_at_five_horizon_consistency(rng):
    h = 2.0 ** -8
    k = int(5.0 / h)
    a = sample_conditioned_negative(1.5, 5.0, h, rng, n_paths=2000).values[:, k]
    b = sample_conditioned_negative(1.5, 50.0, h, rng, n_paths=2000, method="williams").values[:, k]
    ma, sa = mean_and_se(a)
    mb, sb = mean_and_se(b)
    assert abs(ma - mb) < 3 * math.hypot(sa, sb)


def test_unknown_method(rng):
    with pytest.raises(DomainError):
        sample_conditioned_negative(1.0, 1.0, H, rng, method="nope")


def test_regeneration(rng):
    shifted, original = regeneration_samples(4000, rng, 1.5)
    assert ks_two_sample(shifted, original)[1] > 0.01


def test_two_sided_structure(rng):
    tp = sample_two_sided(1.0, 1.0, 3.0, H, rng, n_paths=2000)
    v = tp.values()
    s = tp.s_grid()
    assert np.all(v[:, s == 0] == 0) and np.all(v <= 0)
    a = np.exp(tp.positive_side.values).sum(axis=1)
    b = np.exp(tp.negative_side.values).sum(axis=1)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3 / math.sqrt(2000)


def test_two_sided_side_law(rng):
    g = 1.0
    nu = coupling_q(g) - g
    tp = sample_two_sided(g, g, 3.0, H, rng, n_paths=4000)
    ref = sample_conditioned_negative(nu, 3.0, H, rng, n_paths=4000)
    f = lambda v: np.exp(g * v).sum(axis=1) * H
    assert ks_two_sample(f(tp.positive_side.values), f(ref.values))[1] > 0.01


def test_two_sided_alpha_domain(rng):
    with pytest.raises(DomainError):
        sample_two_sided(2.5, 1.0, 1.0, H, rng)


def test_conditioned_drift_rate(rng):
    p = sample_conditioned_negative(1.5, 20.0, H, rng, n_paths=500)
    assert p.values[:, -1].mean() / 20.0 == pytest.approx(-1.5, rel=0.10)


def test_last_level_index():
    v = np.array([[0.0, -0.2, -0.6, -0.4, -0.7, -1.0]])
    assert last_level_index(v, 0.5)[0] == 3
    with pytest.raises(HorizonError):
        last_level_index(np.array([[0.0, -0.1]]), 0.5)


def test_weighted_integral_degenerate():
    h = 0.1
    side = np.full(6, -np.inf)
    side[0] = 0.0
    tp = TwoSidedPath(DriftPath(h, side, 1.0, 0.5), DriftPath(h, side.copy(), 1.0, 0.5))
    ring = RingMassProcess(tp.s_grid(), np.full(11, 2 * math.pi))
    val = weighted_integral(tp, ring, 1.0, lower_cut=0.0, check=False)
    assert val == pytest.approx(h * 2 * math.pi)


def test_weighted_integral_truncation_check(rng):
    tp = sample_two_sided(1.0, 1.0, 0.5, H, rng, n_paths=4)
    ring = RingMassProcess(tp.s_grid(), np.full(tp.s_grid().size, 2 * math.pi))
    with pytest.raises(HorizonError):
        weighted_integral(tp, ring, 1.0)


def test_streams_match_batch_samplers(rng):
    fs = FreeStream(1.0, 20_000, rng)
    rs = RadialStream(1.0, 20_000, rng)
    for _ in range(128):
        fs.advance(H)
        rs.advance(H)
    assert _within(fs.value(), -1.0)
    assert np.all(rs.value() <= 0)
    ref = sample_conditioned_negative(1.0, 1.0, H, rng, n_paths=20_000).values[:, -1]
    assert ks_two_sample(rs.value(), ref)[1] > 0.01
