"""Named validation checks and the fast/full suites built from them.

Every check returns a :class:`CheckResult` with the measured quantity and the
tolerance it was held to. The acceptance tests call the same functions with
full sample sizes; the fast suite uses smaller sizes at the same tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from . import analytic
from .analytic import ChaosParams
from .errors import GmcLabError, HorizonError
from .estimators import (GridConfig, PathConfig, direct_radial_samples, estimate_reflection_1d,
                         estimate_reflection_2d, fit_exponent, plateau, tail_localized,
                         tail_naive, tail_singular_direct, williams_samples)
from .fields import LateralStream, neumann_disk
from .paths import (DEFAULT_STEP, FreeStream, last_level_index, sample_conditioned_negative,
                    sample_max)
from .rng import Streams, stream
from .stats import ks_one_sample, ks_two_sample, mean_and_se

HEAVY_STEP = 1.0 / 32.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: str
    required: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.measured} (required {self.required})"


def _heavy_cfg(**kw) -> PathConfig:
    return PathConfig(step=HEAVY_STEP, **kw)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------------------
# High-precision oracles


def mp_reflection_2d(alpha: float, gamma: float, dps: int = 40) -> float:
    """Independent evaluation of the planar closed form with mpmath."""
    import mpmath as mp
    with mp.workdps(dps):
        g, a = mp.mpf(gamma), mp.mpf(alpha)
        q = g / 2 + 2 / g
        m = 2 / g * (q - a)
        k = g / 2 * (q - a)
        ell = mp.gamma(g * g / 4) / mp.gamma(1 - g * g / 4)
        val = -(mp.pi * ell) ** m / m * mp.gamma(-k) / (mp.gamma(k) * mp.gamma(m))
        return float(val)


def mp_reflection_1d(gamma: float, dps: int = 40) -> float:
    import mpmath as mp
    with mp.workdps(dps):
        g = mp.mpf(gamma)
        e = 2 / g * (g / 2 + 1 / g - g)
        return float((2 * mp.pi) ** e / ((1 - g * g / 2) * mp.gamma(1 - g * g / 2) ** (2 / (g * g))))


def annulus_second_moment(gamma: float, r_in: float, r_out: float) -> float:
    """Integral of |z|^-g2 |w|^-g2 |z - w|^-g2 over the annulus squared.

    The angular integral is done in closed form:
    int_0^{2 pi} |a - b e^{i phi}|^{-2c} d phi = 2 pi a^{-2c} 2F1(c, c; 1; (b/a)^2) for b < a.
    """
    g2 = gamma * gamma
    c = g2 / 2.0

    def angular(r1: float, r2: float) -> float:
        big, small = max(r1, r2), min(r1, r2)
        return 2.0 * math.pi * big ** (-2 * c) * special.hyp2f1(c, c, 1.0, (small / big) ** 2)

    def inner(r1: float) -> float:
        # the angular factor has a log singularity at r2 = r1; split there
        f = lambda r2: r2 ** (1.0 - g2) * angular(r1, r2)
        lo, _ = integrate.quad(f, r_in, r1, epsabs=0.0, epsrel=1e-10, limit=200)
        hi, _ = integrate.quad(f, r1, r_out, epsabs=0.0, epsrel=1e-10, limit=200)
        return 2.0 * math.pi * r1 ** (1.0 - g2) * (lo + hi)

    val, _ = integrate.quad(inner, r_in, r_out, epsabs=0.0, epsrel=1e-9, limit=200)
    return val


# ---------------------------------------------------------------------------
# Annulus masses around the origin in log-polar coordinates


def annulus_moment_samples(n: int, rng, gamma: float, n_annuli: int, per_octave: int = 64,
                           n_modes: int = 16, batch: int = 2048
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Singular-weighted chaos masses of the annuli 2^-(k+1) <= |z| <= 2^-k, k = 0..n_annuli-1.

    Around the origin the field is B_s + Y(s, theta) with s = -ln|z|, so the
    k-th mass is the integral over s in [k ln 2, (k+1) ln 2] of
    exp(gamma x_s) Z_s ds with x_s = B_s - (2/gamma - gamma/2) s.

    Returns ``(masses, starts)`` where ``starts[:, k]`` is x at the inner edge
    of window k. ``masses * exp(-gamma * starts)`` is independent of ``starts``.
    """
    h = math.log(2.0) / per_octave
    drift = (2.0 - gamma * gamma / 2.0) / gamma
    out = np.empty((n, n_annuli))
    starts = np.empty((n, n_annuli))
    start = 0
    while start < n:
        b = min(batch, n - start)
        lat = LateralStream(n_modes, 4 * n_modes, b, rng)
        path = FreeStream(drift, b, rng)
        acc = np.zeros((b, n_annuli))
        for j in range(n_annuli * per_octave + 1):
            z = lat.ring_mass(gamma) * np.exp(gamma * path.value())
            k, r = divmod(j, per_octave)
            if r == 0:
                if k > 0:
                    acc[:, k - 1] += 0.5 * h * z
                if k < n_annuli:
                    acc[:, k] += 0.5 * h * z
                    starts[start:start + b, k] = path.value()
            else:
                acc[:, k] += h * z
            lat.advance(h)
            path.advance(h)
        out[start:start + b] = acc
        start += b
    return out, starts


def regeneration_samples(n: int, rng, nu: float, level: float = 0.5, lag: float = 3.0,
                         horizon: float = 40.0, step: float = DEFAULT_STEP,
                         batch: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Values at ``lag`` after the last visit to -level (shifted up by level), and at ``lag``.

    A conditioned-negative path restarted at its last visit to -level has the
    law of the original path shifted down by level; both arrays should match.
    """
    k = int(round(lag / step))
    shifted, original = np.empty(n), np.empty(n)
    start = 0
    while start < n:
        b = min(batch, n - start)
        vals = sample_conditioned_negative(nu, horizon, step, rng, b).values
        last = last_level_index(vals, level)
        if np.any(last + k >= vals.shape[1]):
            raise HorizonError("last visit too late for the requested lag")
        shifted[start:start + b] = vals[np.arange(b), last + k] + level
        original[start:start + b] = vals[:, k]
        start += b
    return shifted, original


# ---------------------------------------------------------------------------
# Criteria


def check_closed_forms() -> list[CheckResult]:
    r2 = analytic.reflection_closed_2d(1.0, 1.0)
    o2 = mp_reflection_2d(1.0, 1.0)
    r1 = analytic.reflection_closed_1d(1.0)
    return [CheckResult("closed form 2d at (1,1)", _rel(r2, o2) <= 1e-9,
                        f"{r2:.12g} vs oracle {o2:.12g}, rel {_rel(r2, o2):.2e}", "rel <= 1e-9"),
            CheckResult("closed form 1d at 1", _rel(r1, 4.0) <= 1e-12,
                        f"{r1:.15g}, rel {_rel(r1, 4.0):.2e}", "rel <= 1e-12")]


def check_exponent_algebra(n_grid: int = 100) -> list[CheckResult]:
    # below gamma ~ 0.1, p0 ~ 4/gamma^2 is so large that psi(p0) cannot be
    # evaluated to 1e-12 absolute in double precision
    gammas = np.linspace(0.1, 1.99, n_grid)
    worst_psi, worst_pref = 0.0, 0.0
    try:
        for g in gammas:
            p0 = analytic.p_zero(float(g))
            worst_psi = max(worst_psi, abs(analytic.psi(p0, float(g)) + 1.0))
            par = ChaosParams(float(g))
            m = par.moment_power
            worst_pref = max(worst_pref, abs(m / (m + 1.0) - (1.0 - g * g / 4.0)))
    except (ArithmeticError, GmcLabError) as exc:
        return [CheckResult("psi(p0) = -1", False, f"error: {exc}", "|psi(p0)+1| <= 1e-12"),
                CheckResult("prefactor identity", math.isfinite(worst_pref) and worst_pref <= 1e-12,
                            f"max err {worst_pref:.2e} before failure", "<= 1e-12")]
    return [CheckResult("psi(p0) = -1", worst_psi <= 1e-12, f"max err {worst_psi:.2e}",
                        "<= 1e-12"),
            CheckResult("prefactor identity", worst_pref <= 1e-12, f"max err {worst_pref:.2e}",
                        "<= 1e-12")]


def check_max_law(n: int = 100_000, seed: int = 0) -> list[CheckResult]:
    out = []
    for g in (1.0, 1.5):
        a = ChaosParams(g).moment_power
        x = np.exp(g * sample_max(g, stream(seed, f"max-law-{g}"), n))
        _, p = ks_one_sample(x, lambda y, a=a: 1.0 - np.maximum(y, 1.0) ** (-a))
        out.append(CheckResult(f"max law at gamma={g}", p > 0.01, f"KS p={p:.3g}", "p > 0.01"))
    return out


def check_williams(n: int = 10_000, n_regen: int = 10_000, seed: int = 0) -> list[CheckResult]:
    g = 1.5
    # at the coarse step the discretized maximum biases the direct side visibly
    cfg = PathConfig()
    d = direct_radial_samples(n, stream(seed, "williams-direct"), g, cfg)
    m, integ = williams_samples(n, stream(seed, "williams-split"), g, cfg)
    _, p1 = ks_two_sample(np.log(d), g * m + np.log(integ))
    nu = ChaosParams(g).q - g
    shifted, original = regeneration_samples(n_regen, stream(seed, "regeneration"), nu)
    _, p2 = ks_two_sample(shifted, original)
    return [CheckResult("direct vs split at the maximum", p1 > 0.01, f"KS p={p1:.3g}", "p > 0.01"),
            CheckResult("regeneration after the last visit to -1/2", p2 > 0.01,
                        f"KS p={p2:.3g}", "p > 0.01")]


def check_reflection(n15: int = 100_000, n10: int = 1_000_000, seed: int = 0,
                     workers: int = 1) -> list[CheckResult]:
    out = []
    for g, n, tol in ((1.5, n15, 0.10), (1.0, n10, 0.20)):
        rep = estimate_reflection_2d(g, g, n, _heavy_cfg(), Streams(seed, f"reflection-{g}",
                                                                    workers=workers))
        closed = analytic.reflection_closed_2d(g, g)
        err = _rel(rep.point_estimate, closed)
        out.append(CheckResult(
            f"reflection 2d at gamma={g}", err <= tol,
            f"{rep.point_estimate:.4g} +- {rep.std_error:.2g} (median of means "
            f"{rep.median_of_means:.4g}) vs {closed:.4g}, rel {err:.3f}", f"rel <= {tol}"))
    return out


def check_localization(n: int = 100_000, seed: int = 0, sigmas: float = 3.0) -> list[CheckResult]:
    ts = [0.0, 0.5, 1.0, 2.0]
    region = "square(0,0,1)"
    grid = GridConfig(1.0 / 32.0)
    loc = tail_localized(region, 1.2, ts, n, Streams(seed, "localization-loc"), method="grid",
                         grid=grid)
    nai = tail_naive(region, 1.2, ts, n, Streams(seed, "localization-naive"), grid=grid)
    z0 = abs(loc.probabilities[0] - 1.0) / loc.std_errors[0]
    out = [CheckResult("localized estimator at t=0", z0 <= sigmas,
                       f"{loc.probabilities[0]:.4f} +- {loc.std_errors[0]:.2g} ({z0:.2f} SE)",
                       f"within {sigmas:g} SE of 1")]
    zs = [abs(a - b) / math.hypot(sa, sb) for a, b, sa, sb in
          zip(loc.probabilities[1:], nai.probabilities[1:], loc.std_errors[1:], nai.std_errors[1:])]
    out.append(CheckResult("localized vs naive", max(zs) <= sigmas,
                           ", ".join(f"t={t:g}: {z:.2f} SE" for t, z in zip(ts[1:], zs)),
                           f"each within {sigmas:g} joint SE"))
    return out


def localized_tail_curve(n: int, seed: int, workers: int = 1):
    ts = list(np.geomspace(64.0, 64.0 * 10 ** 2.5, 16))
    return tail_localized("disk(0,0,0.5)", 1.5, ts, n, Streams(seed, "tail-1.5", workers=workers),
                          path_cfg=_heavy_cfg(), stratified=True)


def check_tail_exponent(curve) -> list[CheckResult]:
    target = -16.0 / 9.0
    fit = fit_exponent(curve)
    err = _rel(fit.slope, target)
    return [CheckResult("tail exponent at gamma=1.5", err <= 0.07,
                        f"slope {fit.slope:.4f} +- {fit.slope_se:.2g} over {fit.n_points} points, "
                        f"rel {err:.3f}", "rel <= 0.07 of -16/9")]


def check_tail_constant(curve, n_direct: int = 200_000, seed: int = 0,
                        workers: int = 1) -> list[CheckResult]:
    g = 1.5
    area = math.pi * 0.25
    target = (1.0 - g * g / 4.0) * analytic.reflection_closed_2d(g, g) * area
    expo = 4.0 / (g * g)
    lev, _ = plateau(curve, expo)
    sd = tail_singular_direct(g, 0.5, list(curve.thresholds), n_direct,
                              Streams(seed, "singular-direct", workers=workers), _heavy_cfg(),
                              form="localized", area=area)
    lev_d, _ = plateau(sd, expo)
    return [CheckResult("tail constant (localized)", _rel(lev, target) <= 0.25,
                        f"plateau {lev:.4g} vs {target:.4g}, rel {_rel(lev, target):.3f}",
                        "rel <= 0.25"),
            CheckResult("tail constant (near-singularity sampler)", _rel(lev_d, target) <= 0.25,
                        f"plateau {lev_d:.4g} vs {target:.4g}, rel {_rel(lev_d, target):.3f}",
                        "rel <= 0.25")]


def check_annulus_scaling(n: int = 400_000, seed: int = 0, sigmas: float = 3.0
                          ) -> list[CheckResult]:
    """Mean and second-moment ratios of annulus masses A_n, n = 1, 2, 3.

    Both moments are dominated by rare large values of the radial Brownian
    motion at the inner edge of each annulus, so they are estimated by
    integrating that Gaussian factor out exactly (conditional Monte Carlo):
    E[A_n^p] = E[exp(p gamma x_a)] E[(A_n exp(-gamma x_a))^p].
    """
    g = 1.0
    # columns are A_1, A_2, A_3 over 2^-(n+1) <= |z| <= 2^-n
    raw, x0 = annulus_moment_samples(n, stream(seed, "annulus"), g, 4)
    a, x0 = raw[:, 1:], x0[:, 1:]
    lo = [math.log(2.0) * (k + 1) for k in range(3)]
    drift = (2.0 - g * g / 2.0) / g

    def factor(p: int, t: float) -> float:
        # E[exp(p g x_a)] with x_a ~ Normal(-drift a, a)
        return math.exp(0.5 * (p * g) ** 2 * t - p * g * drift * t)

    c = a * np.exp(-g * x0)
    out = []
    m1 = [mean_and_se(c[:, k]) for k in range(3)]
    for k in (1, 2):
        # delta-method SE of the ratio of means (same samples)
        lin = c[:, k] / m1[0][0] - m1[k][0] / m1[0][0] ** 2 * c[:, 0]
        scale = factor(1, lo[k]) / factor(1, lo[0])
        r, se = scale * m1[k][0] / m1[0][0], scale * mean_and_se(lin)[1]
        exact = 2.0 ** (-k * (2.0 - g * g))
        z = abs(r - exact) / se
        out.append(CheckResult(f"annulus mean ratio n={k + 1}", z <= sigmas,
                               f"{r:.5f} vs {exact:.5f} ({z:.2f} SE)", f"within {sigmas:g} SE"))
    m2 = [factor(2, lo[k]) * np.mean(c[:, k] ** 2) for k in range(3)]
    oracle = [annulus_second_moment(g, 2.0 ** -(k + 2), 2.0 ** -(k + 1)) for k in range(3)]
    for k in (1, 2):
        r, exact = m2[k] / m2[0], oracle[k] / oracle[0]
        out.append(CheckResult(f"annulus second-moment ratio n={k + 1}", _rel(r, exact) <= 0.10,
                               f"{r:.4f} vs {exact:.4f}, rel {_rel(r, exact):.3f}; "
                               f"E[A^2] {m2[k]:.4g} vs {oracle[k]:.4g}", "rel <= 0.10"))
    return out


def check_moment_identity(n: int = 1_000_000, seed: int = 0, sigmas: float = 3.0
                          ) -> list[CheckResult]:
    from .fields import sample_circle_mean_weight
    g, r = 1.0, 0.5
    w = sample_circle_mean_weight(g, 0j, r, stream(seed, "moment-identity"), n).value
    x = (r ** (2.0 - g * g) * w) ** (4.0 / (g * g) - 1.0)
    m, se = mean_and_se(x)
    z = abs(m - 1.0) / se
    return [CheckResult("moment identity", z <= sigmas, f"{m:.4f} +- {se:.2g} ({z:.2f} SE)",
                        f"within {sigmas:g} SE of 1")]


def check_boundary(n_tail: int = 100_000, n_refl: int = 1_000_000, seed: int = 0,
                   workers: int = 1) -> list[CheckResult]:
    g = 1.2
    ts = list(np.geomspace(16.0, 16.0 * 10 ** 2.5, 16))
    curve = tail_localized("interval(0,1)", g, ts, n_tail, Streams(seed, "tail-1d", workers=workers),
                           path_cfg=_heavy_cfg(), stratified=True)
    fit = fit_exponent(curve)
    target = -2.0 / (g * g)
    rep = estimate_reflection_1d(1.0, n_refl, _heavy_cfg(),
                                 Streams(seed, "reflection-1d", workers=workers))
    closed = analytic.reflection_closed_1d(1.0)
    return [CheckResult("1d tail exponent at gamma=1.2", _rel(fit.slope, target) <= 0.10,
                        f"slope {fit.slope:.4f} vs {target:.4f}, rel {_rel(fit.slope, target):.3f}",
                        "rel <= 0.10"),
            CheckResult("1d reflection at gamma=1", _rel(rep.point_estimate, closed) <= 0.15,
                        f"{rep.point_estimate:.4g} +- {rep.std_error:.2g} vs {closed:.4g}",
                        "rel <= 0.15")]


def check_neumann(n: int = 200_000, seed: int = 0, workers: int = 1) -> list[CheckResult]:
    g = 1.5
    params = ChaosParams(g)
    geometry = analytic.neumann_geometry(params, 0.5)
    target = (1.0 - g * g / 4.0) * analytic.reflection_closed_2d(g, g) * geometry
    ts = list(np.geomspace(64.0, 64.0 * 10 ** 2.5, 16))
    curve = tail_localized("disk(0,0,0.5)", g, ts, n, Streams(seed, "tail-neumann", workers=workers),
                           kernel=neumann_disk(), path_cfg=_heavy_cfg(), stratified=True)
    lev, _ = plateau(curve, 4.0 / (g * g))
    return [CheckResult("Neumann tail constant", _rel(lev, target) <= 0.30,
                        f"plateau {lev:.4g} vs {target:.4g}, rel {_rel(lev, target):.3f}",
                        "rel <= 0.30")]


# ---------------------------------------------------------------------------
# Suites


Suite = list[Callable[[], list[CheckResult]]]


def _fast(seed: int, workers: int = 1) -> Suite:
    return [check_closed_forms, check_exponent_algebra,
            lambda: check_max_law(100_000, seed),
            lambda: check_moment_identity(1_000_000, seed),
            lambda: check_williams(2000, 2000, seed),
            lambda: check_reflection(10_000, 20_000, seed, workers),
            lambda: check_localization(10_000, seed),
            lambda: check_annulus_scaling(40_000, seed)]


def _full(seed: int, workers: int = 1) -> Suite:
    curve = []

    def tail_checks():
        curve.append(localized_tail_curve(200_000, seed, workers))
        return check_tail_exponent(curve[0])

    return [check_closed_forms, check_exponent_algebra,
            lambda: check_max_law(seed=seed),
            lambda: check_williams(seed=seed),
            lambda: check_reflection(seed=seed, workers=workers),
            lambda: check_localization(seed=seed),
            tail_checks,
            lambda: check_tail_constant(curve[0], seed=seed, workers=workers),
            lambda: check_annulus_scaling(seed=seed),
            lambda: check_moment_identity(seed=seed),
            lambda: check_boundary(seed=seed, workers=workers),
            lambda: check_neumann(seed=seed, workers=workers)]


SUITES: dict[str, Callable[[int, int], Suite]] = {"fast": _fast, "full": _full}


def run_suite(suite: str, seed: int = 0, workers: int = 1,
              progress: Optional[Callable[[CheckResult], None]] = None) -> list[CheckResult]:
    """Run every check of a suite in order; ``progress`` sees each result as it lands."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)}")
    results = []
    for check in SUITES[suite](seed, workers):
        for r in check():
            results.append(r)
            if progress is not None:
                progress(r)
    return results


def format_table(results: list[CheckResult]) -> str:
    return "\n".join(r.line() for r in results) + "\n"
