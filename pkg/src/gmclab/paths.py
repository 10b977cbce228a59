"""Drifted Brownian paths, the split at the maximum, and conditioned paths.

Conditioned-negative paths are sampled by default with the exact radial
construction: for a 3d Brownian motion W started at 0, the process
-|W_s + nu s e_1| has the law of a Brownian motion with drift -nu conditioned
to stay negative. Post-maximum extraction from an unconditioned path and an
Euler h-transform scheme are available as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import ChaosParams, coupling_q
from .errors import DomainError, HorizonError, SamplingError
from .gmc import RingMassProcess

DEFAULT_STEP = 2.0 ** -7
CONDITIONED_METHODS = ("radial", "williams", "htransform")


@dataclass(frozen=True)
class DriftPath:
    """Path values on s = 0, h, 2h, ..., horizon (leading axes index paths)."""

    step: float
    values: np.ndarray
    drift: float
    horizon: float

    @property
    def s_grid(self) -> np.ndarray:
        return self.step * np.arange(self.values.shape[-1])

    def __len__(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class WilliamsSplit:
    """A path cut at its first maximum.

    ``pre_max`` runs backwards in time from the maximum to time 0 and is shifted
    so it starts at 0; ``post_max`` runs forward from the maximum, also shifted
    to start at 0. Both stay <= 0.
    """

    max_value: float
    argmax_time: float
    pre_max: DriftPath
    post_max: DriftPath


@dataclass(frozen=True)
class TwoSidedPath:
    """Two conditioned-negative sides glued at s = 0.

    ``negative_side.values[k]`` is the value at s = -k h.
    """

    negative_side: DriftPath
    positive_side: DriftPath

    @property
    def step(self) -> float:
        return self.positive_side.step

    def s_grid(self) -> np.ndarray:
        kn = self.negative_side.values.shape[-1]
        kp = self.positive_side.values.shape[-1]
        return self.step * np.arange(-(kn - 1), kp)

    def values(self) -> np.ndarray:
        neg = self.negative_side.values[..., ::-1]
        return np.concatenate([neg, self.positive_side.values[..., 1:]], axis=-1)


def _n_steps(horizon: float, step: float) -> int:
    if horizon <= 0 or step <= 0:
        raise DomainError("horizon and step must be positive")
    return int(round(horizon / step))


def sample_drift_bm(nu: float, horizon: float, step: float, rng: np.random.Generator,
                    n_paths: Optional[int] = None) -> DriftPath:
    """Gaussian random walk with increments Normal(-nu h, h), started at 0."""
    if nu <= 0:
        raise DomainError("nu must be positive")
    k = _n_steps(horizon, step)
    shape = (k,) if n_paths is None else (n_paths, k)
    inc = rng.standard_normal(shape) * math.sqrt(step) - nu * step
    zero = np.zeros(shape[:-1] + (1,))
    vals = np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)
    return DriftPath(step, vals, nu, k * step)


def max_rate(gamma: float, dim: int = 2) -> float:
    return 2.0 * (coupling_q(gamma, dim) - gamma)


def sample_max(gamma: float, rng: np.random.Generator, size=None, dim: int = 2) -> np.ndarray:
    """Overall maximum of B_s - (q - gamma) s: Exponential with rate 2(q - gamma)."""
    ChaosParams(gamma, dim)
    return rng.exponential(1.0 / max_rate(gamma, dim), size)


def decompose_at_max(path: DriftPath, guard: float = 0.1) -> WilliamsSplit:
    """Split a single path at its first maximum."""
    vals = np.asarray(path.values, dtype=float)
    if vals.ndim != 1:
        raise DomainError("decompose_at_max takes one path")
    k = int(np.argmax(vals))
    if len(vals) > 1 and k > (1.0 - guard) * (len(vals) - 1):
        raise HorizonError("maximum too close to the horizon")
    m = float(vals[k])
    pre = vals[k::-1] - m
    post = vals[k:] - m
    h = path.step
    return WilliamsSplit(m, k * h,
                         DriftPath(h, pre, path.drift, k * h),
                         DriftPath(h, post, path.drift, (len(vals) - 1 - k) * h))


def reassemble(split: WilliamsSplit) -> np.ndarray:
    """Inverse of :func:`decompose_at_max`."""
    m = split.max_value
    return np.concatenate([split.pre_max.values[::-1] + m, split.post_max.values[1:] + m])


# ---------------------------------------------------------------------------
# Streaming paths used by the estimators


class FreeStream:
    """Brownian motion with drift -nu, advanced step by step."""

    def __init__(self, nu: float, batch: int, rng: np.random.Generator):
        self.nu, self.rng = nu, rng
        self.x = np.zeros(batch)

    def advance(self, h: float) -> None:
        self.x = self.x + math.sqrt(h) * self.rng.standard_normal(self.x.shape) - self.nu * h

    def value(self) -> np.ndarray:
        return self.x

    def keep(self, rows) -> None:
        self.x = self.x[rows]


class RadialStream:
    """Exact conditioned-negative path: -|W_s + nu s e_1| for a 3d Brownian W."""

    def __init__(self, nu: float, batch: int, rng: np.random.Generator):
        self.nu, self.rng = nu, rng
        self.w = np.zeros((batch, 3))

    def advance(self, h: float) -> None:
        self.w = self.w + math.sqrt(h) * self.rng.standard_normal(self.w.shape)
        self.w[:, 0] += self.nu * h

    def value(self) -> np.ndarray:
        return -np.sqrt(np.einsum("ij,ij->i", self.w, self.w))

    def keep(self, rows) -> None:
        self.w = self.w[rows]


# ---------------------------------------------------------------------------
# Conditioned-negative samplers


def _radial_paths(nu: float, k: int, step: float, rng, n: int) -> np.ndarray:
    inc = rng.standard_normal((n, k, 3)) * math.sqrt(step)
    inc[:, :, 0] += nu * step
    w = np.cumsum(inc, axis=1)
    r = np.sqrt(np.einsum("ijk,ijk->ij", w, w))
    return np.concatenate([np.zeros((n, 1)), -r], axis=1)


def _williams_paths(nu: float, k: int, step: float, rng, n: int, guard: float,
                    retries: int) -> np.ndarray:
    out = np.empty((n, k + 1))
    for i in range(n):
        aux = max(2 * k, k + int(math.ceil(40.0 / (nu * nu * step))))
        for _ in range(retries):
            path = sample_drift_bm(nu, aux * step, step, rng)
            try:
                split = decompose_at_max(path, guard)
            except HorizonError:
                aux *= 2
                continue
            if len(split.post_max) >= k + 1:
                out[i] = split.post_max.values[:k + 1]
                break
            aux *= 2
        else:
            raise SamplingError(f"post-maximum extraction failed after {retries} attempts")
    return out


def _htransform_paths(nu: float, k: int, step: float, rng, n: int) -> np.ndarray:
    """Euler scheme for the drift -nu coth(nu |x|); biased at O(step)."""
    out = np.zeros((n, k + 1))
    first = _radial_paths(nu, 1, step, rng, n)[:, 1]
    out[:, 1] = first
    x = -first
    sq = math.sqrt(step)
    for j in range(2, k + 1):
        drift = nu / np.tanh(nu * np.maximum(x, 1e-12))
        x = np.abs(x + drift * step + sq * rng.standard_normal(n))
        out[:, j] = -x
    return out


def sample_conditioned_negative(nu: float, horizon: float, step: float,
                                rng: np.random.Generator, n_paths: Optional[int] = None,
                                method: str = "radial", guard: float = 0.1,
                                retries: int = 8) -> DriftPath:
    """Brownian motion with drift -nu conditioned to stay negative, on a grid."""
    if nu <= 0:
        raise DomainError("nu must be positive")
    k = _n_steps(horizon, step)
    n = 1 if n_paths is None else n_paths
    if method == "radial":
        vals = _radial_paths(nu, k, step, rng, n)
    elif method == "williams":
        vals = _williams_paths(nu, k, step, rng, n, guard, retries)
    elif method == "htransform":
        vals = _htransform_paths(nu, k, step, rng, n)
    else:
        raise DomainError(f"unknown method {method!r}; expected one of {CONDITIONED_METHODS}")
    if n_paths is None:
        vals = vals[0]
    return DriftPath(step, vals, nu, k * step)


def sample_two_sided(alpha: float, gamma: float, horizon: float, step: float,
                     rng: np.random.Generator, n_paths: Optional[int] = None,
                     dim: int = 2, method: str = "radial") -> TwoSidedPath:
    """Independent conditioned-negative sides with drift q - alpha on each side of 0."""
    q = coupling_q(gamma, dim)
    if alpha >= q:
        raise DomainError(f"alpha must be below q={q:g}, got {alpha!r}")
    nu = q - alpha
    pos = sample_conditioned_negative(nu, horizon, step, rng, n_paths, method)
    neg = sample_conditioned_negative(nu, horizon, step, rng, n_paths, method)
    return TwoSidedPath(neg, pos)


def last_level_index(side_values: np.ndarray, level: float) -> np.ndarray:
    """Last grid index at which a side is still >= -level.

    Raises HorizonError if a side ends above -level, since the last passage
    time is then not determined by the sampled horizon.
    """
    v = np.asarray(side_values)
    above = v >= -level
    if np.any(above[..., -1]):
        raise HorizonError("path did not pass below -M within the horizon")
    rev = above[..., ::-1]
    return v.shape[-1] - 1 - np.argmax(rev, axis=-1)


def weighted_integral(path: TwoSidedPath, ring: RingMassProcess, gamma: float,
                      lower_cut: float = -math.inf, rel_tol: float = 1e-3,
                      check: bool = True) -> np.ndarray:
    """Trapezoid sum of exp(gamma B_s) Z_s h over grid points s >= lower_cut.

    ``ring`` must live on the same two-sided grid as the path. With an infinite
    lower cut the whole grid is used and, if ``check`` is set, the outer tenth
    of each side must contribute less than ``rel_tol`` of the total.
    """
    s = path.s_grid()
    vals = path.values()
    if ring.z_values.shape[-1] != s.size:
        raise DomainError("ring and path grids differ")
    h = path.step
    w = np.full(s.size, h)
    w[0] = w[-1] = h / 2.0
    terms = np.exp(gamma * vals) * ring.z_values * w
    if math.isfinite(lower_cut):
        terms = terms * (s >= lower_cut - 1e-12 * h)
    total = terms.sum(axis=-1)
    if check:
        outer = s >= 0.9 * s[-1]
        if not math.isfinite(lower_cut):
            outer |= s <= 0.9 * s[0]
        tail = terms[..., outer].sum(axis=-1)
        if np.any(tail > rel_tol * total):
            raise HorizonError("outer tenth of the horizon contributes more than rel_tol")
    return total
