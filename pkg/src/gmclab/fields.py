"""Log-correlated Gaussian fields: kernels and exact samplers.

Planar points are complex numbers. Points on the cylinder are encoded as
``s + 1j*theta``. One-dimensional points are real numbers (complex with zero
imaginary part is accepted).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import (AliasingError, CapacityError, DomainError, KernelError,
                     SingularityError)

ArrayLike = Union[complex, float, np.ndarray]

DEFAULT_CHOLESKY_LIMIT = 4096


class KernelVariant(str, enum.Enum):
    EXACT_LOG_DISK = "exact_log_disk"
    CIRCLE_MEAN = "circle_mean"
    LATERAL_CYLINDER = "lateral_cylinder"
    NEUMANN_DISK = "neumann_disk"
    PERTURBED_LOG = "perturbed_log"
    BOUNDARY_1D = "boundary_1d"


def _log_plus(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, 1.0))


@dataclass(frozen=True)
class CovarianceKernel:
    """A covariance of the form ln 1/|x-y| + (bounded part), tagged by variant.

    ``center`` and ``radius`` are used by the circle-mean variant; ``f`` is the
    symmetric perturbation of the generic perturbed variant and must accept
    numpy arrays.
    """

    variant: KernelVariant
    center: complex = 0j
    radius: float = 1.0
    f: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    @property
    def dim(self) -> int:
        return 1 if self.variant is KernelVariant.BOUNDARY_1D else 2

    def contains(self, x: ArrayLike) -> np.ndarray:
        z = np.asarray(x, dtype=complex)
        v = self.variant
        if v in (KernelVariant.EXACT_LOG_DISK, KernelVariant.PERTURBED_LOG):
            return np.abs(z) <= 1.0
        if v is KernelVariant.NEUMANN_DISK:
            return np.abs(z) < 1.0
        if v is KernelVariant.BOUNDARY_1D:
            return (z.imag == 0.0) & (np.abs(z.real) < 1.0)
        return np.isfinite(z)

    def perturbation(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        """The bounded part K(x,y) - ln 1/|x-y| (zero for the exact log kernels)."""
        zx = np.asarray(x, dtype=complex)
        zy = np.asarray(y, dtype=complex)
        v = self.variant
        if v is KernelVariant.NEUMANN_DISK:
            return -np.log(np.abs(1.0 - zx * np.conj(zy)))
        if v is KernelVariant.PERTURBED_LOG:
            return np.asarray(self.f(zx, zy), dtype=float)
        if v is KernelVariant.CIRCLE_MEAN:
            r = self.radius
            return (_log_plus(np.abs(zx - self.center) / r)
                    + _log_plus(np.abs(zy - self.center) / r) + math.log(r))
        shape = np.broadcast(zx, zy).shape
        return np.zeros(shape)

    def diag_offset(self, x: ArrayLike) -> np.ndarray:
        """Limit of K(x,y) + ln|x-y| as y -> x."""
        if self.variant is KernelVariant.LATERAL_CYLINDER:
            return np.zeros(np.shape(x))
        return self.perturbation(x, x)

    def __call__(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        return kernel_eval(self, x, y)


def exact_log_disk() -> CovarianceKernel:
    return CovarianceKernel(KernelVariant.EXACT_LOG_DISK)


def circle_mean(v: complex, r: float) -> CovarianceKernel:
    if not 0.0 < r <= 1.0:
        raise DomainError(f"circle radius must lie in (0, 1], got {r!r}")
    return CovarianceKernel(KernelVariant.CIRCLE_MEAN, center=complex(v), radius=float(r))


def lateral_cylinder() -> CovarianceKernel:
    return CovarianceKernel(KernelVariant.LATERAL_CYLINDER)


def neumann_disk() -> CovarianceKernel:
    return CovarianceKernel(KernelVariant.NEUMANN_DISK)


def perturbed_log(f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> CovarianceKernel:
    return CovarianceKernel(KernelVariant.PERTURBED_LOG, f=f)


def boundary_1d() -> CovarianceKernel:
    return CovarianceKernel(KernelVariant.BOUNDARY_1D)


KERNELS: dict[str, Callable[[], CovarianceKernel]] = {
    "exact_log_disk": exact_log_disk,
    "lateral_cylinder": lateral_cylinder,
    "neumann_disk": neumann_disk,
    "boundary_1d": boundary_1d,
}


def kernel_eval(kernel: CovarianceKernel, x: ArrayLike, y: ArrayLike) -> np.ndarray:
    """Evaluate K(x, y), broadcasting over arrays of points."""
    zx = np.asarray(x, dtype=complex)
    zy = np.asarray(y, dtype=complex)
    if kernel.variant is KernelVariant.LATERAL_CYLINDER:
        s1, t1, s2, t2 = zx.real, zx.imag, zy.real, zy.imag
        p1 = np.exp(-s1 + 1j * t1)
        p2 = np.exp(-s2 + 1j * t2)
        d = np.abs(p1 - p2)
        if np.any(d == 0.0):
            raise SingularityError("lateral kernel evaluated at coincident points")
        return np.log(np.maximum(np.exp(-s1), np.exp(-s2)) / d)
    if not (np.all(kernel.contains(zx)) and np.all(kernel.contains(zy))):
        raise DomainError(f"points outside the domain of the {kernel.variant.value} kernel")
    d = np.abs(zx - zy)
    if np.any(d == 0.0):
        raise SingularityError("log kernel evaluated at coincident points")
    return -np.log(d) + kernel.perturbation(zx, zy)


# ---------------------------------------------------------------------------
# Field samples


@dataclass(frozen=True)
class GridGeometry:
    nodes: np.ndarray
    epsilon: float
    cell_area: float
    dim: int = 2

    @property
    def points(self) -> np.ndarray:
        return self.nodes


@dataclass(frozen=True)
class CylinderGeometry:
    s_grid: np.ndarray
    n_theta: int
    n_modes: int

    @property
    def h_s(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0]) if len(self.s_grid) > 1 else 1.0

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def points(self) -> np.ndarray:
        return self.s_grid[:, None] + 1j * self.theta[None, :]


Geometry = Union[GridGeometry, CylinderGeometry]


@dataclass(frozen=True)
class FieldSample:
    """One or more field realizations.

    ``values`` has shape ``(..., n_nodes)`` on a grid and ``(..., n_s, n_theta)``
    on a cylinder; leading axes index independent samples. ``variance`` is the
    regularized pointwise variance used for chaos normalization.
    """

    geometry: Geometry
    values: np.ndarray
    variance: np.ndarray
    seed_record: Optional[dict] = None
    radial: Optional[np.ndarray] = None
    modes: Optional[np.ndarray] = None


def harmonic_number(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1)))


def gram_matrix(kernel: CovarianceKernel, nodes: np.ndarray, epsilon: float) -> np.ndarray:
    """Circle-average regularized Gram matrix.

    Off the diagonal the entries are K(x, y), which is exact for circle averages
    at radius epsilon when |x - y| >= 2 epsilon; the diagonal is
    ln(1/epsilon) + c(x) with c the bounded part of K on the diagonal.
    """
    z = np.asarray(nodes, dtype=complex).ravel()
    if not np.all(kernel.contains(z)):
        raise DomainError("grid nodes outside the kernel domain")
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, 1.0)
    if np.any(d == 0.0):
        raise DomainError("grid nodes must be pairwise distinct")
    if kernel.variant is KernelVariant.LATERAL_CYLINDER:
        p = np.exp(-z.real + 1j * z.imag)
        dp = np.abs(p[:, None] - p[None, :])
        np.fill_diagonal(dp, 1.0)
        top = np.maximum(np.exp(-z.real)[:, None], np.exp(-z.real)[None, :])
        g = np.log(top / dp)
    else:
        g = -np.log(d) + kernel.perturbation(z[:, None], z[None, :])
    np.fill_diagonal(g, math.log(1.0 / epsilon) + kernel.diag_offset(z))
    return g


class GridSampler:
    """Cholesky sampler of the regularized field at a fixed set of nodes.

    Factor once, then draw as many samples as needed. This is the exactness
    reference for the other samplers.
    """

    def __init__(self, kernel: CovarianceKernel, nodes: np.ndarray, epsilon: float,
                 cell_area: Optional[float] = None, limit: int = DEFAULT_CHOLESKY_LIMIT):
        z = np.asarray(nodes, dtype=complex).ravel()
        if len(z) > limit:
            raise CapacityError(f"{len(z)} nodes exceed the Cholesky limit {limit}")
        if epsilon <= 0.0:
            raise DomainError("epsilon must be positive")
        if len(z) > 1:
            dist = np.abs(z[:, None] - z[None, :])
            np.fill_diagonal(dist, np.inf)
            dmin = float(dist.min())
            if epsilon > dmin / 2.0 * (1.0 + 1e-12):
                raise DomainError(f"epsilon {epsilon:g} exceeds half the node spacing {dmin:g}")
        self.kernel = kernel
        self.cov = gram_matrix(kernel, z, epsilon)
        try:
            self.chol = linalg.cholesky(self.cov, lower=True)
        except linalg.LinAlgError as exc:
            raise KernelError(f"regularized Gram matrix is not positive definite: {exc}") from exc
        if cell_area is None:
            cell_area = (2.0 * epsilon) ** kernel.dim
        self.geometry = GridGeometry(z, float(epsilon), float(cell_area), kernel.dim)
        self.variance = np.diag(self.cov).copy()

    @property
    def n_nodes(self) -> int:
        return len(self.geometry.nodes)

    def from_normals(self, xi: np.ndarray) -> FieldSample:
        values = np.asarray(xi) @ self.chol.T
        return FieldSample(self.geometry, values, self.variance)

    def sample(self, rng: np.random.Generator, n_samples: Optional[int] = None,
               seed_record: Optional[dict] = None) -> FieldSample:
        shape = (self.n_nodes,) if n_samples is None else (n_samples, self.n_nodes)
        fs = self.from_normals(rng.standard_normal(shape))
        return FieldSample(fs.geometry, fs.values, fs.variance, seed_record)


def sample_grid_field(kernel: CovarianceKernel, nodes: np.ndarray, epsilon: float,
                      rng: np.random.Generator, n_samples: Optional[int] = None,
                      limit: int = DEFAULT_CHOLESKY_LIMIT) -> FieldSample:
    """Joint Gaussian sample of the regularized field at ``nodes`` via Cholesky."""
    return GridSampler(kernel, nodes, epsilon, limit=limit).sample(rng, n_samples)


# ---------------------------------------------------------------------------
# Lateral field on the cylinder


class LateralStream:
    """Exact streaming sampler of the truncated lateral field along s.

    Each Fourier mode n carries two stationary Ornstein-Uhlenbeck amplitudes
    with correlation exp(-n |s - s'|). ``advance(h)`` applies the exact
    Gaussian transition. With ``cos_only`` the field is evaluated on the two
    points theta = 0 and theta = pi, which is all a one-dimensional problem sees.
    """

    def __init__(self, n_modes: int, n_theta: int, batch: int, rng: np.random.Generator,
                 cos_only: bool = False):
        if n_modes < 1:
            raise DomainError("n_modes must be at least 1")
        if not cos_only and n_theta < 4 * n_modes:
            raise AliasingError(f"n_theta={n_theta} < 4 * n_modes={4 * n_modes}")
        self.n_modes = n_modes
        self.n_theta = 2 if cos_only else n_theta
        self.cos_only = cos_only
        self.rng = rng
        n = np.arange(1, n_modes + 1)
        self._n = n.astype(float)
        self.h_n = float(np.sum(1.0 / n))
        scale = 1.0 / np.sqrt(n)
        if cos_only:
            theta = np.array([0.0, math.pi])
            self._basis = scale[:, None] * np.cos(np.outer(n, theta))
            self.amps = rng.standard_normal((batch, n_modes))
        else:
            theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
            self._basis = np.concatenate([scale[:, None] * np.cos(np.outer(n, theta)),
                                          scale[:, None] * np.sin(np.outer(n, theta))])
            self.amps = rng.standard_normal((batch, 2 * n_modes))
        self._h = None

    @property
    def batch(self) -> int:
        return self.amps.shape[0]

    def advance(self, h: float) -> None:
        if h != self._h:
            rho = np.exp(-self._n * h)
            sd = np.sqrt(-np.expm1(-2.0 * self._n * h))
            if not self.cos_only:
                rho = np.concatenate([rho, rho])
                sd = np.concatenate([sd, sd])
            self._rho, self._sd, self._h = rho, sd, h
        self.amps = self._rho * self.amps + self._sd * self.rng.standard_normal(self.amps.shape)

    def values(self) -> np.ndarray:
        """Field values, shape ``(batch, n_theta)``."""
        return self.amps @ self._basis

    def chaos_density(self, gamma: float) -> np.ndarray:
        """exp(gamma Y - gamma^2 H_N / 2) at each angular node."""
        return np.exp(gamma * self.values() - 0.5 * gamma * gamma * self.h_n)

    def ring_mass(self, gamma: float) -> np.ndarray:
        """Z at the current height: 2 pi times the angular mean (sum of both points in 1d)."""
        dens = self.chaos_density(gamma)
        if self.cos_only:
            return dens.sum(axis=1)
        return 2.0 * math.pi * dens.mean(axis=1)

    def state(self) -> np.ndarray:
        return self.amps.copy()

    def set_state(self, amps: np.ndarray) -> None:
        self.amps = np.array(amps, copy=True)

    def keep(self, rows: np.ndarray) -> None:
        self.amps = self.amps[rows]


def sample_lateral_field(n_modes: int, s_grid, n_theta: int, rng: np.random.Generator,
                         n_samples: Optional[int] = None) -> FieldSample:
    """Truncated lateral field Y_N on an s-grid times a uniform theta-grid."""
    s = np.asarray(s_grid, dtype=float)
    if s.size == 0:
        raise DomainError("s_grid is empty")
    if np.any(np.diff(s) < 0):
        raise DomainError("s_grid must be sorted")
    batch = 1 if n_samples is None else n_samples
    eng = LateralStream(n_modes, n_theta, batch, rng)
    out = np.empty((batch, s.size, n_theta))
    amps = np.empty((batch, s.size, 2 * n_modes))
    for k in range(s.size):
        if k > 0 and s[k] > s[k - 1]:
            eng.advance(s[k] - s[k - 1])
        out[:, k] = eng.values()
        amps[:, k] = eng.amps
    geom = CylinderGeometry(s, n_theta, n_modes)
    var = np.full((s.size, n_theta), eng.h_n)
    if n_samples is None:
        out, amps = out[0], amps[0]
    return FieldSample(geom, out, var, modes=amps)


def disk_field_polar(n_modes: int, s_max: float, h_s: float, n_theta: int,
                     rng: np.random.Generator, n_samples: Optional[int] = None) -> FieldSample:
    """Field around a point in log-polar coordinates: B_s + Y(s, theta).

    B is a standard Brownian motion from 0, independent of the lateral part Y.
    At radius r e^{-s} around v this has the law of X^{v,r}(v + r e^{-s} e^{i theta}).
    """
    if s_max <= 0.0 or h_s <= 0.0:
        raise DomainError("s_max and h_s must be positive")
    k = int(round(s_max / h_s))
    s = h_s * np.arange(k + 1)
    lat = sample_lateral_field(n_modes, s, n_theta, rng, n_samples)
    batch = 1 if n_samples is None else n_samples
    inc = rng.standard_normal((batch, k)) * math.sqrt(h_s)
    radial = np.concatenate([np.zeros((batch, 1)), np.cumsum(inc, axis=1)], axis=1)
    if n_samples is None:
        radial = radial[0]
    values = lat.values + radial[..., None]
    var = lat.variance + s[:, None]
    return FieldSample(lat.geometry, values, var, radial=radial, modes=lat.modes)


# ---------------------------------------------------------------------------
# Circle-mean weight


@dataclass(frozen=True)
class CircleMeanWeight:
    v: complex
    r: float
    value: np.ndarray


def sample_circle_mean_weight(gamma: float, v: complex, r: float, rng: np.random.Generator,
                              size: Optional[int] = None) -> CircleMeanWeight:
    """exp(gamma N - gamma^2 Var(N)/2) with N ~ Normal(0, -ln r)."""
    if not 0.0 < r <= 1.0:
        raise DomainError(f"r must lie in (0, 1], got {r!r}")
    var = -math.log(r)
    n = rng.standard_normal(size) * math.sqrt(var)
    return CircleMeanWeight(complex(v), float(r), np.exp(gamma * n - 0.5 * gamma * gamma * var))
