"""Discretized chaos measures and the mass queries built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .errors import DomainError
from .fields import CylinderGeometry, FieldSample, GridGeometry

RegionLike = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ChaosMeasure:
    """Nonnegative atoms, one per cell, possibly with leading sample axes."""

    geometry: Union[GridGeometry, CylinderGeometry]
    atoms: np.ndarray
    gamma: float
    provenance: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return self.geometry.points

    def total(self) -> np.ndarray:
        axes = (-1,) if isinstance(self.geometry, GridGeometry) else (-2, -1)
        return self.atoms.sum(axis=axes)


@dataclass(frozen=True)
class RingMassProcess:
    """Angular chaos mass Z_s on an s-grid.

    For gamma >= sqrt(2) the values are only meaningful as cell masses
    ``z_values * h_s``; they are never interpolated.
    """

    s_grid: np.ndarray
    z_values: np.ndarray

    @property
    def h_s(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0]) if len(self.s_grid) > 1 else 1.0

    def cell_masses(self) -> np.ndarray:
        return self.z_values * self.h_s


def cell_weights(geometry) -> Union[float, np.ndarray]:
    if isinstance(geometry, GridGeometry):
        return geometry.cell_area
    return 2.0 * math.pi / geometry.n_theta * geometry.h_s


def chaos_from_field(field_sample: FieldSample, gamma: float) -> ChaosMeasure:
    """atom = exp(gamma X - gamma^2 Var/2) * cell size."""
    if not 0.0 <= gamma < 2.0:
        raise DomainError(f"gamma must lie in [0, 2), got {gamma!r}")
    var = np.asarray(field_sample.variance, dtype=float)
    if not np.all(np.isfinite(var)):
        raise DomainError("field variance must be finite")
    atoms = np.exp(gamma * field_sample.values - 0.5 * gamma * gamma * var)
    atoms = atoms * cell_weights(field_sample.geometry)
    prov = dict(field_sample.seed_record or {})
    prov["gamma"] = gamma
    return ChaosMeasure(field_sample.geometry, atoms, gamma, prov)


def _mask(measure: ChaosMeasure, region: RegionLike) -> np.ndarray:
    return np.asarray(region(measure.points), dtype=bool)


def mass(measure: ChaosMeasure, region: RegionLike) -> np.ndarray:
    """Sum of atoms whose cell center lies in the region."""
    m = _mask(measure, region)
    if isinstance(measure.geometry, GridGeometry):
        return measure.atoms[..., m].sum(axis=-1)
    return (measure.atoms * m).sum(axis=(-2, -1))


def cell_singular_integral(v: complex, center: complex, half: float, power: float,
                           dim: int = 2) -> float:
    """Exact integral of |z - v|^(-power) over the square cell (or segment) around center.

    In the plane this is the angular integral of l(phi)^(2-power)/(2-power),
    with l the distance from v to the cell boundary in direction phi.
    """
    if dim == 1:
        if power >= 1.0:
            raise DomainError("singular weight is not integrable: gamma^2 >= 1 on a line")
        a = (center.real - half, center.real + half)
        return ((a[1] - v.real) ** (1 - power) + (v.real - a[0]) ** (1 - power)) / (1 - power)
    if power >= 2.0:
        raise DomainError("singular weight is not integrable: gamma^2 >= 2 in the plane")
    x0, x1 = center.real - half - v.real, center.real + half - v.real
    y0, y1 = center.imag - half - v.imag, center.imag + half - v.imag
    if not (x0 <= 0 <= x1 and y0 <= 0 <= y1):
        raise DomainError("v must lie in the cell")

    def ell(phi: float) -> float:
        c, s = math.cos(phi), math.sin(phi)
        tx = x1 / c if c > 0 else (x0 / c if c < 0 else math.inf)
        ty = y1 / s if s > 0 else (y0 / s if s < 0 else math.inf)
        return min(tx, ty)

    corners = sorted(math.atan2(y, x) % (2 * math.pi)
                     for x in (x0, x1) for y in (y0, y1))
    e = 2.0 - power
    val, _ = integrate.quad(lambda p: ell(p) ** e / e, 0.0, 2 * math.pi,
                            points=corners, limit=200, epsabs=0.0, epsrel=1e-11)
    return val


def singular_mass(measure: ChaosMeasure, v: complex, region: RegionLike,
                  gamma: float) -> np.ndarray:
    """Sum of atoms weighted by |center - v|^(-gamma^2) over cells in the region.

    The cell containing v uses the exact integral of the singular weight over
    the cell against its constant atom density instead of a center value.
    """
    geom = measure.geometry
    if not isinstance(geom, GridGeometry):
        raise DomainError("singular_mass needs a planar or linear grid measure")
    z = geom.nodes
    m = _mask(measure, region)
    d = np.abs(z - v)
    half = geom.epsilon
    dim = geom.dim
    if dim == 2:
        own = (np.abs(z.real - v.real) <= half) & (np.abs(z.imag - v.imag) <= half)
    else:
        own = np.abs(z.real - v.real) <= half
    g2 = gamma * gamma
    w = np.zeros_like(d)
    far = m & ~own
    w[far] = d[far] ** (-g2)
    out = (measure.atoms[..., far] * w[far]).sum(axis=-1)
    for idx in np.flatnonzero(m & own):
        if g2 == 0.0:
            factor = 1.0
        else:
            factor = cell_singular_integral(complex(v), complex(z[idx]), half, g2, dim) / geom.cell_area
        out = out + measure.atoms[..., idx] * factor
    return out


def shifted_mass(measure: ChaosMeasure, cov_row: np.ndarray, gamma: float,
                 region_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Mass after the Girsanov shift by gamma times a covariance row.

    Equals sum_c atom_c * exp(gamma^2 C[c, v]) over the region, which is the
    discrete counterpart of the singular mass used by the localization trick.
    """
    w = np.exp(gamma * gamma * np.asarray(cov_row))
    a = measure.atoms * w
    if region_mask is not None:
        a = a[..., region_mask]
    return a.sum(axis=-1)


def ring_mass_process(lateral: FieldSample, gamma: float) -> RingMassProcess:
    """Z_s as the periodic trapezoid over theta of exp(gamma Y - gamma^2 H_N/2)."""
    if not isinstance(lateral.geometry, CylinderGeometry):
        raise TypeError("ring_mass_process needs a cylinder field sample")
    dens = np.exp(gamma * lateral.values - 0.5 * gamma * gamma * lateral.variance)
    z = 2.0 * math.pi * dens.mean(axis=-1)
    return RingMassProcess(lateral.geometry.s_grid, z)


def annulus_mean_singular_mass(gamma: float, r_in: float, r_out: float) -> float:
    """Exact E of the singular mass over r_in <= |z| <= r_out (weight |z|^-gamma^2)."""
    e = 2.0 - gamma * gamma
    if e <= 0:
        raise DomainError("annulus singular mass has infinite mean for gamma^2 >= 2")
    return 2.0 * math.pi / e * (r_out ** e - r_in ** e)
