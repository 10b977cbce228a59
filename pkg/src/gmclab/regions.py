"""Region primitives used by measures and tail estimators.

Config files name regions as ``disk(cx,cy,r)``, ``square(cx,cy,side)``,
``annulus(cx,cy,r1,r2)`` or ``interval(a,b)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

STRATA_PER_AXIS = 4


class Region:
    dim: int = 2

    def contains(self, z) -> np.ndarray:
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Measure-preserving map from the unit square (or interval) onto the region."""
        raise NotImplementedError

    def ray_length(self, v: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Distance from v to the boundary along direction theta (star-shaped regions)."""
        raise DomainError(f"{self} does not support ray queries")

    def spec(self) -> str:
        raise NotImplementedError

    def __call__(self, z) -> np.ndarray:
        return self.contains(z)

    def sample_uniform(self, rng: np.random.Generator, n: int,
                       stratified: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Uniform points and their stratum labels.

        With ``stratified`` the unit cube is cut into 4 x 4 equal cells (16 in
        one dimension) and samples are dealt to strata round-robin.
        """
        if stratified:
            k = STRATA_PER_AXIS ** 2
            labels = np.arange(n) % k
            if self.dim == 1:
                u = (labels + rng.random(n)) / k
            else:
                i, j = labels // STRATA_PER_AXIS, labels % STRATA_PER_AXIS
                u = np.stack([(i + rng.random(n)) / STRATA_PER_AXIS,
                              (j + rng.random(n)) / STRATA_PER_AXIS], axis=-1)
        else:
            labels = np.zeros(n, dtype=int)
            u = rng.random(n) if self.dim == 1 else rng.random((n, 2))
        return self.from_unit(u), labels

    def grid_nodes(self, spacing: float) -> np.ndarray:
        """Centers of the square lattice cells of side ``spacing`` lying in the region."""
        x0, x1, y0, y1 = self.bbox
        xs = np.arange(x0 + spacing / 2.0, x1, spacing)
        if self.dim == 1:
            z = xs.astype(complex)
        else:
            ys = np.arange(y0 + spacing / 2.0, y1, spacing)
            z = (xs[None, :] + 1j * ys[:, None]).ravel()
        return z[self.contains(z)]


@dataclass(frozen=True)
class Disk(Region):
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise DomainError("disk radius must be positive")

    @property
    def center(self) -> complex:
        return complex(self.cx, self.cy)

    def contains(self, z):
        return np.abs(np.asarray(z, dtype=complex) - self.center) < self.r

    @property
    def area(self):
        return math.pi * self.r ** 2

    @property
    def bbox(self):
        return (self.cx - self.r, self.cx + self.r, self.cy - self.r, self.cy + self.r)

    def from_unit(self, u):
        rad = self.r * np.sqrt(u[..., 0])
        return self.center + rad * np.exp(2j * math.pi * u[..., 1])

    def ray_length(self, v, theta):
        w = np.asarray(v, dtype=complex) - self.center
        d = np.exp(1j * np.asarray(theta))
        b = (w * np.conj(d)).real
        return -b + np.sqrt(np.maximum(b * b + self.r ** 2 - np.abs(w) ** 2, 0.0))

    def spec(self):
        return f"disk({self.cx:g},{self.cy:g},{self.r:g})"


@dataclass(frozen=True)
class Square(Region):
    cx: float
    cy: float
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise DomainError("square side must be positive")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        h = self.side / 2.0
        return (np.abs(z.real - self.cx) < h) & (np.abs(z.imag - self.cy) < h)

    @property
    def area(self):
        return self.side ** 2

    @property
    def bbox(self):
        h = self.side / 2.0
        return (self.cx - h, self.cx + h, self.cy - h, self.cy + h)

    def from_unit(self, u):
        x0, _, y0, _ = self.bbox
        return (x0 + self.side * u[..., 0]) + 1j * (y0 + self.side * u[..., 1])

    def ray_length(self, v, theta):
        v = np.asarray(v, dtype=complex)
        th = np.asarray(theta)
        ux, uy = np.cos(th), np.sin(th)
        h = self.side / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(ux > 0, (self.cx + h - v.real) / ux,
                          np.where(ux < 0, (self.cx - h - v.real) / ux, np.inf))
            ty = np.where(uy > 0, (self.cy + h - v.imag) / uy,
                          np.where(uy < 0, (self.cy - h - v.imag) / uy, np.inf))
        return np.minimum(tx, ty)

    def spec(self):
        return f"square({self.cx:g},{self.cy:g},{self.side:g})"


@dataclass(frozen=True)
class Annulus(Region):
    cx: float
    cy: float
    r1: float
    r2: float

    def __post_init__(self):
        if not 0 <= self.r1 < self.r2:
            raise DomainError("annulus needs 0 <= r1 < r2")

    @property
    def center(self) -> complex:
        return complex(self.cx, self.cy)

    def contains(self, z):
        d = np.abs(np.asarray(z, dtype=complex) - self.center)
        return (d >= self.r1) & (d <= self.r2)

    @property
    def area(self):
        return math.pi * (self.r2 ** 2 - self.r1 ** 2)

    @property
    def bbox(self):
        return (self.cx - self.r2, self.cx + self.r2, self.cy - self.r2, self.cy + self.r2)

    def from_unit(self, u):
        rad = np.sqrt(self.r1 ** 2 + (self.r2 ** 2 - self.r1 ** 2) * u[..., 0])
        return self.center + rad * np.exp(2j * math.pi * u[..., 1])

    def spec(self):
        return f"annulus({self.cx:g},{self.cy:g},{self.r1:g},{self.r2:g})"


@dataclass(frozen=True)
class Interval(Region):
    a: float
    b: float
    dim = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError("interval needs a < b")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return (z.real > self.a) & (z.real < self.b) & (z.imag == 0.0)

    @property
    def area(self):
        return self.b - self.a

    @property
    def bbox(self):
        return (self.a, self.b, 0.0, 0.0)

    def from_unit(self, u):
        return (self.a + (self.b - self.a) * np.asarray(u)).astype(complex)

    def ray_length(self, v, theta):
        v = np.asarray(v, dtype=complex).real
        th = np.asarray(theta)
        return np.where(np.cos(th) > 0, self.b - v, v - self.a)

    def spec(self):
        return f"interval({self.a:g},{self.b:g})"


class Everything(Region):
    def contains(self, z):
        return np.ones(np.shape(z), dtype=bool)

    def spec(self):
        return "everything"


class Nothing(Region):
    def contains(self, z):
        return np.zeros(np.shape(z), dtype=bool)

    def spec(self):
        return "nothing"


_REGION_TYPES = {"disk": (Disk, 3), "square": (Square, 3), "annulus": (Annulus, 4),
                 "interval": (Interval, 2)}
_REGION_RE = re.compile(r"^\s*([a-z]+)\s*\(([^)]*)\)\s*$")


def parse_region(text: str) -> Region:
    """Parse a named primitive such as ``disk(0,0,0.5)``."""
    m = _REGION_RE.match(text or "")
    if not m or m.group(1) not in _REGION_TYPES:
        raise DomainError(f"unknown region {text!r}; expected one of "
                          + ", ".join(f"{k}(...)" for k in _REGION_TYPES))
    cls, arity = _REGION_TYPES[m.group(1)]
    try:
        args = [float(a) for a in m.group(2).split(",")]
    except ValueError as exc:
        raise DomainError(f"bad region arguments in {text!r}") from exc
    if len(args) != arity:
        raise DomainError(f"{m.group(1)} takes {arity} arguments, got {len(args)}")
    return cls(*args)


def region_diameter(region: Region) -> float:
    if isinstance(region, Disk):
        return 2.0 * region.r
    if isinstance(region, Annulus):
        return 2.0 * region.r2
    x0, x1, y0, y1 = region.bbox
    return math.hypot(x1 - x0, y1 - y0)


def max_ray(region: Region, v: np.ndarray, n_theta: int = 256) -> np.ndarray:
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    return np.max(region.ray_length(np.asarray(v)[..., None], theta), axis=-1)


def as_region(obj: "Region | str | None") -> Optional[Region]:
    if obj is None or isinstance(obj, Region):
        return obj
    return parse_region(obj)
