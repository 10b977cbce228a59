"""Closed-form quantities: exponents, reflection coefficients, tail asymptotes.

Everything here is a pure function of its arguments. Gamma-function ratios are
assembled in log space so that large exponents at small coupling do not
overflow before the final exponentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from scipy import integrate, special

from .errors import DomainError, PoleError

SQRT2 = math.sqrt(2.0)


def _check_gamma(gamma: float, upper: float = 2.0) -> float:
    g = float(gamma)
    if not (0.0 < g < upper) or math.isnan(g):
        raise DomainError(f"gamma must lie in (0, {upper:g}), got {gamma!r}")
    return g


def _is_pole(x: float) -> bool:
    return x <= 0.0 and x == math.floor(x)


def gamma_fn(x: float) -> float:
    """Euler Gamma with a typed error at the poles."""
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at {x!r}")
    return float(special.gamma(x))


def log_abs_gamma(x: float) -> tuple[float, float]:
    """Return ``(ln|Gamma(x)|, sign Gamma(x))``."""
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at {x!r}")
    return float(special.gammaln(x)), float(special.gammasgn(x))


@dataclass(frozen=True)
class ChaosParams:
    """Coupling constant and dimension, with the derived exponents."""

    gamma: float
    dim: int = 2

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise DomainError(f"dim must be 1 or 2, got {self.dim!r}")
        _check_gamma(self.gamma, SQRT2 if self.dim == 1 else 2.0)

    @property
    def q(self) -> float:
        return coupling_q(self.gamma, self.dim)

    @property
    def nu(self) -> float:
        """Drift of the radial path seen from a gamma-insertion, q - gamma."""
        return self.q - self.gamma

    @property
    def moment_power(self) -> float:
        """(2/gamma)(q - gamma): 4/gamma^2 - 1 in the plane, 2/gamma^2 - 1 on the line."""
        return 2.0 / self.gamma * (self.q - self.gamma)

    @property
    def tail_exponent(self) -> float:
        return 2.0 * self.dim / self.gamma**2

    @property
    def geometry_power(self) -> float:
        """Exponent c in the geometry weight exp(c f(v,v)) of a perturbed kernel."""
        return 2.0 * self.dim / self.gamma * (self.q - self.gamma)


@dataclass(frozen=True)
class TailAsymptote:
    """Leading-order tail P(M > t) ~ prefactor * geometry * t**(-exponent)."""

    exponent: float
    prefactor: float
    second_order_delta: Optional[float]

    def __call__(self, t: float, geometry: float = 1.0) -> float:
        return self.prefactor * geometry * t ** (-self.exponent)


def coupling_q(gamma: float, dim: int = 2) -> float:
    """gamma/2 + dim/gamma. The closed interval end gamma = 2 is allowed here."""
    g = float(gamma)
    if not (0.0 < g <= 2.0):
        raise DomainError(f"gamma must lie in (0, 2], got {gamma!r}")
    if dim not in (1, 2):
        raise DomainError(f"dim must be 1 or 2, got {dim!r}")
    return g / 2.0 + dim / g


def psi(p: float, gamma: float) -> float:
    """Moment-scaling exponent of singularity-weighted mass on dyadic annuli."""
    g2 = gamma * gamma
    return (2.0 - g2 / 2.0) * p - (g2 / 2.0) * p * p


def p_zero(gamma: float) -> float:
    """Positive root of psi(p) = -1."""
    g = _check_gamma(gamma)
    g2 = g * g
    b = (2.0 - g2 / 2.0) / g2
    p0 = math.sqrt(b * b + 2.0 / g2) + b
    if abs(psi(p0, g) + 1.0) > 1e-12 * max(1.0, p0 * p0):
        raise ArithmeticError(f"psi(p0) != -1 at gamma={g!r}")
    return p0


def second_order_delta(gamma: float) -> float:
    """Admissible bound (1 + p0 - 4/gamma^2)/(2 + p0) on the correction exponent."""
    g = _check_gamma(gamma)
    p0 = p_zero(g)
    return (1.0 + p0 - 4.0 / (g * g)) / (2.0 + p0)


def l_ratio(x: float) -> float:
    """Gamma(x)/Gamma(1 - x)."""
    if _is_pole(x) or _is_pole(1.0 - x):
        raise PoleError(f"l(x) undefined at x={x!r}")
    la, sa = log_abs_gamma(x)
    lb, sb = log_abs_gamma(1.0 - x)
    return sa * sb * math.exp(la - lb)


def log_reflection_2d(alpha: float, gamma: float) -> float:
    """Natural log of the planar reflection coefficient (which is positive)."""
    g = _check_gamma(gamma)
    q = coupling_q(g, 2)
    a = float(alpha)
    if not (g / 2.0 < a < q):
        raise DomainError(f"alpha must lie in ({g / 2:g}, {q:g}), got {alpha!r}")
    m = 2.0 / g * (q - a)
    k = g / 2.0 * (q - a)
    if k == math.floor(k):
        raise PoleError(f"Gamma(-{k:g}) is a pole at alpha={a!r}")
    ell = l_ratio(g * g / 4.0)
    lk_neg, sk_neg = log_abs_gamma(-k)
    lk, sk = log_abs_gamma(k)
    lm, sm = log_abs_gamma(m)
    sign = -sk_neg * sk * sm
    if sign <= 0.0:
        raise DomainError(f"closed form is not positive at alpha={a!r}, gamma={g!r}")
    return m * math.log(math.pi * ell) - math.log(m) + lk_neg - lk - lm


def reflection_closed_2d(alpha: float, gamma: float) -> float:
    """Planar unit-volume reflection coefficient from its Gamma-function form.

    Raises OverflowError when the value exceeds double range (very small gamma);
    use :func:`log_reflection_2d` there.
    """
    return math.exp(log_reflection_2d(alpha, gamma))


def log_reflection_1d(gamma: float) -> float:
    g = _check_gamma(gamma, SQRT2)
    g2 = g * g
    e = 2.0 / g * (coupling_q(g, 1) - g)
    lg, _ = log_abs_gamma(1.0 - g2 / 2.0)
    return e * math.log(2.0 * math.pi) - math.log(1.0 - g2 / 2.0) - (2.0 / g2) * lg


def reflection_closed_1d(gamma: float) -> float:
    """Boundary (one-dimensional) unit-volume reflection coefficient."""
    return math.exp(log_reflection_1d(gamma))


def tail_constant(params: ChaosParams) -> TailAsymptote:
    """Exponent and prefactor of the first-order tail, excluding geometry."""
    p = params.moment_power
    if params.dim == 2:
        rbar = reflection_closed_2d(params.gamma, params.gamma)
        delta: Optional[float] = second_order_delta(params.gamma)
    else:
        rbar = reflection_closed_1d(params.gamma)
        delta = None
    return TailAsymptote(params.tail_exponent, p / (p + 1.0) * rbar, delta)


def tail_asymptote(t: float, params: ChaosParams, geometry: float) -> float:
    """Leading-order approximation of P(M(O) > t).

    ``geometry`` is the area |O| for the exact log kernel, or the weighted
    integral of exp(c f(v,v)) over O for a perturbed kernel.
    """
    if not t > 0.0:
        raise DomainError(f"t must be positive, got {t!r}")
    if not geometry > 0.0:
        raise DomainError(f"geometry must be positive, got {geometry!r}")
    return tail_constant(params)(t, geometry)


def radial_geometry(params: ChaosParams, radius: float,
                    f_diag: Callable[[float], float]) -> float:
    """Integral of exp(c f(v,v)) over the centered disk of the given radius.

    ``f_diag(r)`` is the diagonal of the kernel perturbation at |v| = r.
    """
    if not radius > 0.0:
        raise DomainError(f"radius must be positive, got {radius!r}")
    c = params.geometry_power
    if params.dim == 1:
        val, _ = integrate.quad(lambda r: 2.0 * math.exp(c * f_diag(r)), 0.0, radius,
                                epsabs=0.0, epsrel=1e-12, limit=200)
    else:
        val, _ = integrate.quad(lambda r: 2.0 * math.pi * r * math.exp(c * f_diag(r)),
                                0.0, radius, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def neumann_geometry(params: ChaosParams, radius: float) -> float:
    """Geometry factor of the Neumann-perturbed kernel, f(v,v) = ln 1/(1-|v|^2)."""
    if not 0.0 < radius < 1.0:
        raise DomainError(f"radius must lie in (0, 1), got {radius!r}")
    return radial_geometry(params, radius, lambda r: -math.log1p(-r * r))
