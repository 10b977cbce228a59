"""Monte Carlo and closed-form tools for tails of Gaussian multiplicative chaos."""

from .analytic import (ChaosParams, TailAsymptote, coupling_q, l_ratio, neumann_geometry,
                       p_zero, psi, radial_geometry, reflection_closed_1d, reflection_closed_2d,
                       second_order_delta, tail_asymptote, tail_constant)
from .errors import (AliasingError, CapacityError, ConfigError, DomainError, FitError,
                     GmcLabError, HorizonError, KernelError, PoleError, SamplingError,
                     SingularityError)
from .estimators import (EstimateReport, GridConfig, PathConfig, TailCurve,
                         estimate_reflection_1d, estimate_reflection_2d, fit_exponent, plateau,
                         sample_quantum_sphere, tail_localized, tail_naive, tail_singular_direct)
from .fields import CovarianceKernel, KernelVariant
from .regions import Annulus, Disk, Interval, Square, parse_region
from .rng import Streams, stream

__version__ = "0.1.0"
