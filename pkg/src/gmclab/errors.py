"""Typed exceptions shared across the package."""


class GmcLabError(Exception):
    """Base class for every error raised by gmclab."""


class DomainError(GmcLabError, ValueError):
    """An argument lies outside the range where the quantity is defined."""


class PoleError(DomainError):
    """A Gamma function in a closed form hits one of its poles."""


class SingularityError(DomainError):
    """A log-singular kernel was evaluated on the diagonal."""


class KernelError(GmcLabError):
    """A regularized Gram matrix failed to factor."""


class CapacityError(GmcLabError):
    """A dense sampler was asked for more nodes than its configured limit."""


class AliasingError(DomainError):
    """The angular grid is too coarse for the requested number of modes."""


class HorizonError(GmcLabError):
    """A truncated path integral or path split did not stabilize in time."""


class SamplingError(GmcLabError):
    """A sampler gave up after its bounded number of retries."""


class FitError(GmcLabError):
    """Not enough usable points for a regression."""


class ConfigError(GmcLabError):
    """An experiment configuration failed validation.

    ``problems`` holds one message per failing field.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
