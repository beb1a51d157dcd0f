"""Exception hierarchy shared by every module."""


class MpdiffError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MpdiffError, ValueError):
    """An argument has the wrong shape, is non-finite, or violates a precondition."""


class InvalidPointError(InvalidInputError):
    """A point does not lie on the manifold it is supposed to belong to."""


class ConventionError(MpdiffError):
    """A stepper received a diffusion written in the wrong stochastic convention."""


class UnsupportedError(MpdiffError):
    """The requested combination (geometry, metric, drift type) is not supported."""


class InsufficientDataError(MpdiffError):
    """A diagnostic was asked for on a chain that is too short."""


class SamplingError(MpdiffError):
    """A sampler or sampling oracle could not produce a usable result."""


class ConfigError(MpdiffError):
    """Configuration text failed to parse or validate.

    ``errors`` holds every problem found as ``(path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.errors]
        super().__init__("; ".join(lines))
