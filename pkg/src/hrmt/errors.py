"""Exception hierarchy shared by the library and the CLI."""


class HrmtError(Exception):
    """Base class for all errors raised by hrmt."""


class DomainError(HrmtError, ValueError):
    """An argument lies outside the domain of an operation."""


class SolverError(HrmtError, RuntimeError):
    """The dense eigensolver failed; carries the seed of the offending matrix."""

    def __init__(self, message, seed=None, stream_index=None):
        super().__init__(message)
        self.seed = seed
        self.stream_index = stream_index


class EstimatorError(HrmtError, ValueError):
    """Not enough data for a Monte Carlo estimator."""


class PrecisionError(HrmtError, ValueError):
    """A discretization is too coarse for the requested accuracy."""


class ConfigError(HrmtError, ValueError):
    """Configuration validation failed; ``errors`` lists every offending field."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
