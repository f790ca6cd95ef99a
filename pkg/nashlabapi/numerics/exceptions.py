"""Exceptions raised by the numerical core"""


class NashlabError(Exception):
    """Base class for every error raised by nashlab"""


class ConfigurationError(NashlabError):
    """Invalid dimensions, graph, schedule, algorithm combination or config document

    Arguments:
        message {str} -- Human readable description
        path {str} -- Dotted key path of the offending config entry, if any
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class UnsupportedOperationError(NashlabError):
    """Operation needs something the game does not provide (e.g. an exact oracle)"""


class NumericalError(NashlabError):
    """A NaN or Inf showed up in an update"""

    def __init__(self, iteration, block, record=None):
        self.iteration = iteration
        self.block = block
        self.record = record
        super().__init__(f"non-finite value in {block} update at iteration {iteration}")


class DivergenceError(NashlabError):
    """The monitored metric crossed the divergence threshold

    The partial run record is kept on the exception so the caller can persist it.
    """

    def __init__(self, iteration, value, threshold, record=None):
        self.iteration = iteration
        self.value = value
        self.record = record
        super().__init__(
            f"run diverged at iteration {iteration}: metric {value:.3e} > {threshold:.1e}"
        )


class ConvergenceError(NashlabError):
    """A reference run did not reach its tolerance within the iteration budget"""
