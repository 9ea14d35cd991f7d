"""Exception hierarchy shared by every tailstop module."""


class TailstopError(ValueError):
    """Base class for all errors raised by tailstop."""


class IngestError(TailstopError):
    """A log file could not be parsed.

    ``line`` is the 1-based physical line number of the offending row,
    or ``None`` when the problem is not tied to a single row.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DeltaMismatchError(IngestError):
    """A row's delta column disagrees with |cost_a - cost_b|."""


class EmptyLogError(TailstopError):
    """An operation that needs samples was given none."""


class DegenerateTailError(TailstopError):
    """The top-k deltas have zero mean, so their CV is undefined."""


class TooFewExceedancesError(TailstopError):
    pass


class NoValidThresholdError(TailstopError):
    pass


class FitError(TailstopError):
    """Likelihood optimisation failed or the data are infeasible."""


class BootstrapError(TailstopError):
    pass


class SpecError(TailstopError):
    """An experiment spec is malformed. ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
