"""Exception hierarchy shared across the package."""


class MDBAError(Exception):
    """Base class for every error raised by :mod:`mdba`."""


class ShapeError(MDBAError, ValueError):
    pass


class ClassRangeError(MDBAError, ValueError):
    pass


class RangeError(MDBAError, ValueError):
    pass


class InvalidRangeError(MDBAError, ValueError):
    pass


class SimplexError(MDBAError, ValueError):
    pass


class NumericalError(MDBAError, ArithmeticError):
    pass


# data ingestion


class DataError(MDBAError):
    """Errors caused by the dataset on disk or its records."""


class MultiTagError(DataError, ValueError):
    pass


class EmptyTagsError(DataError, ValueError):
    pass


class TagRangeError(DataError, ValueError):
    pass


class MissingFileError(DataError, FileNotFoundError):
    pass


class MalformedIndexError(DataError, ValueError):
    pass


class InvalidSpecError(MDBAError, ValueError):
    pass


# denoising


class EmptySetError(MDBAError, ValueError):
    pass


class MissingThresholdError(MDBAError, KeyError):
    pass


# training


class ConfigError(MDBAError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ScheduleExhaustedError(MDBAError, RuntimeError):
    pass


class NonFiniteLossError(NumericalError):
    def __init__(self, t, components):
        self.t = t
        self.components = dict(components)
        parts = ", ".join(f"{k}={v}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at step {t}: {parts}")
