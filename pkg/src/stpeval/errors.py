"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`STPEvalError`.
Each concrete class also inherits the closest builtin so callers that only know
``ValueError``/``OSError`` still catch them. ``exit_code`` is what the CLI
returns when the error escapes a command.
"""


class STPEvalError(Exception):
    exit_code = 3


# configuration (exit 2)
class ConfigError(STPEvalError, ValueError):
    exit_code = 2


# data errors (exit 3)
class FormatError(STPEvalError, ValueError):
    pass


class UnsupportedLayout(FormatError):
    pass


class ShapeError(STPEvalError, ValueError):
    pass


class RangeError(STPEvalError, IndexError):
    pass


class DomainError(STPEvalError, ValueError):
    pass


class DegenerateFrameError(STPEvalError, ZeroDivisionError):
    pass


class DegenerateAnomalyError(STPEvalError, ZeroDivisionError):
    pass


class DegenerateSeriesError(STPEvalError, ZeroDivisionError):
    pass


class SampleError(STPEvalError, ValueError):
    pass


class SpectrumError(STPEvalError, ValueError):
    pass


class CoverageError(STPEvalError, LookupError):
    pass


class EmptyDatasetError(STPEvalError, ValueError):
    pass


class IoError(STPEvalError, OSError):
    pass


# predictor broke its contract (exit 4)
class ContractError(STPEvalError, RuntimeError):
    exit_code = 4
