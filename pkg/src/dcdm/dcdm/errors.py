"""
Exception hierarchy shared by all modules.

Every error carries a `category` (printed by the command line tool as
"error: <category>: <detail>") and an `exit_code`:

    1: validation / configuration errors (bad input, bad files).
    2: runtime / numeric errors (divergence, degenerate geometry).
    3: transport errors (the LLM endpoint could not be reached).
"""


class DcdmError(Exception):

    category = "error"
    exit_code = 2


class ValidationError(DcdmError, ValueError):

    category = "validation"
    exit_code = 1


class ShapeError(ValidationError):

    category = "shape"


class CapacityError(ValidationError):

    category = "capacity"


class FormatError(ValidationError):

    category = "format"


class LengthError(ValidationError):

    category = "length"


class ConfigError(ValidationError):

    category = "config"


class ParseError(ValidationError):

    category = "parse"


class PolicyError(ValidationError):

    category = "policy"


class LayoutError(ValidationError):

    category = "layout"


class MaskError(ValidationError):

    category = "mask"


class ScheduleError(ValidationError):

    category = "schedule"


class DcdmRuntimeError(DcdmError, RuntimeError):

    category = "runtime"
    exit_code = 2


class NumericError(DcdmRuntimeError):

    category = "numeric"


class TrainingError(DcdmRuntimeError):

    """Raised when training diverges, `step` is the offending step index."""

    category = "training"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateGeometryError(DcdmRuntimeError):

    category = "geometry"


class InternalError(DcdmRuntimeError):

    category = "internal"


class TransportError(DcdmError):

    """The chat-completion endpoint failed. `status` is the HTTP status
    code, or None for timeouts and connection failures.
    """

    category = "transport"
    exit_code = 3

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status
