"""Exception hierarchy. Every error carries a short ``category`` used by the CLI."""


class KGError(Exception):
    category = "error"


class ParseError(KGError, ValueError):
    category = "parse"


class FormatError(KGError, ValueError):
    category = "format"


class KGIndexError(KGError, IndexError):
    category = "index"


class DataError(KGError, ValueError):
    category = "data"


class ShapeError(KGError, ValueError):
    category = "shape"


class ConfigError(KGError, ValueError):
    category = "config"


class ProtocolError(KGError, RuntimeError):
    category = "protocol"


class ExhaustionError(KGError, RuntimeError):
    category = "exhaustion"


class DegenerateInputError(KGError, ValueError):
    category = "degenerate"


class NumericError(KGError, FloatingPointError):
    category = "numeric"


class DivergenceError(NumericError):
    """Training hit a non-finite loss. ``params``/``log`` hold the last good state."""

    category = "divergence"

    def __init__(self, message, params=None, log=None):
        super().__init__(message)
        self.params = params
        self.log = log
