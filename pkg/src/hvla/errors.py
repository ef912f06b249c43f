"""Exception hierarchy shared by every module."""


class HvlaError(Exception):
    """Base class; ``code`` is the machine-readable class name printed by the CLI."""

    code = "error"


class ShapeError(HvlaError, ValueError):
    code = "shape"


class InsufficientLengthError(ShapeError):
    code = "insufficient-length"


class FormatError(HvlaError, ValueError):
    code = "format"


class BadMagicError(FormatError):
    code = "bad-magic"


class VersionMismatchError(FormatError):
    code = "version-mismatch"


class TruncatedError(FormatError):
    code = "truncated"


class VocabError(HvlaError, ValueError):
    code = "vocab"


class TemplateError(HvlaError, ValueError):
    code = "template"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(HvlaError, FloatingPointError):
    code = "numeric"


class DivergenceError(NumericError):
    code = "numeric-divergence"

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class DegenerateError(HvlaError, ValueError):
    code = "degenerate"


class FrozenViolationError(HvlaError, AssertionError):
    code = "frozen-violation"


class ConfigError(HvlaError, ValueError):
    code = "config-schema"


class MissingArtifactError(HvlaError, FileNotFoundError):
    code = "missing-artifact"
