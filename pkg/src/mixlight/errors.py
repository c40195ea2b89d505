"""Exception hierarchy shared across the package.

Exit-code mapping lives in the CLI: ConfigError/InputError/FormatError -> 2,
OSError -> 3, NumericError -> 4.
"""


class MixlightError(Exception):
    """Base class for package errors."""


class ConfigError(MixlightError):
    """Invalid configuration (bad preset, invalid layer arithmetic, ...)."""


class InputError(MixlightError):
    """Invalid runtime input (shape mismatch, empty clip, ...)."""


class FormatError(MixlightError):
    """Malformed on-disk artifact (checkpoint, context matrix, manifest)."""


class NumericError(MixlightError):
    """Non-finite values where finite ones are required (NaN loss, ...)."""


class InternalError(MixlightError):
    """Invariant violation that should be unreachable."""


class ClipRejected(MixlightError):
    """A corpus clip cannot be built; carries a human-readable reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
