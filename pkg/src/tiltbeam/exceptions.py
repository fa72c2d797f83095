"""Exception hierarchy.

Validation problems (bad inputs, ill-formed models, unusable data files)
raise ``DomainError`` / ``ModelError`` / ``ConfigError`` / ``IngestError``;
numerical failures raise ``NumericError`` or one of its subclasses.  The CLI
maps the first group to exit code 2 and the second to exit code 3.
"""


class TiltBeamError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TiltBeamError, ValueError):
    """An argument lies outside its documented domain."""


class ModelError(TiltBeamError):
    """The structural model is unusable (mechanism, wrong solver route)."""


class ConfigError(TiltBeamError):
    """Config file failed to parse or validate.

    ``messages`` collects every problem found, each prefixed with its
    section/key location, so one run reports all defects at once.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class IngestError(TiltBeamError):
    """Measurement files could not be turned into a usable dataset."""


class NumericError(TiltBeamError):
    """A numerical operation failed (NaN forward value, step underflow)."""


class IdentifiabilityError(NumericError):
    """Posterior/information matrix is singular or indefinite.

    ``null_directions`` holds an orthonormal basis (columns) of the
    unidentified subspace when it could be computed.
    """

    def __init__(self, message, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions


class SweepError(TiltBeamError):
    """Too many failed replicates inside a Monte-Carlo sweep."""
