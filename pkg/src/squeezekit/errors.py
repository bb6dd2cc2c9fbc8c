"""Exception types shared across the package."""


class SqueezekitError(Exception):
    """Base class for all package errors."""


class InvalidConfig(SqueezekitError):
    """Model or policy configuration violates a precondition."""


class SequenceTooLong(SqueezekitError):
    pass


class EmptyTextSpan(SqueezekitError):
    pass


class UnknownTaskKind(SqueezekitError):
    pass


class ConfigError(SqueezekitError):
    """Incompatible policy component combination."""


class ShapeMismatch(SqueezekitError):
    pass


class MissingBaseline(SqueezekitError):
    """A metric ratio was requested for a cell with no baseline record."""


class UndefinedMetric(SqueezekitError):
    """A metric's preconditions (positivity, plurality) do not hold."""


class TraceFormatError(SqueezekitError):
    """Malformed trace file header or payload."""
