"""Exception hierarchy for convlower."""


class ConvLowerError(ValueError):
    """Base class for every error raised by this package."""


class ChannelMismatch(ConvLowerError):
    pass


class UnsupportedPadding(ConvLowerError):
    pass


class ShapeMismatch(ConvLowerError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class InvalidKernel(ConvLowerError):
    pass


class InvalidDimension(ConvLowerError):
    pass


class DomainTooSmall(InvalidDimension):
    pass


class SoundnessFailure(ConvLowerError):
    """A construction produced a non-affine hidden stack on the input box."""


class AuditFailure(ConvLowerError):
    """A lowered plan violates one of its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParseError(ConvLowerError):
    """Malformed input document. ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
