"""Exception types shared across modules."""


class ShapeError(ValueError):
    pass


class FormatError(ValueError):
    """A persisted file could not be decoded."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ConfigError(ValueError):
    pass
