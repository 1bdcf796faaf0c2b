"""Exception hierarchy shared across the package."""


class EnflocError(Exception):
    """Base class for every error raised by enfloc."""


class UnsupportedFormat(EnflocError):
    pass


class MultiChannelUnsupported(UnsupportedFormat):
    pass


class NonFiniteSamples(EnflocError):
    pass


class TooShort(EnflocError):
    """Input is shorter than the smallest unit an operation consumes."""


class EmptyOrFlatBand(EnflocError):
    pass


class InsufficientBandwidth(EnflocError):
    pass


class NoNominalEnergy(EnflocError):
    pass


class SilentSegment(EnflocError):
    pass


class NeedTwoClasses(EnflocError):
    pass


class InsufficientData(EnflocError):
    pass


class DimensionMismatch(EnflocError):
    pass


class KindUnavailable(EnflocError):
    pass


class GridMissing(EnflocError):
    pass


class CorruptModel(EnflocError):
    pass


class UnsupportedVersion(EnflocError):
    pass


class ConfigError(EnflocError):
    pass
