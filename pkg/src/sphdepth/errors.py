"""Exception types raised across the package."""


class SphDepthError(Exception):
    """Base class for all package errors."""


class DomainError(SphDepthError, ValueError):
    """A point lies outside the domain of a projection."""


class ShapeError(SphDepthError, ValueError):
    pass


class GraphError(SphDepthError, RuntimeError):
    pass


class EmptyMaskError(SphDepthError, ValueError):
    """No valid pixel was available to average over."""


class SpecError(SphDepthError, ValueError):
    pass


class ParamError(SphDepthError, ValueError):
    pass


class EmptyDatasetError(SphDepthError, ValueError):
    pass


class FormatError(SphDepthError, ValueError):
    """A file could not be decoded."""


class AlignmentError(SphDepthError, ValueError):
    """RGB and depth rasters disagree in size."""


class SizeError(SphDepthError, ValueError):
    pass


class CheckpointError(SphDepthError, ValueError):
    """Checkpoint magic, version or parameter layout is incompatible."""


class ConfigError(SphDepthError, ValueError):
    pass
