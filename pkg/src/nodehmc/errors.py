class HmcError(ValueError):
    """Base class for input and pipeline errors raised by this package."""


class NetworkError(HmcError):
    pass


class HierarchyError(HmcError):
    pass


class AnnotationError(HmcError):
    pass


class ResampleError(HmcError):
    pass


class LearnError(HmcError):
    pass


class EngineError(HmcError):
    pass
