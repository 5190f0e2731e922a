"""Exception hierarchy used across the package."""


class AFEMError(Exception):
    """Base class for all package errors."""


class TopologyError(AFEMError):
    pass


class GeometryError(AFEMError):
    pass


class RefinementError(AFEMError):
    pass


class LineageError(AFEMError):
    """Raised when two meshes are not related by nested bisection."""


class FactorizationError(AFEMError):
    pass


class ConvergenceError(AFEMError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DimensionError(AFEMError):
    pass


class SignError(AFEMError):
    pass


class ConfigError(AFEMError):
    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class AdaptError(AFEMError):
    """Eigensolver failure inside the adaptive loop; carries partial records."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records
