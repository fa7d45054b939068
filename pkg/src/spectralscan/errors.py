"""Exception hierarchy shared by every stage of the pipeline."""


class SpectralScanError(Exception):
    """Base class for all package errors."""


class PpmParseError(SpectralScanError):
    """Malformed PPM input; carries the byte offset where parsing failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(SpectralScanError):
    pass


class ShapeError(SpectralScanError):
    pass


class ArgumentError(SpectralScanError):
    pass


class DegenerateGraphError(SpectralScanError):
    """Graph with an isolated node; carries the offending node index."""

    def __init__(self, node):
        super().__init__(f"node {node} is isolated (zero degree)")
        self.node = node


class ConvergenceError(SpectralScanError):
    """Eigensolver failed to converge; carries the best residuals seen."""

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


class DegenerateVectorError(SpectralScanError):
    pass


class NumericError(SpectralScanError):
    """Non-finite value produced during a scan; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class WeightFormatError(SpectralScanError):
    pass


class ConfigError(SpectralScanError):
    pass
