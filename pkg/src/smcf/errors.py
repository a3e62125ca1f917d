"""Exception types raised by the simulation code."""


class SMCFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SMCFError, ValueError):
    """Invalid user configuration. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DegenerateImmersion(SMCFError):
    """The induced metric is (numerically) singular at some node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class FrameGaugeFailure(SMCFError):
    """A reference normal frame degenerated against the normal plane."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonFiniteState(SMCFError):
    """Positions contain NaN or infinite values."""


class CutLocus(SMCFError):
    """Two Gauss-map values are too far apart for a unique minimizing geodesic."""

    def __init__(self, message, node=None, max_angle=None):
        super().__init__(message)
        self.node = node
        self.max_angle = max_angle


class MetricsInequivalent(SMCFError):
    """The two induced metrics are too far from each other to be compared."""


class VanishingCurvature(SMCFError):
    """Curvature vanishes on a node, so the Hasimoto phase is undefined."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
