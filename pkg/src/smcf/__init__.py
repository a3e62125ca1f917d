"""Numerical toolkit for the skew mean curvature flow of codimension-two immersions."""

from .errors import (
    ConfigurationError,
    CutLocus,
    DegenerateImmersion,
    FrameGaugeFailure,
    MetricsInequivalent,
    NonFiniteState,
    SMCFError,
    VanishingCurvature,
)
from .flow import FlowConfig, FlowTrace, run, step, velocity
from .geometry import EnergyReport, GeometryCache, ImmersionState, PeriodicGrid, energy

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "CutLocus",
    "DegenerateImmersion",
    "EnergyReport",
    "FlowConfig",
    "FlowTrace",
    "FrameGaugeFailure",
    "GeometryCache",
    "ImmersionState",
    "MetricsInequivalent",
    "NonFiniteState",
    "PeriodicGrid",
    "SMCFError",
    "VanishingCurvature",
    "energy",
    "run",
    "step",
    "velocity",
]
