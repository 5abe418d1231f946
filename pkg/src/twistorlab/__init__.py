"""Numerical laboratory for transport twistor spaces of disk metrics.

Geodesic and thermostat flows on conformal disks, scattering relations,
the variational system along orbits, fibrewise Fourier analysis and the
Euclidean twistor model.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ConvexityViolated, DegenerateRatio, NonTransversalExit,
                     NotCircleDiffeo, NotHardy, SpectralDecayError, StepLimitExceeded, Trapped,
                     TwistorLabError)
from .geometry import BoundaryRay, ConformalFactor, ConformalMetric, PhasePoint
from .flow import LambdaField, ThermostatField, scattering, scattering_table
from .circle import FourierSeries
from .twistor import TwistorPoint

__all__ = [
    "BoundaryRay", "ConfigError", "ConformalFactor", "ConformalMetric", "ConvexityViolated",
    "DegenerateRatio", "FourierSeries", "LambdaField", "NonTransversalExit", "NotCircleDiffeo",
    "NotHardy", "PhasePoint", "SpectralDecayError", "StepLimitExceeded", "ThermostatField",
    "Trapped", "TwistorLabError", "TwistorPoint", "scattering", "scattering_table",
]
