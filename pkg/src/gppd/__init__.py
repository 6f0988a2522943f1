"""Pumped, damped Gross-Pitaevskii dynamics in a harmonic trap.

Ground states, pump/damping balance, the perturbative solitary wave and its
fixed-point correction, and a split-step time integrator.
"""

__version__ = "0.1.0"

from .discretization import Field, GridSpec, build_grid  # noqa: E402
from .errors import ConvergenceError, GPPDError, GridError, IntegrationError, RegimeError  # noqa: E402
from .pumpbalance import PumpProfile, find_balanced_mass  # noqa: E402

__all__ = ["Field", "GridSpec", "build_grid", "PumpProfile", "find_balanced_mass", "GPPDError", "GridError",
           "ConvergenceError", "RegimeError", "IntegrationError", "__version__"]
