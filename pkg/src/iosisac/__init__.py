"""IOS-assisted sensing-aided vehicular communication toolkit.

Subpackages cover array geometry and surface phase profiles, vehicle
kinematics with Kalman beam tracking, closed-form rate/SNR expressions,
resource-allocation solvers, Monte Carlo validation oracles, and the
trajectory simulation harness with its CLI.
"""

from iosisac.geometry import ArrayConfig, LinkGeometry, PhaseProfile, fejer_kernel
from iosisac.kinematics import KinematicState, NoiseModel, TrackState
from iosisac.closedform import LinkBudget, SeriesParams
from iosisac.optimizer import SlotAllocation, SolverSettings
from iosisac.montecarlo import McConfig, ValidationReport
from iosisac.harness import ScenarioConfig, RunReport, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "LinkGeometry",
    "PhaseProfile",
    "fejer_kernel",
    "KinematicState",
    "NoiseModel",
    "TrackState",
    "LinkBudget",
    "SeriesParams",
    "SlotAllocation",
    "SolverSettings",
    "McConfig",
    "ValidationReport",
    "ScenarioConfig",
    "RunReport",
    "run_trajectory",
]
