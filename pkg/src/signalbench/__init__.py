"""Four-arm intersection benchmark for traffic-signal control policies."""

from .sim import Arm, Movement, PhaseDirective, SimConfig, new_simulation, step
from .traffic import GenConfig, Scenario, generate_routes

__version__ = "0.1.0"

__all__ = ["Arm", "Movement", "PhaseDirective", "SimConfig", "new_simulation", "step",
           "GenConfig", "Scenario", "generate_routes"]
