"""Frequency dynamics of SG / grid-forming converter systems.

Reduced-order transfer functions, a phasor-domain nonlinear simulator,
numerical linearization with participation-factor mode classification, and
frequency-response metrics.
"""
from .components import GforParams, Load, LoadParams, SgParams, Unit
from .metrics import frequency_metrics, ringdown_fit, rocof_moving_avg
from .network import Branch, Bus, Network, solve_power_flow
from .scenarios import case1, case2, multimachine6
from .smallsignal import classify_modes, dominant, eigen, linearize, modal_analysis, participation_matrix
from .timedomain import Event, Scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "Event", "GforParams", "Load", "LoadParams", "Network", "Scenario", "SgParams",
    "Unit", "case1", "case2", "classify_modes", "dominant", "eigen", "frequency_metrics", "linearize",
    "modal_analysis", "multimachine6", "participation_matrix", "ringdown_fit", "rocof_moving_avg",
    "simulate", "solve_power_flow",
]
