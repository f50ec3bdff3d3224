"""midair: recover thrown quadrotors with no prior control parameters.

The stack excites the motors under a gyro-saturation guard, fits the 52
control parameters by recursive least squares within the 450 ms excitation
window, tunes the cascade gains by pole placement, and flies the vehicle to
a setpoint -- all against a built-in randomized rigid-body simulator driven
by a seeded Monte-Carlo harness.
"""

from .campaign import CampaignSummary, run_campaign
from .config import EpisodeConfig, config_from_ini, config_to_ini
from .dynamics import (GRAVITY, GYRO_LIMIT, RigidBodyState, SensorNoise,
                       SensorSample, VehicleParams, VehicleRanges,
                       randomize_vehicle, sample_sensors, spawn_throw,
                       step_dynamics, true_effectiveness)
from .episode import EpisodeReport, run_episode
from .ident import ControlParams

__all__ = [
    "CampaignSummary", "ControlParams", "EpisodeConfig", "EpisodeReport",
    "GRAVITY", "GYRO_LIMIT", "RigidBodyState", "SensorNoise", "SensorSample",
    "VehicleParams", "VehicleRanges", "config_from_ini", "config_to_ini",
    "randomize_vehicle", "run_campaign", "run_episode", "sample_sensors",
    "spawn_throw", "step_dynamics", "true_effectiveness",
]
