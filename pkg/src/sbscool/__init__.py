"""Laser-free sympathetic cooling of trapped ions by engineered two-ion collisions."""

__version__ = "0.1.0"

from .errors import ConfigError, InputFileError, IntegrationError, SynthesisError, ValidationError
from .units import CollisionConfig, IonSpecies, UnitSystem, characteristic_length, load_config
from .ansatz import AnsatzSpec, AuxiliaryTrajectory, eval_b, sample_trajectory
from .synthesis import Waveform, resolve_process_time, synthesize_combine, synthesize_sbs
from .gaussian import invariant_prediction, simulate_waveform
from .protocol import plan_pair_protocol, simulate_protocol

__all__ = [
    "AnsatzSpec",
    "AuxiliaryTrajectory",
    "CollisionConfig",
    "ConfigError",
    "InputFileError",
    "IntegrationError",
    "IonSpecies",
    "SynthesisError",
    "UnitSystem",
    "ValidationError",
    "Waveform",
    "characteristic_length",
    "eval_b",
    "invariant_prediction",
    "load_config",
    "plan_pair_protocol",
    "resolve_process_time",
    "sample_trajectory",
    "simulate_protocol",
    "simulate_waveform",
    "synthesize_combine",
    "synthesize_sbs",
]
