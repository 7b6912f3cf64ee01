"""Parallel trusted-node key relay over independent QKD satellites."""

from .keycore import (
    KeyMaterial,
    ParityRecord,
    compute_parity,
    derive_final_key,
    recover_final_peer_key,
    recover_peer_key,
    xor,
)
from .scenario import ScenarioConfig, load_scenario, validate_scenario
from .simnet import build_schedule, run

__version__ = "0.1.0"

__all__ = [
    "KeyMaterial",
    "ParityRecord",
    "ScenarioConfig",
    "build_schedule",
    "compute_parity",
    "derive_final_key",
    "load_scenario",
    "recover_final_peer_key",
    "recover_peer_key",
    "run",
    "validate_scenario",
    "xor",
]
