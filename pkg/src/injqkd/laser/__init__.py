"""Injection-locked laser pair dynamics."""
from . import _backend
from .model import (
    DEFAULT_DT,
    EV,
    MASTER_DEFAULT,
    SLAVE_DEFAULT,
    FieldTrajectory,
    InjectionParams,
    IntegrationError,
    LaserParams,
    LaserState,
    PumpWaveform,
    injection_lock_residual,
    integrate,
    integrate_single,
    linear_gain,
    relax_to_bias,
    saturated_gain,
)


def backend_name() -> str:
    return _backend.name


__all__ = [
    "DEFAULT_DT", "EV", "MASTER_DEFAULT", "SLAVE_DEFAULT", "FieldTrajectory",
    "InjectionParams", "IntegrationError", "LaserParams", "LaserState",
    "PumpWaveform", "backend_name", "injection_lock_residual", "integrate",
    "integrate_single", "linear_gain", "relax_to_bias", "saturated_gain",
]
