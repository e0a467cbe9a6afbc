"""Flat JSON run configuration with strict key checking.

Every key has a default, so an empty config reproduces the reference
laser and QKD-system parameters. Units are carried in the key names.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import DriveLevels, EncodingTiming, FilterSpec, MZISpec, parse_sequence
from .laser.model import EV, InjectionParams, LaserParams
from .security import ChannelParams, Decoy, NoDecoy, ProtocolConfig

MODES = ("nodecoy", "decoy")

DEFAULTS: dict = {
    # fibre link, detectors and post-processing
    "xi_db_per_km": 0.2,
    "p_dc": 1e-6,
    "eta_det": 0.15,
    "e_d": 0.01,
    "f_ec": 1.22,
    "pA_z": 0.5,
    "pB_z": 0.5,
    "f_prep_hz": 100e6,
    "mode": "nodecoy",
    "mu": 0.024,
    "nu": 0.048,
    "mu0": 0.657,
    "mu1": 0.033,
    "mu2": 0.0,
    "nu0": 1.314,
    "nu1": 0.066,
    "nu2": 0.0,
    "distance_km": 0.0,
    # lasers (shared by master and slave except the gain compression)
    "tau_ph_s": 1e-12,
    "tau_e_s": 1e-9,
    "eta": 0.3,
    "n_th": 5.5e7,
    "n_tr": 4.0e7,
    "photon_energy_ev": 0.8,
    "c_sp": 1e-5,
    "gamma_conf": 0.12,
    "alpha": 5.0,
    "gamma_p_per_w": 20.0,
    "gamma_p_master_per_w": 30.0,
    "kappa_inj_per_s": 2e11,
    "delta_omega_rad_s": 2 * math.pi * -100e9,
    # pump levels as multiples of the threshold current
    "master_bias_ith": 0.8,
    "master_pulse_ith": 4.0,
    "slave_bias_ith": 0.8,
    "slave_pulse_ith": 4.0,
    # encoding geometry
    "t_bin_ps": 800.0,
    "state_gap_ps": 1600.0,
    "master_lead_ps": 100.0,
    "slave_pulse_width_ps": 200.0,
    "master_short_width_ps": None,
    "master_long_width_ps": None,
    "dt_ps": 0.1,
    "relax_ns": 5.0,
    "sequence": ["Z0", "X0", "Z1", "X0", "Z0"],
    "random_sequence_length": None,
    "sequence_seed": 0,
    "phase_randomization": False,
    "phase_seed": 0,
    # receiver optics
    "filter_center_ghz": -100.0,
    "filter_halfwidth_ghz": 50.0,
    "filter_order": 2,
    "mzi_theta_rad": None,
    "attenuation_db": None,
    "target_mu": 0.024,
    "classify_threshold_db": 10.0,
    "trace_stride": 1,
    # Monte Carlo
    "n_pulses": 1_000_000,
    "seed": 0,
    "workers": 1,
    "output_dir": None,
}

_NULLABLE = {"master_short_width_ps", "master_long_width_ps", "random_sequence_length",
             "mzi_theta_rad", "attenuation_db", "output_dir"}
_INTEGER = {"filter_order", "random_sequence_length", "sequence_seed", "phase_seed",
            "trace_stride", "n_pulses", "seed", "workers"}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def _check_type(key, value):
    default = DEFAULTS[key]
    if value is None:
        if key in _NULLABLE:
            return
        raise ConfigError(f"config key {key!r} may not be null")
    if key in _INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer")
    elif key == "mode":
        if value not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
    elif key == "sequence":
        if not isinstance(value, list):
            raise ConfigError("sequence must be a list of symbols")
    elif key == "phase_randomization":
        if not isinstance(value, bool):
            raise ConfigError("phase_randomization must be true or false")
    elif key == "output_dir":
        if not isinstance(value, str):
            raise ConfigError("output_dir must be a string")
    elif isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number")
        if not math.isfinite(value):
            raise ConfigError(f"config key {key!r} must be finite")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values`` holds every key."""

    values: dict

    @classmethod
    def from_dict(cls, overrides: dict | None = None) -> "RunConfig":
        overrides = dict(overrides or {})
        unknown = sorted(set(overrides) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for k, v in overrides.items():
            _check_type(k, v)
        rc = cls({**DEFAULTS, **overrides})
        rc.validate()
        return rc

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("config must be a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.values, **changes})

    def validate(self) -> None:
        """Build every fragment once so range errors surface as ``ConfigError``."""
        v = self.values
        try:
            self.master_params()
            self.slave_params()
            self.injection()
            self.timing()
            self.filter_spec()
            self.channel()
            self.protocol()
            self.source()
            if v["mode"] == "decoy":
                self.decoy()
            self.drive_levels()
            if v["dt_ps"] <= 0 or v["relax_ns"] < 0:
                raise ValueError("dt_ps must be positive and relax_ns non-negative")
            if v["n_pulses"] < 0:
                raise ValueError("n_pulses must be non-negative")
            if v["workers"] < 1 or v["trace_stride"] < 1:
                raise ValueError("workers and trace_stride must be at least 1")
            if v["random_sequence_length"] is not None and v["random_sequence_length"] < 1:
                raise ValueError("random_sequence_length must be positive")
            if v["random_sequence_length"] is None and not v["sequence"]:
                raise ValueError("sequence must not be empty")
            self.sequence()
            if v["attenuation_db"] is None and not v["target_mu"] > 0:
                raise ValueError("target_mu must be positive")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # fragments

    def _laser(self, gamma_p) -> LaserParams:
        v = self.values
        return LaserParams(v["tau_ph_s"], v["tau_e_s"], v["eta"], v["n_th"], v["n_tr"],
                           v["photon_energy_ev"] * EV, v["c_sp"], v["gamma_conf"],
                           v["alpha"], gamma_p)

    def master_params(self) -> LaserParams:
        return self._laser(self.values["gamma_p_master_per_w"])

    def slave_params(self) -> LaserParams:
        return self._laser(self.values["gamma_p_per_w"])

    def injection(self) -> InjectionParams:
        return InjectionParams(self.values["kappa_inj_per_s"], self.values["delta_omega_rad_s"])

    def timing(self) -> EncodingTiming:
        v = self.values
        t_bin = v["t_bin_ps"] * 1e-12
        short = v["master_short_width_ps"]
        long_ = v["master_long_width_ps"]
        return EncodingTiming(
            bin_period=t_bin,
            state_gap=v["state_gap_ps"] * 1e-12,
            master_lead=v["master_lead_ps"] * 1e-12,
            slave_pulse_width=v["slave_pulse_width_ps"] * 1e-12,
            master_short_width=t_bin if short is None else short * 1e-12,
            master_long_width=2 * t_bin if long_ is None else long_ * 1e-12,
        )

    def drive_multiples(self) -> tuple[float, float, float, float]:
        v = self.values
        return (v["master_bias_ith"], v["master_pulse_ith"], v["slave_bias_ith"],
                v["slave_pulse_ith"])

    def drive_levels(self) -> DriveLevels:
        return DriveLevels.from_threshold(self.slave_params().threshold_current,
                                          *self.drive_multiples())

    def filter_spec(self) -> FilterSpec:
        v = self.values
        return FilterSpec(v["filter_center_ghz"] * 1e9, v["filter_halfwidth_ghz"] * 1e9,
                          v["filter_order"])

    def mzi_spec(self, theta: float | None = None) -> MZISpec:
        th = self.values["mzi_theta_rad"] if theta is None else theta
        return MZISpec(self.timing().bin_period, 0.0 if th is None else th)

    def channel(self, distance_km: float | None = None) -> ChannelParams:
        v = self.values
        d = v["distance_km"] if distance_km is None else distance_km
        return ChannelParams(v["xi_db_per_km"], d, v["p_dc"], v["eta_det"], v["e_d"])

    def protocol(self) -> ProtocolConfig:
        v = self.values
        return ProtocolConfig(v["pA_z"], v["pB_z"], v["f_ec"], v["f_prep_hz"])

    def nodecoy(self) -> NoDecoy:
        return NoDecoy(self.values["mu"], self.values["nu"])

    def decoy(self) -> Decoy:
        v = self.values
        return Decoy(v["mu0"], v["mu1"], v["mu2"], v["nu0"], v["nu1"], v["nu2"])

    def source(self):
        return self.decoy() if self.values["mode"] == "decoy" else self.nodecoy()

    def sequence(self) -> list[str]:
        v = self.values
        n = v["random_sequence_length"]
        if n is None:
            return [s.value for s in parse_sequence(v["sequence"])]
        rng = np.random.default_rng(v["sequence_seed"])
        return [("Z0", "Z1", "X0")[i] for i in rng.integers(0, 3, size=n)]
