"""Bit-level Monte Carlo of the three-state protocol on an honest channel.

Pulses are processed in fixed blocks of ``BLOCK_SIZE``. Block ``b`` draws
from a Philox stream keyed by ``(seed, b)``, so every pulse's randomness
depends only on the seed and its index. Blocks can be farmed out to any
number of workers and merged in order without changing the result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .security import (
    ChannelParams,
    GainError,
    KeyRatePoint,
    NoDecoy,
    ProtocolConfig,
    key_rate_from_gains,
)

BLOCK_SIZE = 1 << 16
_MASK64 = (1 << 64) - 1


class InsufficientStatistics(ValueError):
    """No detections in one of the matched bases."""


@dataclass(frozen=True)
class TrialConfig:
    n_pulses: int
    seed: int = 0
    source: NoDecoy = field(default_factory=NoDecoy)
    channel: ChannelParams = field(default_factory=ChannelParams)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be non-negative")
        if not isinstance(self.source, NoDecoy):
            raise ValueError("the Monte Carlo runs the decoy-free source only")


@dataclass
class TallyCounts:
    sent: dict = field(default_factory=lambda: {"z0": 0, "z1": 0, "x0": 0})
    matched: dict = field(default_factory=lambda: {"z": 0, "x": 0})
    sifted: dict = field(default_factory=lambda: {"z": 0, "x": 0})
    errors: dict = field(default_factory=lambda: {"z": 0, "x": 0})

    def __add__(self, other: "TallyCounts") -> "TallyCounts":
        out = TallyCounts()
        for name in ("sent", "matched", "sifted", "errors"):
            a, b = getattr(self, name), getattr(other, name)
            setattr(out, name, {k: a[k] + b[k] for k in a})
        return out

    @property
    def n_pulses(self) -> int:
        return sum(self.sent.values())

    def gain(self, basis: str) -> float:
        m = self.matched[basis]
        return self.sifted[basis] / m if m else 0.0

    def error_rate(self, basis: str) -> float:
        d = self.sifted[basis]
        return self.errors[basis] / d if d else 0.0

    def gain_stderr(self, basis: str) -> float:
        m = self.matched[basis]
        q = self.gain(basis)
        return math.sqrt(q * (1 - q) / m) if m else math.inf

    def error_stderr(self, basis: str) -> float:
        d = self.sifted[basis]
        e = self.error_rate(basis)
        return math.sqrt(e * (1 - e) / d) if d else math.inf

    q_z = property(lambda self: self.gain("z"))
    q_x = property(lambda self: self.gain("x"))
    e_z = property(lambda self: self.error_rate("z"))
    e_x = property(lambda self: self.error_rate("x"))

    def to_json(self, seed: int | None = None) -> dict:
        return {
            "sent": dict(self.sent),
            "matched": dict(self.matched),
            "sifted": dict(self.sifted),
            "errors": dict(self.errors),
            "q_z": self.q_z,
            "e_z": self.e_z,
            "q_x": self.q_x,
            "e_x": self.e_x,
            "stderr": {
                "q_z": _finite(self.gain_stderr("z")),
                "e_z": _finite(self.error_stderr("z")),
                "q_x": _finite(self.gain_stderr("x")),
                "e_x": _finite(self.error_stderr("x")),
            },
            "seed": seed,
            "n_pulses": self.n_pulses,
        }


def _finite(x):
    return x if math.isfinite(x) else None


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, block & _MASK64]))


def simulate_block(cfg: TrialConfig, block: int) -> TallyCounts:
    """Tally pulses ``block*BLOCK_SIZE`` up to the block end (or ``n_pulses``)."""
    start = block * BLOCK_SIZE
    n = min(BLOCK_SIZE, cfg.n_pulses - start)
    tally = TallyCounts()
    if n <= 0:
        return tally
    rng = block_generator(cfg.seed, block)
    p = cfg.protocol
    ch = cfg.channel
    transmit = ch.transmittance * ch.eta_det

    # Alice: 0 -> Z0, 1 -> Z1, 2 -> X0
    u = rng.random(n)
    sym = np.where(u < p.pA_z / 2, 0, np.where(u < p.pA_z, 1, 2))
    alice_z = sym < 2
    photons = rng.poisson(np.where(alice_z, cfg.source.mu, cfg.source.nu))
    bob_z = rng.random(n) < p.pB_z
    arrived = rng.binomial(photons, transmit) > 0
    # photon click lands on the wrong detector of the pair with prob E_d
    photon_wrong = rng.random(n) < ch.e_d
    dark = rng.random(n) < ch.p_dc
    dark_wrong = rng.random(n) < 0.5
    coin_wrong = rng.random(n) < 0.5

    click = arrived | dark
    # which detector fired: wrong-only, right-only, or both (double click)
    wrong_fires = (arrived & photon_wrong) | (dark & dark_wrong)
    right_fires = (arrived & ~photon_wrong) | (dark & ~dark_wrong)
    double = wrong_fires & right_fires
    error = np.where(double, coin_wrong, wrong_fires)

    matched_z = alice_z & bob_z
    matched_x = ~alice_z & ~bob_z
    tally.sent = {"z0": int(np.count_nonzero(sym == 0)),
                  "z1": int(np.count_nonzero(sym == 1)),
                  "x0": int(np.count_nonzero(sym == 2))}
    tally.matched = {"z": int(np.count_nonzero(matched_z)),
                     "x": int(np.count_nonzero(matched_x))}
    tally.sifted = {"z": int(np.count_nonzero(matched_z & click)),
                    "x": int(np.count_nonzero(matched_x & click))}
    tally.errors = {"z": int(np.count_nonzero(matched_z & click & error)),
                    "x": int(np.count_nonzero(matched_x & click & error))}
    return tally


def run_protocol(cfg: TrialConfig, workers: int = 1) -> TallyCounts:
    """Run ``cfg.n_pulses`` pulses; identical output for any ``workers``."""
    n_blocks = -(-cfg.n_pulses // BLOCK_SIZE)
    blocks = range(n_blocks)
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: simulate_block(cfg, b), blocks))
    else:
        parts = [simulate_block(cfg, b) for b in blocks]
    total = TallyCounts()
    for part in parts:
        total = total + part
    return total


def empirical_key_rate(tally: TallyCounts, cfg: TrialConfig) -> KeyRatePoint:
    """Decoy-free key rate with measured gains and error rates in place of the model."""
    if tally.sifted["z"] == 0 or tally.sifted["x"] == 0:
        raise InsufficientStatistics("no detections in a matched basis")
    gains = {"z": GainError(tally.q_z, tally.e_z), "x": GainError(tally.q_x, tally.e_x)}
    return key_rate_from_gains(cfg.source, gains, cfg.protocol, cfg.channel.distance)
