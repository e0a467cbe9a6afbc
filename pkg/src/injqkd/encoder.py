"""Time-bin state encoding by pulsed injection: drives, filtering, decoding.

All optical fields are complex amplitudes in sqrt(W), expressed in the
rotating frame of the free-running slave carrier. The master sits at
``delta_omega / 2pi`` in that frame, which is where the WDM filter is
centred by default.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .laser.model import FieldTrajectory, PumpWaveform


class StateSymbol(str, enum.Enum):
    Z0 = "Z0"
    Z1 = "Z1"
    X0 = "X0"

    @classmethod
    def parse(cls, value) -> "StateSymbol":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown state symbol {value!r}; expected one of Z0, Z1, X0") from None


def parse_sequence(symbols) -> list[StateSymbol]:
    return [StateSymbol.parse(s) for s in symbols]


@dataclass(frozen=True)
class EncodingTiming:
    """Bin geometry of the encoded pulse train (all times in seconds).

    Each state occupies a slot of ``2*bin_period + state_gap``. Slot cells
    are ``bin_period`` long; in every cell the slave is pumped starting
    ``master_lead`` after the cell edge, while a master pulse (when present)
    starts on the cell edge itself.
    """

    bin_period: float = 800e-12
    state_gap: float = 1600e-12
    master_lead: float = 100e-12
    slave_pulse_width: float = 200e-12
    master_short_width: float = 800e-12
    master_long_width: float = 1600e-12

    def __post_init__(self):
        T = self.bin_period
        if T <= 0:
            raise ValueError("bin_period must be positive")
        if self.state_gap < 0:
            raise ValueError("state_gap must be non-negative")
        cells = self.state_gap / T
        if abs(cells - round(cells)) > 1e-9:
            raise ValueError("state_gap must be a whole number of bin periods "
                             "so the slave train stays regular")
        if not 0 <= self.master_lead < T:
            raise ValueError("master_lead must lie in [0, bin_period)")
        if not 0 < self.slave_pulse_width <= T - self.master_lead:
            raise ValueError("slave pulse must fit inside its cell after the lead")
        if abs(self.master_short_width / T - 1) > 0.25:
            raise ValueError("master_short_width must be within 25% of bin_period")
        if abs(self.master_long_width / (2 * T) - 1) > 0.25:
            raise ValueError("master_long_width must be within 25% of 2*bin_period")

    @property
    def slot_period(self) -> float:
        return 2 * self.bin_period + self.state_gap

    @property
    def cells_per_slot(self) -> int:
        return int(round(self.slot_period / self.bin_period))

    def bin_window(self, slot: int, b: int) -> tuple[float, float]:
        """Time window of bin ``b`` (0 = early, ``cells_per_slot``-1 = last gap cell)."""
        start = slot * self.slot_period + b * self.bin_period + self.master_lead
        return start, start + self.bin_period


@dataclass(frozen=True)
class DriveLevels:
    master_bias: float
    master_pulse: float
    slave_bias: float
    slave_pulse: float

    def __post_init__(self):
        for name in ("master_bias", "master_pulse", "slave_bias", "slave_pulse"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.master_pulse > self.master_bias:
            raise ValueError("DriveLevels invariant violated: master_pulse must exceed master_bias")
        if not self.slave_pulse > self.slave_bias:
            raise ValueError("DriveLevels invariant violated: slave_pulse must exceed slave_bias")

    @classmethod
    def from_threshold(cls, i_th: float, master_bias=0.8, master_pulse=4.0,
                       slave_bias=0.8, slave_pulse=4.0) -> "DriveLevels":
        """Levels given as multiples of the threshold current ``i_th``."""
        return cls(master_bias * i_th, master_pulse * i_th,
                   slave_bias * i_th, slave_pulse * i_th)


@dataclass(frozen=True, eq=False)
class ComplexFieldTrace:
    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))


@dataclass(frozen=True)
class FilterSpec:
    center_offset: float = -100e9
    half_width: float = 50e9
    order: int = 2

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("filter half_width must be positive")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("filter order must be a positive integer")

    def magnitude(self, f):
        x = (np.asarray(f, dtype=np.float64) - self.center_offset) / self.half_width
        return 1.0 / np.sqrt(1.0 + x ** (2 * int(self.order)))


@dataclass(frozen=True)
class MZISpec:
    delay: float = 800e-12
    theta: float = 0.0

    def __post_init__(self):
        if self.delay <= 0:
            raise ValueError("MZI delay must be positive")


@dataclass
class BinMetrics:
    symbol: StateSymbol
    bin0_energy: float
    bin1_energy: float
    mu_hat: float
    extinction_db: float
    visibility: float

    def to_json(self) -> dict:
        return {
            "symbol": self.symbol.value,
            "bin0_energy_J": self.bin0_energy,
            "bin1_energy_J": self.bin1_energy,
            "mu_hat": self.mu_hat,
            "extinction_db": self.extinction_db,
            "visibility": self.visibility,
        }


def _on_grid(x: float, dt: float, what: str) -> int:
    k = x / dt
    r = round(k)
    if abs(k - r) > 1e-6 * max(1.0, abs(k)):
        raise ValueError(f"{what}={x} is not representable on the dt={dt} grid")
    return int(r)


def build_drive(sequence: Sequence, timing: EncodingTiming, levels: DriveLevels,
                dt: float) -> tuple[PumpWaveform, PumpWaveform]:
    """Rectangular master and slave pump waveforms for a symbol sequence.

    The slave fires once per bin period over the whole train, whatever the
    symbols. The master fires a short pulse on the early cell (Z0), a short
    pulse on the late cell (Z1) or one long pulse spanning both (X0).
    """
    seq = parse_sequence(sequence)
    T = _on_grid(timing.bin_period, dt, "bin_period")
    lead = _on_grid(timing.master_lead, dt, "master_lead")
    w_s = _on_grid(timing.slave_pulse_width, dt, "slave_pulse_width")
    w_short = _on_grid(timing.master_short_width, dt, "master_short_width")
    w_long = _on_grid(timing.master_long_width, dt, "master_long_width")
    slot = _on_grid(timing.slot_period, dt, "slot_period")
    n = slot * len(seq)

    master = np.full(n, levels.master_bias)
    slave = np.full(n, levels.slave_bias)
    for start in range(0, n, T):
        slave[start + lead:start + lead + w_s] = levels.slave_pulse
    for k, sym in enumerate(seq):
        s0 = k * slot
        if sym is StateSymbol.Z0:
            master[s0:s0 + w_short] = levels.master_pulse
        elif sym is StateSymbol.Z1:
            master[s0 + T:s0 + T + w_short] = levels.master_pulse
        else:
            master[s0:s0 + w_long] = levels.master_pulse
    return PumpWaveform(dt, master), PumpWaveform(dt, slave)


def assemble_field(traj: FieldTrajectory, frame_offset: float = 0.0) -> ComplexFieldTrace:
    """Complex field ``sqrt(P) * exp(i(phi + 2 pi frame_offset t))``."""
    p = np.asarray(traj.power_series)
    if np.any(p < 0):
        raise ValueError("trajectory power must be non-negative")
    t = traj.time
    phase = traj.phi_series + 2 * np.pi * frame_offset * t
    return ComplexFieldTrace(traj.dt, np.sqrt(p) * np.exp(1j * phase), traj.t0)


def butterworth_filter(field: ComplexFieldTrace, spec: FilterSpec) -> ComplexFieldTrace:
    """Zero-phase Butterworth magnitude response applied over the whole trace."""
    if len(field) == 0:
        raise ValueError("field trace is empty")
    spectrum = np.fft.fft(field.samples)
    f = np.fft.fftfreq(len(field), field.dt)
    out = np.fft.ifft(spectrum * spec.magnitude(f))
    return ComplexFieldTrace(field.dt, out, field.t0)


def mzi_interfere(field: ComplexFieldTrace, spec: MZISpec) -> tuple[np.ndarray, np.ndarray]:
    """Constructive and destructive port powers of an unbalanced MZI.

    Ideal 50/50 couplers; the delayed arm is empty before ``t = delay``.
    """
    d = _on_grid(spec.delay, field.dt, "MZI delay")
    if d >= len(field):
        raise ValueError("MZI delay is longer than the trace")
    e = field.samples
    delayed = np.zeros_like(e)
    delayed[d:] = e[:-d]
    delayed *= np.exp(1j * spec.theta)
    return np.abs(e + delayed) ** 2 / 4, np.abs(e - delayed) ** 2 / 4


def calibrate_theta(field: ComplexFieldTrace, sequence: Sequence, timing: EncodingTiming,
                    delay: float | None = None, n_grid: int = 720) -> float:
    """Interferometer phase that maximises constructive output on X0 slots.

    Scans ``theta`` on ``[0, 2pi)`` like a temperature sweep of the chip and
    returns the best grid point refined by a parabola through its neighbours.
    """
    seq = parse_sequence(sequence)
    delay = timing.bin_period if delay is None else delay
    d = _on_grid(delay, field.dt, "MZI delay")
    e = field.samples
    cross = 0.0 + 0.0j
    for k, sym in enumerate(seq):
        if sym is not StateSymbol.X0:
            continue
        lo, hi = _window_indices(timing.bin_window(k, 1), field, len(e))
        lo = max(lo, d)
        cross += np.sum(e[lo:hi] * np.conj(e[lo - d:hi - d]))
    return theta_from_cross(cross, n_grid)


def theta_from_cross(cross: complex, n_grid: int = 720) -> float:
    """Phase maximising ``Re(conj(cross) e^{i theta})`` on a grid, parabola-refined.

    ``cross`` is the accumulated ``sum e(t) conj(e(t - delay))`` over the
    calibration windows; zero yields ``0.0``.
    """
    if cross == 0:
        return 0.0
    thetas = np.arange(n_grid) * (2 * np.pi / n_grid)
    score = np.real(np.conj(cross) * np.exp(1j * thetas))
    i = int(np.argmax(score))
    y0, y1, y2 = score[i - 1], score[i], score[(i + 1) % n_grid]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return float((thetas[i] + shift * 2 * np.pi / n_grid) % (2 * np.pi))


def _window_indices(window, trace_or_dt, n: int) -> tuple[int, int]:
    dt = trace_or_dt.dt if hasattr(trace_or_dt, "dt") else trace_or_dt
    t0 = getattr(trace_or_dt, "t0", 0.0)
    lo = int(round((window[0] - t0) / dt))
    hi = int(round((window[1] - t0) / dt))
    return max(0, min(lo, n)), max(0, min(hi, n))


def bin_energies(power: np.ndarray, dt: float, sequence: Sequence,
                 timing: EncodingTiming) -> np.ndarray:
    """Energy (J) in every cell of every slot, shape ``(n_slots, cells_per_slot)``."""
    n_slots = len(sequence)
    cells = timing.cells_per_slot
    out = np.zeros((n_slots, cells))
    for k in range(n_slots):
        for b in range(cells):
            lo, hi = _window_indices(timing.bin_window(k, b), dt, len(power))
            out[k, b] = np.sum(power[lo:hi]) * dt
    return out


def analyze_bins(filtered_power: np.ndarray, interf_power: tuple[np.ndarray, np.ndarray],
                 sequence: Sequence, timing: EncodingTiming, attenuation_db: float,
                 photon_energy: float, dt: float, energy_floor: float = 1e-30,
                 ) -> list[BinMetrics]:
    """Per-slot energies, mean photon number, extinction and X-basis visibility.

    ``mu_hat`` is the attenuated photon number in the two state bins of the
    slot. ``extinction_db`` compares the weakest commanded bin with the
    strongest uncommanded cell of the same slot (gap cells included).
    ``visibility`` compares constructive and destructive energy in the
    late bin, where the delayed early pulse overlaps the late one.
    """
    seq = parse_sequence(sequence)
    constructive, destructive = (np.asarray(a) for a in interf_power)
    cells = bin_energies(np.asarray(filtered_power), dt, seq, timing)
    late = np.zeros((len(seq), 2))
    for k in range(len(seq)):
        lo, hi = _window_indices(timing.bin_window(k, 1), dt, len(constructive))
        late[k] = np.sum(constructive[lo:hi]) * dt, np.sum(destructive[lo:hi]) * dt
    return metrics_from_cells(seq, cells, late, attenuation_db, photon_energy, energy_floor)


def metrics_from_cells(sequence: Sequence, cells: np.ndarray, late: np.ndarray,
                       attenuation_db: float, photon_energy: float,
                       energy_floor: float = 1e-30) -> list[BinMetrics]:
    """``BinMetrics`` from cell energies and late-bin interferometer energies.

    ``cells`` is the output of :func:`bin_energies`; ``late[k]`` holds the
    constructive and destructive energy in the late bin of slot ``k``.
    """
    seq = parse_sequence(sequence)
    atten = 10 ** (-attenuation_db / 10)
    metrics = []
    for k, sym in enumerate(seq):
        occupied = {StateSymbol.Z0: [0], StateSymbol.Z1: [1], StateSymbol.X0: [0, 1]}[sym]
        blocked = [b for b in range(cells.shape[1]) if b not in occupied]
        e_occ = min(cells[k, b] for b in occupied)
        e_blk = max((cells[k, b] for b in blocked), default=0.0)
        ext = 10 * math.log10(max(e_occ, energy_floor) / max(e_blk, energy_floor))
        ec, ed = late[k]
        vis = (ec - ed) / (ec + ed) if ec + ed > energy_floor else 0.0
        vis = min(max(vis, 0.0), 1.0)
        mu = (cells[k, 0] + cells[k, 1]) / photon_energy * atten
        metrics.append(BinMetrics(sym, float(cells[k, 0]), float(cells[k, 1]), float(mu),
                                  float(ext), float(vis)))
    return metrics


def classify_slots(filtered_power: np.ndarray, dt: float, sequence: Sequence,
                   timing: EncodingTiming, threshold_db: float = 10.0) -> list[str | None]:
    """Read the encoded symbol back from filtered bin energies.

    A bin counts as occupied when it holds at least ``10**(-threshold_db/10)``
    of the brightest bin in the trace. Returns ``None`` for slots that match
    no symbol (including light in gap cells).
    """
    return classify_cells(bin_energies(np.asarray(filtered_power), dt, sequence, timing),
                          threshold_db)


def classify_cells(cells: np.ndarray, threshold_db: float = 10.0) -> list[str | None]:
    """Symbol decision per slot from the ``bin_energies`` matrix."""
    if cells.size == 0:
        return []
    ref = cells.max()
    occ = cells >= ref * 10 ** (-threshold_db / 10)
    out = []
    for row in occ:
        if row[2:].any():
            out.append(None)
            continue
        out.append({(True, False): "Z0", (False, True): "Z1", (True, True): "X0"}.get(
            (bool(row[0]), bool(row[1]))))
    return out


def photodiode_lowpass(power: np.ndarray, dt: float, f3db: float = 10e9) -> np.ndarray:
    """First-order (single-pole) low-pass of a power trace, applied in frequency."""
    power = np.asarray(power, dtype=np.float64)
    f = np.fft.rfftfreq(len(power), dt)
    return np.fft.irfft(np.fft.rfft(power) / (1 + 1j * f / f3db), n=len(power))
