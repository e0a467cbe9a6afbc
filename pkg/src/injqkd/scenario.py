"""End-to-end encoding scenario: pump drives to decoded bin metrics.

Long sequences are processed in chunks of whole slots so memory stays
bounded. Each chunk is integrated from the state the previous one ended in.
The filter sees one slot of context on either side (zeros beyond the
ends of the run), so chunk seams are invisible at double precision.
Interferometer outputs depend on the calibrated phase, which needs the whole
sequence; they are rebuilt at the end from per-sample sums
``|e|^2 + |e_d|^2`` and ``conj(e) e_d`` instead of keeping the field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import RunConfig
from .encoder import (
    BinMetrics,
    ComplexFieldTrace,
    EncodingTiming,
    MZISpec,
    StateSymbol,
    assemble_field,
    build_drive,
    butterworth_filter,
    classify_cells,
    metrics_from_cells,
    mzi_interfere,
    parse_sequence,
    theta_from_cross,
)
from .io import atomic_write_json, write_columns
from .laser.model import FieldTrajectory, LaserState, integrate, relax_to_bias

TRACE_HEADER = ["t_ns", "P_master_mW", "P_slave_mW", "P_filtered_mW",
                "P_constructive_mW", "P_destructive_mW"]

CHUNK_SLOTS = 32

TrajectorySink = Callable[[FieldTrajectory, FieldTrajectory], None]


@dataclass(eq=False)
class ScenarioResult:
    """Decoded metrics plus the plot trace.

    ``master``, ``slave``, ``filtered``, ``constructive`` and ``destructive``
    hold full-resolution data when the run kept fields, else ``None``.
    ``trace`` always holds the ``TRACE_HEADER`` columns (SI units) sampled
    every ``trace_stride`` steps.
    """

    sequence: list[str]
    timing: EncodingTiming
    theta: float
    attenuation_db: float
    cells: np.ndarray
    metrics: list[BinMetrics]
    classification: list[str | None]
    trace: np.ndarray
    trace_stride: int
    master: FieldTrajectory | None = None
    slave: FieldTrajectory | None = None
    filtered: ComplexFieldTrace | None = None
    constructive: np.ndarray | None = None
    destructive: np.ndarray | None = None

    @property
    def mismatches(self) -> list[int]:
        """Slots whose decoded symbol differs from the commanded one."""
        return [k for k, (got, want) in enumerate(zip(self.classification, self.sequence))
                if got != want]

    def write_trace(self, path):
        scale = np.array([1e9, 1e3, 1e3, 1e3, 1e3, 1e3])
        return write_columns(path, TRACE_HEADER, list((self.trace * scale).T))

    def write_metrics(self, path):
        return atomic_write_json(path, [m.to_json() for m in self.metrics])


def phase_kicks(n_slots: int, slot_steps: int, seed: int) -> list[tuple[int, float]]:
    """Uniform random master phase at the start of every slot."""
    rng = np.random.default_rng(seed)
    return [(k * slot_steps, float(v))
            for k, v in enumerate(rng.uniform(0.0, 2 * math.pi, n_slots))]


def attenuation_for_mu(cells: np.ndarray, sequence, photon_energy: float,
                       target_mu: float) -> float:
    """Attenuation (dB) bringing the mean Z-slot photon number to ``target_mu``.

    ``cells`` is the ``bin_energies`` matrix. Falls back to all slots when
    the sequence holds no Z symbol.
    """
    per_slot = cells[:, 0] + cells[:, 1]
    z = [k for k, s in enumerate(sequence) if s in ("Z0", "Z1")]
    energy = float(np.mean(per_slot[z] if z else per_slot))
    if energy <= 0:
        raise ValueError("no filtered energy in the state bins")
    return 10 * math.log10(energy / photon_energy / target_mu)


def _concat(parts: list[FieldTrajectory]) -> FieldTrajectory:
    if len(parts) == 1:
        return parts[0]
    return FieldTrajectory(parts[0].dt,
                           np.concatenate([p.n_series for p in parts]),
                           np.concatenate([p.q_series for p in parts]),
                           np.concatenate([p.phi_series for p in parts]),
                           np.concatenate([p.power_series for p in parts]),
                           parts[0].t0, parts[-1].final_state)


class _Accumulator:
    """Windowed sums over a sample stream delivered in consecutive segments."""

    def __init__(self, seq, timing: EncodingTiming, dt: float, n_total: int, delay: int):
        self.timing = timing
        self.slot_steps = int(round(timing.slot_period / dt))
        self.n_cells = timing.cells_per_slot
        n_slots = len(seq)
        # global [lo, hi) step indices of every cell, clipped to the trace
        edges = np.empty((n_slots, self.n_cells, 2), dtype=np.int64)
        for k in range(n_slots):
            for b in range(self.n_cells):
                t_lo, t_hi = timing.bin_window(k, b)
                edges[k, b] = [int(round(t_lo / dt)), int(round(t_hi / dt))]
        self.edges = np.clip(edges, 0, n_total)
        # the delayed arm is empty before t = delay
        self.late_lo = np.maximum(self.edges[:, 1, 0], delay)
        self.cells = np.zeros((n_slots, self.n_cells))
        self.late_sum = np.zeros(n_slots)
        self.late_cross = np.zeros(n_slots, dtype=np.complex128)

    def add(self, g0: int, power: np.ndarray, both: np.ndarray, cross: np.ndarray):
        g1 = g0 + len(power)
        k_lo = max(0, g0 // self.slot_steps - 1)
        k_hi = min(len(self.cells), g1 // self.slot_steps + 1)
        for k in range(k_lo, k_hi):
            for b in range(self.n_cells):
                lo, hi = self.edges[k, b]
                lo, hi = max(lo, g0), min(hi, g1)
                if hi > lo:
                    self.cells[k, b] += np.sum(power[lo - g0:hi - g0])
            lo, hi = max(self.late_lo[k], g0), min(self.edges[k, 1, 1], g1)
            if hi > lo:
                self.late_sum[k] += np.sum(both[lo - g0:hi - g0])
                self.late_cross[k] += np.sum(cross[lo - g0:hi - g0])


def run_scenario(rc: RunConfig, *, keep_fields: bool = True,
                 trajectory_sink: TrajectorySink | None = None,
                 chunk_slots: int = CHUNK_SLOTS) -> ScenarioResult:
    """Drive, integrate, filter and decode the configured symbol sequence.

    Parameters
    ----------
    keep_fields
        Keep full-resolution trajectories, filtered field and interferometer
        outputs on the result. Turn off for long sequences.
    trajectory_sink
        Called with each chunk's ``(master, slave)`` trajectories in order.
    chunk_slots
        Slots integrated per chunk.
    """
    if chunk_slots < 1:
        raise ValueError("chunk_slots must be at least 1")
    seq = rc.sequence()
    symbols = parse_sequence(seq)
    dt = rc["dt_ps"] * 1e-12
    stride = rc["trace_stride"]
    timing = rc.timing()
    levels = rc.drive_levels()
    master, slave = rc.master_params(), rc.slave_params()
    inj, fspec = rc.injection(), rc.filter_spec()

    slot_steps = int(round(timing.slot_period / dt))
    n_total = slot_steps * len(seq)
    delay = int(round(timing.bin_period / dt))
    relax = rc["relax_ns"] * 1e-9
    state = (relax_to_bias(master, levels.master_bias, relax, dt),
             relax_to_bias(slave, levels.slave_bias, relax, dt))
    kicks = []
    if rc["phase_randomization"]:
        kicks = phase_kicks(len(seq), slot_steps, rc["phase_seed"])

    acc = _Accumulator(seq, timing, dt, n_total, delay)
    kept_m, kept_s, kept_f = [], [], []
    trace_parts = []
    mzi_tail = np.zeros(delay, dtype=np.complex128)
    # no light outside the simulated span, so the ends are not wrapped by the FFT
    left = np.zeros(slot_steps, dtype=np.complex128)

    def emit(g0, field, master_p, slave_p):
        """Filter one chunk's slave field (with context) and fold it into the sums."""
        nonlocal mzi_tail
        f = field
        joined = np.concatenate([mzi_tail, f])
        e_d, mzi_tail = joined[:len(f)], joined[-delay:]
        power = np.abs(f) ** 2
        both = power + np.abs(e_d) ** 2
        cross = np.conj(f) * e_d
        acc.add(g0, power, both, cross)
        first = (-g0) % stride
        s = slice(first, None, stride)
        t = (g0 + np.arange(first, len(f), stride)) * dt
        # copies, so the full-resolution chunk can be freed
        trace_parts.append((t, *(np.array(x[s]) for x in (master_p, slave_p, power, both, cross))))
        if keep_fields:
            kept_f.append(f)

    pending = None
    for a in range(0, len(seq), chunk_slots):
        b = min(a + chunk_slots, len(seq))
        drive_m, drive_s = build_drive(seq[a:b], timing, levels, dt)
        local_kicks = [(step - a * slot_steps, v) for step, v in kicks[a:b]]
        mt, st = integrate(master, slave, inj, drive_m, drive_s, state, dt,
                           t0=a * slot_steps * dt, master_phase_kicks=local_kicks)
        fm, fs = mt.final_state, st.final_state
        state = (LaserState(fm.n, fm.q, fm.phi), LaserState(fs.n, fs.q, fs.phi))
        if trajectory_sink is not None:
            trajectory_sink(mt, st)
        if keep_fields:
            kept_m.append(mt)
            kept_s.append(st)
        field = assemble_field(st).samples
        if pending is not None:
            _flush(pending, left, field[:slot_steps], fspec, dt, emit)
            left = pending[1][-slot_steps:]
        pending = (a * slot_steps, field, mt.power_series, st.power_series)
    if pending is not None:
        _flush(pending, left, np.zeros(slot_steps, dtype=np.complex128), fspec, dt, emit)

    theta = rc["mzi_theta_rad"]
    if theta is None:
        x0 = [k for k, sym in enumerate(symbols) if sym is StateSymbol.X0]
        theta = theta_from_cross(np.conj(acc.late_cross[x0].sum()) if x0 else 0.0)
    rot = np.exp(1j * theta)
    late_c = (acc.late_sum + 2 * np.real(acc.late_cross * rot)) / 4 * dt
    late_d = (acc.late_sum - 2 * np.real(acc.late_cross * rot)) / 4 * dt
    cells = acc.cells * dt

    atten = rc["attenuation_db"]
    if atten is None:
        atten = attenuation_for_mu(cells, seq, slave.photon_energy, rc["target_mu"])
    metrics = metrics_from_cells(seq, cells, np.column_stack([late_c, late_d]), atten,
                                 slave.photon_energy)
    labels = classify_cells(cells, rc["classify_threshold_db"])

    if trace_parts:
        t, pm, ps, pf, both, cross = (np.concatenate(c) for c in zip(*trace_parts))
    else:
        t = pm = ps = pf = both = np.empty(0)
        cross = np.empty(0, dtype=np.complex128)
    interf = 2 * np.real(cross * rot)
    trace = np.column_stack([t, pm, ps, pf, (both + interf) / 4, (both - interf) / 4])

    result = ScenarioResult(seq, timing, float(theta), float(atten), cells, metrics, labels,
                            trace, stride)
    if keep_fields and kept_s:
        result.master, result.slave = _concat(kept_m), _concat(kept_s)
        result.filtered = ComplexFieldTrace(dt, np.concatenate(kept_f))
        result.constructive, result.destructive = mzi_interfere(
            result.filtered, MZISpec(timing.bin_period, theta))
    return result


def _flush(pending, left, right, fspec, dt, emit):
    """Filter ``pending`` with neighbouring context and hand the middle to ``emit``."""
    g0, field, master_p, slave_p = pending
    padded = np.concatenate([left, field, right])
    out = butterworth_filter(ComplexFieldTrace(dt, padded), fspec).samples
    emit(g0, out[len(left):len(left) + len(field)], master_p, slave_p)
