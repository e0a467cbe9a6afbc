"""Master/slave semiconductor laser rate equations with optical injection."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from ._kernel_py import ELEMENTARY_CHARGE, NEGATIVE_STATE, NON_FINITE

EV = 1.602176634e-19  # J per eV
DEFAULT_DT = 1e-13
Q_FLOOR = 1e-6


class IntegrationError(RuntimeError):
    """Raised when the rate-equation integration leaves the physical domain."""


@dataclass(frozen=True)
class LaserParams:
    """Physical constants of one single-mode semiconductor laser."""

    tau_ph: float = 1.0e-12
    tau_e: float = 1.0e-9
    eta: float = 0.3
    n_th: float = 5.5e7
    n_tr: float = 4.0e7
    photon_energy: float = 0.8 * EV
    c_sp: float = 1e-5
    gamma_conf: float = 0.12
    alpha: float = 5.0
    gamma_p: float = 20.0

    def __post_init__(self):
        if self.tau_ph <= 0 or self.tau_e <= 0 or self.photon_energy <= 0:
            raise ValueError("lifetimes and photon_energy must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 < self.gamma_conf <= 1:
            raise ValueError("gamma_conf must lie in (0, 1]")
        if self.c_sp < 0 or self.gamma_p < 0:
            raise ValueError("c_sp and gamma_p must be non-negative")
        if not self.n_tr < self.n_th:
            raise ValueError("n_tr must be below n_th")

    @property
    def threshold_current(self) -> float:
        """Current (A) at which carrier recombination alone sustains N = n_th."""
        return ELEMENTARY_CHARGE * self.n_th / self.tau_e

    @property
    def power_per_photon(self) -> float:
        """Output power (W) per intracavity photon, ``eta*hw/(2*Gamma*tau_ph)``."""
        return self.eta * self.photon_energy / (2.0 * self.gamma_conf * self.tau_ph)

    def as_tuple(self) -> tuple:
        return (self.tau_ph, self.tau_e, self.eta, self.n_th, self.n_tr,
                self.photon_energy, self.c_sp, self.gamma_conf, self.alpha,
                self.gamma_p)

    def replace(self, **changes) -> "LaserParams":
        return dataclasses.replace(self, **changes)


MASTER_DEFAULT = LaserParams(gamma_p=30.0)
SLAVE_DEFAULT = LaserParams(gamma_p=20.0)


@dataclass(frozen=True)
class InjectionParams:
    kappa_inj: float = 2.0e11
    delta_omega: float = 2 * math.pi * -100e9

    def __post_init__(self):
        if self.kappa_inj < 0:
            raise ValueError("kappa_inj must be non-negative")


@dataclass(frozen=True, eq=False)
class PumpWaveform:
    """Piecewise-constant pump current; ``samples[i]`` holds on ``[i*dt, (i+1)*dt)``."""

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if np.any(samples < 0):
            raise ValueError("pump currents must be non-negative")

    @property
    def duration(self) -> float:
        return self.dt * len(self.samples)

    @classmethod
    def constant(cls, current: float, duration: float, dt: float = DEFAULT_DT):
        n = int(round(duration / dt))
        return cls(dt, np.full(n, float(current)))

    def resampled(self, dt: float) -> np.ndarray:
        """Samples held on a finer grid ``dt`` (``self.dt`` must be a multiple)."""
        ratio = self.dt / dt
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-6 * k:
            raise ValueError(f"drive period {self.dt} is not a multiple of dt={dt}")
        return np.repeat(self.samples, k) if k > 1 else self.samples


@dataclass(frozen=True)
class LaserState:
    n: float
    q: float
    phi: float = 0.0

    def __post_init__(self):
        if self.n < 0 or self.q < 0:
            raise ValueError("carrier and photon numbers must be non-negative")


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    dt: float
    n_series: np.ndarray
    q_series: np.ndarray
    phi_series: np.ndarray
    power_series: np.ndarray
    t0: float = 0.0
    final_state: LaserState | None = field(default=None, compare=False)

    def __post_init__(self):
        lengths = {len(self.n_series), len(self.q_series), len(self.phi_series),
                   len(self.power_series)}
        if len(lengths) != 1:
            raise ValueError("trajectory arrays must share one length")

    def __len__(self):
        return len(self.q_series)

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @classmethod
    def from_series(cls, params: LaserParams, dt, n, q, phi, t0=0.0, final_state=None):
        q = np.asarray(q, dtype=np.float64)
        return cls(dt, np.asarray(n, dtype=np.float64), q,
                   np.asarray(phi, dtype=np.float64), q * params.power_per_photon,
                   t0, final_state)

    def to_csv(self, path):
        """Write ``t_ns,N,Q,phi_rad,P_mW`` rows with 17 significant digits."""
        from ..io import write_columns

        return write_columns(path, TRAJECTORY_HEADER, trajectory_columns(self))


TRAJECTORY_HEADER = ["t_ns", "N", "Q", "phi_rad", "P_mW"]


def trajectory_columns(traj: FieldTrajectory) -> list[np.ndarray]:
    """Columns matching ``TRAJECTORY_HEADER``."""
    return [traj.time * 1e9, traj.n_series, traj.q_series, traj.phi_series,
            traj.power_series * 1e3]


def linear_gain(n, params: LaserParams):
    return (n - params.n_tr) / (params.n_th - params.n_tr)


def saturated_gain(n, p, params: LaserParams):
    """Gain with compression, ``G_L / sqrt(1 + 2*gamma_p*P)``; ``p`` in watts."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("optical power must be non-negative")
    return linear_gain(n, params) / np.sqrt(1.0 + 2.0 * params.gamma_p * p)


def _check_initial(state: LaserState):
    if not (math.isfinite(state.n) and math.isfinite(state.q) and math.isfinite(state.phi)):
        raise ValueError("initial state must be finite")


def _raise_for_status(status: int, bad: int, dt: float, t0: float):
    if status == NEGATIVE_STATE:
        raise IntegrationError(f"state went negative at t={t0 + bad * dt:.6e} s (step {bad})")
    if status == NON_FINITE:
        raise IntegrationError(f"integration blew up at t={t0 + bad * dt:.6e} s (step {bad})")


def integrate(master: LaserParams, slave: LaserParams, inj: InjectionParams,
              master_drive: PumpWaveform, slave_drive: PumpWaveform,
              initial: tuple[LaserState, LaserState], dt: float = DEFAULT_DT,
              t0: float = 0.0, q_floor: float = Q_FLOOR, neg_tol: float = 1e-3,
              master_phase_kicks: Sequence[tuple[int, float]] = (),
              ) -> tuple[FieldTrajectory, FieldTrajectory]:
    """Integrate the injected master/slave pair with fixed-step RK4.

    The master evolves free of any slave feedback. The slave sees the master
    field through the injection terms with detuning ``inj.delta_omega``.

    Parameters
    ----------
    master_drive, slave_drive
        Pump waveforms of equal duration. Their sample period must be an
        integer multiple of ``dt``.
    initial
        ``(master_state, slave_state)`` at ``t0``.
    master_phase_kicks
        ``(step, offset)`` pairs; ``offset`` is added to the master phase
        before step ``step`` is taken. Used to emulate phase randomisation
        between gain-switched states.

    Raises
    ------
    ValueError
        Bad ``dt`` or drives of different duration.
    IntegrationError
        A state variable became negative beyond ``neg_tol`` or non-finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not math.isclose(master_drive.duration, slave_drive.duration,
                        rel_tol=1e-9, abs_tol=0.5 * dt):
        raise ValueError("master and slave drives must cover the same duration")
    for s in initial:
        _check_initial(s)
    pump_m = master_drive.resampled(dt)
    pump_s = slave_drive.resampled(dt)
    n_steps = min(len(pump_m), len(pump_s))
    pump_m, pump_s = pump_m[:n_steps], pump_s[:n_steps]
    ms, ss = initial
    y = np.array([ms.n, ms.q, ms.phi, ss.n, ss.q, ss.phi], dtype=np.float64)

    kicks = sorted((int(k), float(v)) for k, v in master_phase_kicks if 0 <= k < n_steps)
    bounds = [0] + [k for k, _ in kicks] + [n_steps]
    offsets = [0.0] + [v for _, v in kicks]
    chunks = []
    for (a, b), off in zip(zip(bounds[:-1], bounds[1:]), offsets):
        y[2] += off
        if b <= a:
            continue
        out, y, status, bad = _backend.kernel.run(
            master.as_tuple(), slave.as_tuple(), inj.kappa_inj, inj.delta_omega,
            q_floor, pump_m[a:b], pump_s[a:b], dt, t0 + a * dt, y, neg_tol)
        _raise_for_status(status, a + bad, dt, t0)
        chunks.append(out)
    out = np.concatenate(chunks) if chunks else np.empty((0, 6))
    m_final = LaserState(y[0], y[1], y[2])
    s_final = LaserState(y[3], y[4], y[5])
    mt = FieldTrajectory.from_series(master, dt, out[:, 0], out[:, 1], out[:, 2], t0, m_final)
    st = FieldTrajectory.from_series(slave, dt, out[:, 3], out[:, 4], out[:, 5], t0, s_final)
    return mt, st


def integrate_single(params: LaserParams, drive: PumpWaveform, initial: LaserState,
                     dt: float = DEFAULT_DT, t0: float = 0.0,
                     neg_tol: float = 1e-3) -> FieldTrajectory:
    """Integrate one free-running laser (no injection)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_initial(initial)
    pump = drive.resampled(dt)
    y = np.array([initial.n, initial.q, initial.phi, 0.0, 0.0, 0.0])
    out, y, status, bad = _backend.kernel.run(
        params.as_tuple(), None, 0.0, 0.0, Q_FLOOR, pump, None, dt, t0, y, neg_tol)
    _raise_for_status(status, bad, dt, t0)
    return FieldTrajectory.from_series(params, dt, out[:, 0], out[:, 1], out[:, 2], t0,
                                       LaserState(y[0], y[1], y[2]))


def relax_to_bias(params: LaserParams, current: float, duration: float = 5e-9,
                  dt: float = DEFAULT_DT, q0: float = Q_FLOOR) -> LaserState:
    """State after running a constant bias ``current`` from an empty cavity.

    The carrier number starts at its below-threshold stationary value (capped
    at ``n_th``) so short runs already sit near the operating point. Phase is
    reset to zero.
    """
    n0 = min(current * params.tau_e / ELEMENTARY_CHARGE, params.n_th)
    traj = integrate_single(params, PumpWaveform.constant(current, duration, dt),
                            LaserState(n0, q0, 0.0), dt)
    s = traj.final_state
    return LaserState(s.n, s.q, 0.0)


def injection_lock_residual(master_traj: FieldTrajectory, slave_traj: FieldTrajectory,
                            inj: InjectionParams, window: tuple[float, float]) -> float:
    """Mean ``|d/dt (delta_omega*t + phi_M - phi)|`` over ``window`` (rad/s).

    Near zero while the slave is frequency-locked to the master.
    """
    if len(master_traj) != len(slave_traj) or master_traj.dt != slave_traj.dt:
        raise ValueError("trajectories must share one time grid")
    t = slave_traj.time
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if np.count_nonzero(mask) < 2:
        raise ValueError("window selects fewer than two samples")
    arg = inj.delta_omega * t[mask] + master_traj.phi_series[mask] - slave_traj.phi_series[mask]
    return float(np.mean(np.abs(np.diff(arg) / slave_traj.dt)))
