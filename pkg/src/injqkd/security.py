"""Asymptotic secret key rates for the three-state time-bin protocol.

Covers the analytic fibre channel, decoy-state single-photon bounds, the
phase-error reduction for three-state protocols, the decoy-free
vacuum+single-photon bounds, and distance scans.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

STATUS_OK = "ok"
STATUS_INSECURE = "insecure"
STATUS_INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ChannelParams:
    xi: float = 0.2
    distance: float = 0.0
    p_dc: float = 1e-6
    eta_det: float = 0.15
    e_d: float = 0.01

    def __post_init__(self):
        for name in ("p_dc", "eta_det", "e_d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.xi < 0 or self.distance < 0:
            raise ValueError("xi and distance must be non-negative")

    @property
    def transmittance(self) -> float:
        return 10 ** (-self.xi * self.distance / 10)

    def at(self, distance: float) -> "ChannelParams":
        return ChannelParams(self.xi, distance, self.p_dc, self.eta_det, self.e_d)


@dataclass(frozen=True)
class NoDecoy:
    mu: float = 0.024
    nu: float = 0.048

    def __post_init__(self):
        if self.mu < 0 or self.nu < 0:
            raise ValueError("intensities must be non-negative")


@dataclass(frozen=True)
class Decoy:
    mu0: float = 0.657
    mu1: float = 0.033
    mu2: float = 0.0
    nu0: float = 1.314
    nu1: float = 0.066
    nu2: float = 0.0

    def __post_init__(self):
        _check_decoy_order(self.mu0, self.mu1, self.mu2, "μ")
        _check_decoy_order(self.nu0, self.nu1, self.nu2, "ν")


SourceIntensities = NoDecoy | Decoy


def _check_decoy_order(g0, g1, g2, sym):
    if min(g0, g1, g2) < 0:
        raise ValueError("intensities must be non-negative")
    if not 0 <= g2 < g1:
        raise ValueError(f"decoy precondition violated: 0 <= {sym}_2 < {sym}_1")
    if not g1 + g2 < g0:
        raise ValueError(f"decoy precondition violated: {sym}_1+{sym}_2 < {sym}_0")


@dataclass(frozen=True)
class ProtocolConfig:
    pA_z: float = 0.5
    pB_z: float = 0.5
    f_ec: float = 1.22
    f_prep: float = 100e6

    def __post_init__(self):
        if not (0 <= self.pA_z <= 1 and 0 <= self.pB_z <= 1):
            raise ValueError("basis probabilities must lie in [0, 1]")
        if self.f_ec < 1:
            raise ValueError("f_ec must be at least 1")
        if self.f_prep < 0:
            raise ValueError("f_prep must be non-negative")

    @property
    def pA_x(self) -> float:
        return 1.0 - self.pA_z

    @property
    def pB_x(self) -> float:
        return 1.0 - self.pB_z

    def sifting_probabilities(self) -> tuple[float, float]:
        """``(p_Z, p_X)``: share of matched-basis events in each basis."""
        zz = self.pA_z * self.pB_z
        xx = self.pA_x * self.pB_x
        return zz / (zz + xx), xx / (zz + xx)


@dataclass(frozen=True)
class GainError:
    q: float
    e: float


@dataclass
class SecrecyBounds:
    q_low: float
    e_up_z: float
    e_up_x: float
    y0_low: float | None = None
    y1_low_z: float | None = None
    y1_low_x: float | None = None
    status: str = STATUS_OK


@dataclass
class FLIntermediates:
    omega: float
    theta: float
    omega_t: float
    theta_t: float
    delta: float
    eps_aux: float
    kappa: float


@dataclass
class KeyRatePoint:
    """Key rate at one distance.

    ``rate_per_pulse`` is R in bits per sent pulse. ``bits_per_second_raw``
    is ``R*f_prep`` and ``bits_per_second`` additionally keeps only the
    matched-Z fraction ``pA_z*pB_z``.
    """

    distance: float
    gains: dict[str, GainError]
    bounds: SecrecyBounds
    r_reduction: float
    rate_per_pulse: float
    bits_per_second: float
    bits_per_second_raw: float
    status: str = STATUS_OK
    mode: str = "nodecoy"

    @property
    def flagged(self) -> bool:
        return self.status != STATUS_OK

    def to_json(self) -> dict:
        return {
            "distance_km": self.distance if math.isfinite(self.distance) else None,
            "mode": self.mode,
            "status": self.status,
            "gains": {k: {"q": g.q, "e": g.e} for k, g in self.gains.items()},
            "bounds": asdict(self.bounds),
            "r": self.r_reduction,
            "R": self.rate_per_pulse,
            "bits_per_sec": self.bits_per_second,
            "bits_per_sec_raw": self.bits_per_second_raw,
        }


def binary_entropy(p):
    """Base-2 binary entropy; ``h(0) = h(1) = 0``."""
    a = np.asarray(p, dtype=np.float64)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise ValueError("binary_entropy argument must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -a * np.log2(a) - (1 - a) * np.log2(1 - a)
    h = np.where((a == 0) | (a == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def channel_model(gamma: float, ch: ChannelParams) -> GainError:
    """Gain and error rate of intensity ``gamma`` on the lossy fibre link."""
    if gamma < 0:
        raise ValueError("intensity must be non-negative")
    x = ch.transmittance * ch.eta_det * gamma
    detected = -math.expm1(-x)
    q = ch.p_dc + (1 - ch.p_dc) * detected
    e = (ch.p_dc / 2 + ch.e_d * detected) / q if q > 0 else 0.0
    return GainError(q, e)


def decoy_bounds(gains: tuple[GainError, GainError, GainError],
                 intensities: tuple[float, float, float]):
    """Vacuum and single-photon bounds from three intensities.

    Returns ``(y0_low, y1_low, q1_low, e1_up)``. ``e1_up`` is None when the
    single-photon yield bound is zero (nothing can be certified).
    """
    g0, g1, g2 = intensities
    _check_decoy_order(g0, g1, g2, "γ")
    q0, q1, q2 = (g.q for g in gains)
    e1, e2 = gains[1].e, gains[2].e
    a1 = q1 * math.exp(g1)
    a2 = q2 * math.exp(g2)
    y0 = max((g1 * a2 - g2 * a1) / (g1 - g2), 0.0)
    y1 = g0 / (g0 * g1 - g0 * g2 - g1 ** 2 + g2 ** 2) * (
        a1 - a2 - (g1 ** 2 - g2 ** 2) / g0 ** 2 * (q0 * math.exp(g0) - y0))
    y1 = max(y1, 0.0)
    q1_low = g0 * math.exp(-g0) * y1
    if y1 <= 0:
        return y0, 0.0, 0.0, None
    e1_up = (e1 * a1 - e2 * a2) / ((g1 - g2) * y1)
    return y0, y1, q1_low, min(max(e1_up, 0.0), 1.0)


def _fl_objective(delta, omega_t, theta):
    """``(eps_aux, eps^2 + delta^2, feasible)`` with ``theta`` multiplied in.

    Uses ``theta^2 * theta_t = theta(1-theta)`` and friends so the
    expression stays finite as ``theta -> 0``.
    """
    d = np.asarray(delta, dtype=np.float64)
    s = np.sqrt(np.clip(theta * (1 - theta) * (1 - d * d), 0.0, None))
    inner = omega_t * theta - theta * theta - d * d * theta * (1 - 2 * theta) - 2 * d * theta * s
    feasible = inner >= 0
    eps = (1 - theta) * d + s + np.sqrt(np.where(feasible, inner, 0.0))
    return eps, eps * eps + d * d, feasible


def fl_reduction(omega: float, theta: float, details: bool = False,
                 n_scan: int = 10_000):
    """Privacy-amplification factor ``r = 1 - h(kappa)`` for bit error ``omega``
    and complementary-basis error ``theta``.

    ``kappa = omega * max_delta (eps^2 + delta^2)`` over the part of
    ``[0, 1]`` where the inner square root is real. The maximum is located on
    a scan of ``n_scan`` points and polished by golden-section search; the
    feasible-set boundaries are refined by bisection and also tried.
    ``kappa`` is clamped to 0.5 and ``r`` to ``[0, 1]``.

    Returns ``(r, kappa)``, or ``(r, FLIntermediates)`` with ``details``.
    """
    if not (0 <= omega <= 0.5 and 0 <= theta <= 0.5):
        raise ValueError("error rates must lie in [0, 0.5]")
    if omega == 0:
        # omega*eps^2 -> theta as omega -> 0; the delta terms vanish
        kappa, delta, eps = theta, 0.0, math.inf
        omega_t = math.inf
    else:
        omega_t = (1 - omega) / omega
        delta, best = _maximise_delta(omega_t, theta, n_scan)
        if delta is None:
            kappa, eps = 0.5, math.nan
        else:
            eps = float(_fl_objective(delta, omega_t, theta)[0])
            kappa = omega * best
    kappa = min(kappa, 0.5)
    r = max(1.0 - binary_entropy(kappa), 0.0)
    if not details:
        return r, kappa
    theta_t = (1 - theta) / theta if theta > 0 else math.inf
    return r, FLIntermediates(omega, theta, omega_t, theta_t,
                              math.nan if delta is None else delta, eps, kappa)


def _maximise_delta(omega_t, theta, n_scan):
    grid = np.linspace(0.0, 1.0, n_scan + 1)
    _, val, feas = _fl_objective(grid, omega_t, theta)
    if not feas.any():
        return None, None

    def f(d):
        _, v, ok = _fl_objective(d, omega_t, theta)
        return float(v) if ok else -math.inf

    candidates = []
    # feasibility boundaries
    change = np.nonzero(feas[1:] != feas[:-1])[0]
    for i in change:
        a, b = grid[i], grid[i + 1]
        fa = feas[i]
        for _ in range(60):
            m = 0.5 * (a + b)
            if bool(_fl_objective(m, omega_t, theta)[2]) == fa:
                a = m
            else:
                b = m
        candidates.append(a if fa else b)
    # interior maximum around the best grid point
    i = int(np.argmax(np.where(feas, val, -np.inf)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_scan)]
    candidates.extend([grid[i], _golden_max(f, lo, hi)])
    candidates.extend(d for d in (0.0, 1.0) if f(d) > -math.inf)
    best_d = max(candidates, key=f)
    return float(best_d), f(best_d)


def _golden_max(f, a, b, tol=1e-12):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def no_decoy_bounds(z: GainError, x: GainError, mu: float, nu: float) -> SecrecyBounds:
    """Worst-case vacuum+single-photon gain and error bounds without decoys.

    All losses are charged to the vacuum+single-photon part and all errors
    to it as well. The error bound divides by the lower gain bound.
    """
    if mu < 0 or nu < 0:
        raise ValueError("intensities must be non-negative")
    qz = max(z.q - 1 + (1 + mu) * math.exp(-mu), 0.0)
    qx = max(x.q - 1 + (1 + nu) * math.exp(-nu), 0.0)
    if qz <= 0 or qx <= 0:
        return SecrecyBounds(qz, 1.0, 1.0, status=STATUS_INDETERMINATE)
    ez = min(z.e * z.q / qz, 1.0)
    ex = min(x.e * x.q / qx, 1.0)
    return SecrecyBounds(qz, ez, ex)


def _finish(distance, gains, bounds, ec_q, ec_e, cfg, mode) -> KeyRatePoint:
    if bounds.status != STATUS_OK:
        return KeyRatePoint(distance, gains, bounds, 0.0, 0.0, 0.0, 0.0, bounds.status, mode)
    r, _ = fl_reduction(min(bounds.e_up_z, 0.5), min(bounds.e_up_x, 0.5))
    rate = bounds.q_low * r - cfg.f_ec * ec_q * binary_entropy(min(ec_e, 1.0))
    status = STATUS_OK
    if not rate > 0:
        rate, status = 0.0, STATUS_INSECURE
    raw = rate * cfg.f_prep
    return KeyRatePoint(distance, gains, bounds, r, rate, raw * cfg.pA_z * cfg.pB_z, raw,
                        status, mode)


def key_rate_from_gains(mode: SourceIntensities, gains: dict[str, GainError],
                        cfg: ProtocolConfig, distance: float = math.nan) -> KeyRatePoint:
    """Key rate from measured (or modelled) gains and error rates.

    ``gains`` keys: ``z``/``x`` without decoys; ``z0, z1, z2, x0, x1, x2``
    with decoys (index = intensity slot, 0 = signal).
    """
    if isinstance(mode, NoDecoy):
        z, x = gains["z"], gains["x"]
        bounds = no_decoy_bounds(z, x, mode.mu, mode.nu)
        return _finish(distance, gains, bounds, z.q, z.e, cfg, "nodecoy")
    zs = (gains["z0"], gains["z1"], gains["z2"])
    xs = (gains["x0"], gains["x1"], gains["x2"])
    y0z, y1z, q1z, e1z = decoy_bounds(zs, (mode.mu0, mode.mu1, mode.mu2))
    _, y1x, _, e1x = decoy_bounds(xs, (mode.nu0, mode.nu1, mode.nu2))
    if e1z is None or e1x is None or q1z <= 0:
        bounds = SecrecyBounds(q1z, 1.0, 1.0, y0z, y1z, y1x, STATUS_INDETERMINATE)
    else:
        bounds = SecrecyBounds(q1z, e1z, e1x, y0z, y1z, y1x)
    return _finish(distance, gains, bounds, zs[0].q, zs[0].e, cfg, "decoy")


def model_gains(mode: SourceIntensities, ch: ChannelParams) -> dict[str, GainError]:
    if isinstance(mode, NoDecoy):
        return {"z": channel_model(mode.mu, ch), "x": channel_model(mode.nu, ch)}
    names = ("z0", "z1", "z2", "x0", "x1", "x2")
    vals = (mode.mu0, mode.mu1, mode.mu2, mode.nu0, mode.nu1, mode.nu2)
    return {k: channel_model(v, ch) for k, v in zip(names, vals)}


def secret_key_rate(mode: SourceIntensities, ch: ChannelParams,
                    cfg: ProtocolConfig) -> KeyRatePoint:
    """Analytic key rate at ``ch.distance``; negative rates clamp to zero and flag."""
    return key_rate_from_gains(mode, model_gains(mode, ch), cfg, ch.distance)


@dataclass
class DistanceScan:
    points: list[KeyRatePoint]
    max_distance: float
    mode: str = field(default="nodecoy")


def scan_distance(mode: SourceIntensities, ch_template: ChannelParams, cfg: ProtocolConfig,
                  l_min: float, l_max: float, step: float,
                  resolution: float = 0.1) -> DistanceScan:
    """Key rate on ``l_min, l_min+step, ... <= l_max``.

    ``max_distance`` is the largest distance with a positive rate, refined
    by bisection to ``resolution`` between the last secure grid point and
    the first insecure one. It is 0 when no grid point is secure.
    """
    if l_min > l_max:
        raise ValueError("l_min must not exceed l_max")
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(math.floor((l_max - l_min) / step + 1e-9)) + 1
    grid = [l_min + i * step for i in range(n)]
    points = [secret_key_rate(mode, ch_template.at(L), cfg) for L in grid]
    secure = [p.rate_per_pulse > 0 for p in points]
    label = "decoy" if isinstance(mode, Decoy) else "nodecoy"
    if not any(secure):
        return DistanceScan(points, 0.0, label)
    last = max(i for i, s in enumerate(secure) if s)
    if last == len(grid) - 1:
        return DistanceScan(points, grid[last], label)
    lo, hi = grid[last], grid[last + 1]
    while hi - lo > resolution / 2:
        mid = 0.5 * (lo + hi)
        if secret_key_rate(mode, ch_template.at(mid), cfg).rate_per_pulse > 0:
            lo = mid
        else:
            hi = mid
    return DistanceScan(points, lo, label)


def max_distance(mode: SourceIntensities, ch_template: ChannelParams, cfg: ProtocolConfig,
                 l_max: float = 400.0, step: float = 1.0) -> float:
    return scan_distance(mode, ch_template, cfg, 0.0, l_max, step).max_distance


def optimise_mu(ch: ChannelParams, cfg: ProtocolConfig, mus=None, nu_ratio: float = 2.0):
    """Decoy-free signal intensity maximising the rate at ``ch.distance`` (grid search)."""
    mus = np.linspace(0.002, 0.2, 100) if mus is None else mus
    best = max(((secret_key_rate(NoDecoy(m, nu_ratio * m), ch, cfg).rate_per_pulse, m)
                for m in mus))
    return best[1], best[0]
