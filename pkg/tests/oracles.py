"""Independent reference computations used as test oracles.

Nothing here imports the package's numerical code; each oracle is written
from the defining formulas, in a different form where possible.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import optimize

E_CHARGE = 1.602176634e-19


def entropy_mp(p, dps: int = 50) -> float:
    """Binary entropy in 50-digit arithmetic."""
    with mpmath.workdps(dps):
        p = mpmath.mpf(p)
        if p == 0 or p == 1:
            return 0.0
        return float(-p * mpmath.log(p, 2) - (1 - p) * mpmath.log(1 - p, 2))


def channel_mp(gamma, xi, L, p_dc, eta_det, e_d, dps: int = 40):
    """Gain and QBER of the fibre model in high precision."""
    with mpmath.workdps(dps):
        t = mpmath.power(10, -mpmath.mpf(xi) * L / 10)
        x = t * eta_det * gamma
        q = 1 - (1 - mpmath.mpf(p_dc)) * mpmath.exp(-x)
        e = (mpmath.mpf(p_dc) / 2 + e_d * (1 - mpmath.exp(-x))) / q
        return float(q), float(e)


def photon_number_channel(gamma, xi, L, p_dc, eta_det, e_d, n_max: int = 60):
    """Per-photon-number yields and errors, summed as a truncated Poisson series.

    Returns ``(Y, e, P)``: arrays over n = 0..n_max of yield, error rate and
    Poisson weight, with the neglected tail below 1e-15 for the intensities
    used in tests.
    """
    t = 10 ** (-xi * L / 10)
    T = t * eta_det
    n = np.arange(n_max + 1)
    Y = 1 - (1 - p_dc) * (1 - T) ** n
    err = (p_dc / 2 + e_d * (1 - (1 - T) ** n)) / Y
    logp = -gamma + n * math.log(gamma) - np.array([math.lgamma(k + 1) for k in n]) \
        if gamma > 0 else np.where(n == 0, 0.0, -np.inf)
    P = np.exp(logp)
    tail = 1 - P.sum()
    assert tail < 1e-15, tail
    return Y, err, P


def fl_reduction_grid(omega, theta, n: int = 1_000_000):
    """``(r, kappa)`` by brute force over a dense delta grid, literal formula."""
    wt = (1 - omega) / omega
    tt = (1 - theta) / theta
    d = np.linspace(0.0, 1.0, n + 1)
    root = np.sqrt(np.maximum(tt * (1 - d * d), 0.0))
    bracket = wt * (tt + 1) - 1 - d * d * (tt - 1) - 2 * d * root
    ok = bracket >= 0
    if not ok.any():
        return 0.0, 0.5
    eps = theta * (tt * d + root + np.sqrt(np.where(ok, bracket, 0.0)))
    best = np.max(np.where(ok, eps * eps + d * d, -np.inf))
    kappa = min(omega * best, 0.5)
    return max(1 - entropy_mp(kappa), 0.0), kappa


def laser_rhs(n, q, current, p):
    """Free-running ``(dN/dt, dQ/dt)`` written directly from the model."""
    power = q * p["eta"] * p["hw"] / (2 * p["gamma"] * p["tau_ph"])
    g_lin = (n - p["n_tr"]) / (p["n_th"] - p["n_tr"])
    g = g_lin / math.sqrt(1 + 2 * p["gamma_p"] * power)
    dn = current / E_CHARGE - n / p["tau_e"] - q * g / (p["gamma"] * p["tau_ph"])
    dq = (g - 1) * q / p["tau_ph"] + p["c_sp"] * n / p["tau_e"]
    return dn, dq


def laser_steady_state(current, p):
    """Stationary ``(N, Q)`` of the free-running laser.

    For fixed Q, dN/dt = 0 is linear in N, so N(Q) is closed form; the
    remaining scalar equation dQ/dt = 0 is solved by Brent's method in log Q.
    """
    den = p["n_th"] - p["n_tr"]
    pw = p["eta"] * p["hw"] / (2 * p["gamma"] * p["tau_ph"])

    def n_of_q(q):
        s = math.sqrt(1 + 2 * p["gamma_p"] * q * pw)
        a = q / (p["gamma"] * p["tau_ph"] * den * s)
        return (current / E_CHARGE + a * p["n_tr"]) / (1 / p["tau_e"] + a)

    def f(logq):
        q = math.exp(logq)
        return laser_rhs(n_of_q(q), q, current, p)[1] * p["tau_ph"] / q

    logq = optimize.brentq(f, math.log(1e-3), math.log(1e9), xtol=1e-15, rtol=1e-15)
    q = math.exp(logq)
    return n_of_q(q), q


LASER_PARAMS = {
    "tau_ph": 1e-12, "tau_e": 1e-9, "eta": 0.3, "n_th": 5.5e7, "n_tr": 4.0e7,
    "hw": 0.8 * E_CHARGE, "c_sp": 1e-5, "gamma": 0.12, "alpha": 5.0, "gamma_p": 20.0,
}


def butterworth_gain(f, center, half_width, order):
    return 1 / math.sqrt(1 + ((f - center) / half_width) ** (2 * order))
