"""Pure-Python RK4 kernel for the master/slave rate equations.

Mirrors ``_kernel.pyx`` operation for operation so both backends agree to
rounding. Used when the compiled extension is unavailable or disabled.

The master takes plain RK4 steps of size ``dt``. The slave is advanced over
the same interval on a cubic Hermite interpolant of the master, split into
``n_sub`` RK4 substeps: near a zero of the slave field the polar phase
equation becomes stiff (injection rate ``kappa*sqrt(Qm/Q)``), so the
substep count adapts to the local rate and doubles on a failed attempt.
"""
from math import ceil, cos, isfinite, sin, sqrt

import numpy as np

ELEMENTARY_CHARGE = 1.602176634e-19

OK = 0
NEGATIVE_STATE = 1
NON_FINITE = 2

SUBSTEP_PHASE = 0.1  # rad (or e-folds of Q) allowed per substep
MAX_SUBSTEPS = 1 << 16


def _coefficients(p):
    tau_ph, tau_e, eta, n_th, n_tr, photon_energy, c_sp, gamma_conf, alpha, gamma_p = p
    return (
        1.0 / (n_th - n_tr),
        n_tr,
        eta * photon_energy / (2.0 * gamma_conf * tau_ph),
        2.0 * gamma_p,
        1.0 / tau_e,
        1.0 / tau_ph,
        1.0 / (gamma_conf * tau_ph),
        c_sp,
        alpha / (2.0 * tau_ph),
    )


def _rhs(c, n, q, i):
    inv_den, n_tr, pcoef, two_gp, inv_te, inv_tp, inv_gtp, c_sp, chirp = c
    qc = q if q > 0.0 else 0.0
    gl = (n - n_tr) * inv_den
    g = gl / sqrt(1.0 + two_gp * (qc * pcoef))
    dn = i / ELEMENTARY_CHARGE - n * inv_te - qc * g * inv_gtp
    dq = (g - 1.0) * qc * inv_tp + c_sp * n * inv_te
    dphi = chirp * (gl - 1.0)
    return dn, dq, dphi


def _inject(kappa, domega, q_floor, t, qm, phim, q, phi):
    qmc = qm if qm > 0.0 else 0.0
    qc = q if q > 0.0 else 0.0
    qf = qc if qc > q_floor else q_floor
    arg = domega * t + phim - phi
    return 2.0 * kappa * sqrt(qmc * qc) * cos(arg), kappa * sqrt(qmc / qf) * sin(arg)


def _hermite(s, dt, p0, m0, p1, m1):
    s2 = s * s
    s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * dt * m0
            + (3.0 * s2 - 2.0 * s3) * p1 + (s3 - s2) * dt * m1)


def _slave_rhs(cs, kappa, domega, q_floor, t, qm, fm, n, q, f, i):
    dn, dq, df = _rhs(cs, n, q, i)
    jq, jf = _inject(kappa, domega, q_floor, t, qm, fm, q, f)
    return dn, dq + jq, df + jf


def _slave_step(cs, kappa, domega, q_floor, t, dt, ns, qs, fs, i,
                qm0, dqm0, qm1, dqm1, fm0, dfm0, fm1, dfm1, n_sub, neg_tol):
    """Advance the slave over ``[t, t+dt]`` in ``n_sub`` substeps.

    Returns ``(n, q, phi, ok)``; ``ok`` is False when a substep produced a
    negative or non-finite state.
    """
    h = dt / n_sub
    h2 = 0.5 * h
    h6 = h / 6.0
    for j in range(n_sub):
        sa = j / n_sub
        sb = (j + 0.5) / n_sub
        sc = (j + 1.0) / n_sub
        ta = t + j * h
        qa = _hermite(sa, dt, qm0, dqm0, qm1, dqm1)
        fa = _hermite(sa, dt, fm0, dfm0, fm1, dfm1)
        qb = _hermite(sb, dt, qm0, dqm0, qm1, dqm1)
        fb = _hermite(sb, dt, fm0, dfm0, fm1, dfm1)
        qc = _hermite(sc, dt, qm0, dqm0, qm1, dqm1)
        fc = _hermite(sc, dt, fm0, dfm0, fm1, dfm1)

        b1n, b1q, b1f = _slave_rhs(cs, kappa, domega, q_floor, ta, qa, fa, ns, qs, fs, i)
        b2n, b2q, b2f = _slave_rhs(cs, kappa, domega, q_floor, ta + h2, qb, fb,
                                   ns + h2 * b1n, qs + h2 * b1q, fs + h2 * b1f, i)
        b3n, b3q, b3f = _slave_rhs(cs, kappa, domega, q_floor, ta + h2, qb, fb,
                                   ns + h2 * b2n, qs + h2 * b2q, fs + h2 * b2f, i)
        b4n, b4q, b4f = _slave_rhs(cs, kappa, domega, q_floor, ta + h, qc, fc,
                                   ns + h * b3n, qs + h * b3q, fs + h * b3f, i)
        ns = ns + h6 * (b1n + 2.0 * b2n + 2.0 * b3n + b4n)
        qs = qs + h6 * (b1q + 2.0 * b2q + 2.0 * b3q + b4q)
        fs = fs + h6 * (b1f + 2.0 * b2f + 2.0 * b3f + b4f)
        if not (isfinite(ns) and isfinite(qs) and isfinite(fs)):
            return ns, qs, fs, False
        if qs < 0.0:
            if n_sub < MAX_SUBSTEPS or qs < -neg_tol:
                return ns, qs, fs, False
            qs = 0.0
        if ns < 0.0:
            return ns, qs, fs, False
    return ns, qs, fs, True


def _substeps(cs, kappa, domega, q_floor, t, dt, qm, fm, ns, qs, fs, i):
    dn, dq, df = _rhs(cs, ns, qs, i)
    qmc = qm if qm > 0.0 else 0.0
    qc = qs if qs > 0.0 else 0.0
    qf = qc if qc > q_floor else q_floor
    rate_inj = kappa * sqrt(qmc / qf)
    rate_q = abs(dq) / qf + 2.0 * rate_inj
    rate = rate_q if rate_q > rate_inj else rate_inj
    n = int(ceil(rate * dt / SUBSTEP_PHASE))
    if n < 1:
        return 1
    if n > MAX_SUBSTEPS:
        return MAX_SUBSTEPS
    return n


def run(pm, ps, kappa, domega, q_floor, pump_m, pump_s, dt, t0, y0, neg_tol):
    """Integrate ``len(pump_m)`` steps.

    Returns ``(out, y_end, status, bad_step)`` where ``out[i]`` is the state
    ``(Nm, Qm, phim, Ns, Qs, phis)`` at ``t0 + i*dt``. When ``ps`` is None
    only the master is advanced and slave columns stay at ``y0``.
    """
    cm = _coefficients(pm)
    with_slave = ps is not None
    cs = _coefficients(ps) if with_slave else None
    pump_m = np.asarray(pump_m, dtype=np.float64).tolist()
    pump_s = np.asarray(pump_s, dtype=np.float64).tolist() if with_slave else None
    n_steps = len(pump_m)
    nm, qm, fm, ns, qs, fs = (float(v) for v in y0)
    rows = []
    append = rows.append
    h2 = 0.5 * dt
    h6 = dt / 6.0
    status = OK
    bad = -1
    for k in range(n_steps):
        append((nm, qm, fm, ns, qs, fs))
        t = t0 + k * dt
        im = pump_m[k]
        a1n, a1q, a1f = _rhs(cm, nm, qm, im)
        a2n, a2q, a2f = _rhs(cm, nm + h2 * a1n, qm + h2 * a1q, im)
        a3n, a3q, a3f = _rhs(cm, nm + h2 * a2n, qm + h2 * a2q, im)
        a4n, a4q, a4f = _rhs(cm, nm + dt * a3n, qm + dt * a3q, im)
        nm1 = nm + h6 * (a1n + 2.0 * a2n + 2.0 * a3n + a4n)
        qm1 = qm + h6 * (a1q + 2.0 * a2q + 2.0 * a3q + a4q)
        fm1 = fm + h6 * (a1f + 2.0 * a2f + 2.0 * a3f + a4f)

        if not (isfinite(nm1) and isfinite(qm1) and isfinite(fm1)):
            status = NON_FINITE
            bad = k
            break
        if qm1 < 0.0:
            if qm1 < -neg_tol:
                status = NEGATIVE_STATE
                bad = k
                break
            qm1 = 0.0
        if nm1 < 0.0:
            status = NEGATIVE_STATE
            bad = k
            break

        if with_slave:
            is_ = pump_s[k]
            e1n, e1q, e1f = _rhs(cm, nm1, qm1, im)
            n_sub = _substeps(cs, kappa, domega, q_floor, t, dt, qm, fm, ns, qs, fs, is_)
            while True:
                n_new, q_new, f_new, ok = _slave_step(
                    cs, kappa, domega, q_floor, t, dt, ns, qs, fs, is_,
                    qm, a1q, qm1, e1q, fm, a1f, fm1, e1f, n_sub, neg_tol)
                if ok or n_sub >= MAX_SUBSTEPS:
                    break
                n_sub = 2 * n_sub if 2 * n_sub < MAX_SUBSTEPS else MAX_SUBSTEPS
            if not ok:
                status = NON_FINITE if not (isfinite(n_new) and isfinite(q_new)
                                            and isfinite(f_new)) else NEGATIVE_STATE
                bad = k
                break
            ns, qs, fs = n_new, q_new, f_new

        nm, qm, fm = nm1, qm1, fm1

    out = np.empty((n_steps, 6), dtype=np.float64)
    if rows:
        out[: len(rows)] = rows
    if len(rows) < n_steps:
        out[len(rows):] = np.nan
    return out, np.array([nm, qm, fm, ns, qs, fs]), status, bad
