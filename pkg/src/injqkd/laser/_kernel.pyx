# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernel for the master/slave rate equations.

Same arithmetic, in the same order, as ``_kernel_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, cos, fabs, sin, sqrt, isfinite

cnp.import_array()

cdef double ELEMENTARY_CHARGE = 1.602176634e-19
cdef double SUBSTEP_PHASE = 0.1
cdef long MAX_SUBSTEPS = 1 << 16

cdef enum:
    OK = 0
    NEGATIVE_STATE = 1
    NON_FINITE = 2


cdef struct Coef:
    double inv_den
    double n_tr
    double pcoef
    double two_gp
    double inv_te
    double inv_tp
    double inv_gtp
    double c_sp
    double chirp


cdef struct Drive:
    double kappa
    double domega
    double q_floor


cdef Coef _coefficients(p):
    cdef Coef c
    tau_ph, tau_e, eta, n_th, n_tr, photon_energy, c_sp, gamma_conf, alpha, gamma_p = p
    c.inv_den = 1.0 / (n_th - n_tr)
    c.n_tr = n_tr
    c.pcoef = eta * photon_energy / (2.0 * gamma_conf * tau_ph)
    c.two_gp = 2.0 * gamma_p
    c.inv_te = 1.0 / tau_e
    c.inv_tp = 1.0 / tau_ph
    c.inv_gtp = 1.0 / (gamma_conf * tau_ph)
    c.c_sp = c_sp
    c.chirp = alpha / (2.0 * tau_ph)
    return c


cdef inline void _rhs(const Coef* c, double n, double q, double i,
                      double* dn, double* dq, double* dphi) noexcept nogil:
    cdef double qc = q if q > 0.0 else 0.0
    cdef double gl = (n - c.n_tr) * c.inv_den
    cdef double g = gl / sqrt(1.0 + c.two_gp * (qc * c.pcoef))
    dn[0] = i / ELEMENTARY_CHARGE - n * c.inv_te - qc * g * c.inv_gtp
    dq[0] = (g - 1.0) * qc * c.inv_tp + c.c_sp * n * c.inv_te
    dphi[0] = c.chirp * (gl - 1.0)


cdef inline void _slave_rhs(const Coef* c, const Drive* d, double t, double qm, double phim,
                            double n, double q, double phi, double i,
                            double* dn, double* dq, double* dphi) noexcept nogil:
    _rhs(c, n, q, i, dn, dq, dphi)
    cdef double qmc = qm if qm > 0.0 else 0.0
    cdef double qc = q if q > 0.0 else 0.0
    cdef double qf = qc if qc > d.q_floor else d.q_floor
    cdef double arg = d.domega * t + phim - phi
    dq[0] = dq[0] + 2.0 * d.kappa * sqrt(qmc * qc) * cos(arg)
    dphi[0] = dphi[0] + d.kappa * sqrt(qmc / qf) * sin(arg)


cdef inline double _hermite(double s, double dt, double p0, double m0,
                            double p1, double m1) noexcept nogil:
    cdef double s2 = s * s
    cdef double s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * dt * m0
            + (3.0 * s2 - 2.0 * s3) * p1 + (s3 - s2) * dt * m1)


cdef bint _slave_step(const Coef* cs, const Drive* d, double t, double dt,
                      double* pn, double* pq, double* pf, double i,
                      double qm0, double dqm0, double qm1, double dqm1,
                      double fm0, double dfm0, double fm1, double dfm1,
                      long n_sub, double neg_tol) noexcept nogil:
    cdef double ns = pn[0], qs = pq[0], fs = pf[0]
    cdef double h = dt / n_sub
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double sa, sb, sc, ta, qa, fa, qb, fb, qc, fc
    cdef double b1n, b1q, b1f, b2n, b2q, b2f, b3n, b3q, b3f, b4n, b4q, b4f
    cdef long j
    for j in range(n_sub):
        sa = <double>j / n_sub
        sb = (j + 0.5) / n_sub
        sc = (j + 1.0) / n_sub
        ta = t + j * h
        qa = _hermite(sa, dt, qm0, dqm0, qm1, dqm1)
        fa = _hermite(sa, dt, fm0, dfm0, fm1, dfm1)
        qb = _hermite(sb, dt, qm0, dqm0, qm1, dqm1)
        fb = _hermite(sb, dt, fm0, dfm0, fm1, dfm1)
        qc = _hermite(sc, dt, qm0, dqm0, qm1, dqm1)
        fc = _hermite(sc, dt, fm0, dfm0, fm1, dfm1)

        _slave_rhs(cs, d, ta, qa, fa, ns, qs, fs, i, &b1n, &b1q, &b1f)
        _slave_rhs(cs, d, ta + h2, qb, fb, ns + h2 * b1n, qs + h2 * b1q, fs + h2 * b1f,
                   i, &b2n, &b2q, &b2f)
        _slave_rhs(cs, d, ta + h2, qb, fb, ns + h2 * b2n, qs + h2 * b2q, fs + h2 * b2f,
                   i, &b3n, &b3q, &b3f)
        _slave_rhs(cs, d, ta + h, qc, fc, ns + h * b3n, qs + h * b3q, fs + h * b3f,
                   i, &b4n, &b4q, &b4f)
        ns = ns + h6 * (b1n + 2.0 * b2n + 2.0 * b3n + b4n)
        qs = qs + h6 * (b1q + 2.0 * b2q + 2.0 * b3q + b4q)
        fs = fs + h6 * (b1f + 2.0 * b2f + 2.0 * b3f + b4f)
        pn[0] = ns
        pq[0] = qs
        pf[0] = fs
        if not (isfinite(ns) and isfinite(qs) and isfinite(fs)):
            return False
        if qs < 0.0:
            if n_sub < MAX_SUBSTEPS or qs < -neg_tol:
                return False
            qs = 0.0
            pq[0] = 0.0
        if ns < 0.0:
            return False
    return True


cdef long _substeps(const Coef* cs, const Drive* d, double dt, double qm,
                    double ns, double qs, double i) noexcept nogil:
    cdef double dn, dq, df
    _rhs(cs, ns, qs, i, &dn, &dq, &df)
    cdef double qmc = qm if qm > 0.0 else 0.0
    cdef double qc = qs if qs > 0.0 else 0.0
    cdef double qf = qc if qc > d.q_floor else d.q_floor
    cdef double rate_inj = d.kappa * sqrt(qmc / qf)
    cdef double rate_q = fabs(dq) / qf + 2.0 * rate_inj
    cdef double rate = rate_q if rate_q > rate_inj else rate_inj
    cdef double n = ceil(rate * dt / SUBSTEP_PHASE)
    if n < 1.0:
        return 1
    if n > MAX_SUBSTEPS:
        return MAX_SUBSTEPS
    return <long>n


def run(pm, ps, double kappa, double domega, double q_floor, pump_m, pump_s,
        double dt, double t0, y0, double neg_tol):
    """Integrate ``len(pump_m)`` steps; see ``_kernel_py.run``."""
    cdef Coef cm = _coefficients(pm)
    cdef Coef cs
    cdef Drive drv
    drv.kappa = kappa
    drv.domega = domega
    drv.q_floor = q_floor
    cdef bint with_slave = ps is not None
    if with_slave:
        cs = _coefficients(ps)
    cdef const double[::1] im_arr = np.ascontiguousarray(pump_m, dtype=np.float64)
    cdef const double[::1] is_arr
    if with_slave:
        is_arr = np.ascontiguousarray(pump_s, dtype=np.float64)
    cdef Py_ssize_t n_steps = im_arr.shape[0]
    out_np = np.empty((n_steps, 6), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef double nm = y0[0], qm = y0[1], fm = y0[2]
    cdef double ns = y0[3], qs = y0[4], fs = y0[5]
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    cdef double a1n, a1q, a1f, a2n, a2q, a2f, a3n, a3q, a3f, a4n, a4q, a4f
    cdef double e1n, e1q, e1f, nm1, qm1, fm1, n_new, q_new, f_new
    cdef double t, im, is_
    cdef long n_sub
    cdef bint ok
    cdef int status = OK
    cdef Py_ssize_t bad = -1
    cdef Py_ssize_t k, done = n_steps
    with nogil:
        for k in range(n_steps):
            out[k, 0] = nm
            out[k, 1] = qm
            out[k, 2] = fm
            out[k, 3] = ns
            out[k, 4] = qs
            out[k, 5] = fs
            t = t0 + k * dt
            im = im_arr[k]
            _rhs(&cm, nm, qm, im, &a1n, &a1q, &a1f)
            _rhs(&cm, nm + h2 * a1n, qm + h2 * a1q, im, &a2n, &a2q, &a2f)
            _rhs(&cm, nm + h2 * a2n, qm + h2 * a2q, im, &a3n, &a3q, &a3f)
            _rhs(&cm, nm + dt * a3n, qm + dt * a3q, im, &a4n, &a4q, &a4f)
            nm1 = nm + h6 * (a1n + 2.0 * a2n + 2.0 * a3n + a4n)
            qm1 = qm + h6 * (a1q + 2.0 * a2q + 2.0 * a3q + a4q)
            fm1 = fm + h6 * (a1f + 2.0 * a2f + 2.0 * a3f + a4f)

            if not (isfinite(nm1) and isfinite(qm1) and isfinite(fm1)):
                status = NON_FINITE
                bad = k
                done = k + 1
                break
            if qm1 < 0.0:
                if qm1 < -neg_tol:
                    status = NEGATIVE_STATE
                    bad = k
                    done = k + 1
                    break
                qm1 = 0.0
            if nm1 < 0.0:
                status = NEGATIVE_STATE
                bad = k
                done = k + 1
                break

            if with_slave:
                is_ = is_arr[k]
                _rhs(&cm, nm1, qm1, im, &e1n, &e1q, &e1f)
                n_sub = _substeps(&cs, &drv, dt, qm, ns, qs, is_)
                while True:
                    n_new = ns
                    q_new = qs
                    f_new = fs
                    ok = _slave_step(&cs, &drv, t, dt, &n_new, &q_new, &f_new, is_,
                                     qm, a1q, qm1, e1q, fm, a1f, fm1, e1f, n_sub, neg_tol)
                    if ok or n_sub >= MAX_SUBSTEPS:
                        break
                    n_sub = 2 * n_sub if 2 * n_sub < MAX_SUBSTEPS else MAX_SUBSTEPS
                if not ok:
                    if not (isfinite(n_new) and isfinite(q_new) and isfinite(f_new)):
                        status = NON_FINITE
                    else:
                        status = NEGATIVE_STATE
                    bad = k
                    done = k + 1
                    break
                ns = n_new
                qs = q_new
                fs = f_new

            nm = nm1
            qm = qm1
            fm = fm1
    if done < n_steps:
        out_np[done:] = np.nan
    return out_np, np.array([nm, qm, fm, ns, qs, fs]), status, bad
