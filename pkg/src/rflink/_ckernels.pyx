# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Signatures mirror :mod:`rflink._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


def onepole(const double[::1] x, double alpha):
    cdef Py_ssize_t n = x.shape[0], k
    out = np.empty(n)
    cdef double[::1] y = out
    cdef double acc
    if n == 0:
        return out
    acc = x[0]
    for k in range(n):
        acc += alpha * (x[k] - acc)
        y[k] = acc
    return out


def adev_sums(const double[::1] x, const long[::1] ms):
    cdef Py_ssize_t n = x.shape[0], j, i, m, cnt
    cdef double s, d
    sums = np.zeros(ms.shape[0])
    counts = np.zeros(ms.shape[0], dtype=np.int64)
    cdef double[::1] sv = sums
    cdef long long[::1] cv = counts
    for j in range(ms.shape[0]):
        m = ms[j]
        cnt = n - 2 * m
        if m < 1 or cnt < 1:
            continue
        s = 0.0
        for i in range(cnt):
            d = x[i + 2 * m] - 2.0 * x[i + m] + x[i]
            s += d * d
        sv[j] = s
        cv[j] = cnt
    return sums, counts


def servo_loop(const double[::1] fwd, const double[::1] bwd, const double[::1] err_noise,
               const double[:, ::1] omega_in, const double[::1] s0, const double[::1] axis,
               double kappa_fast, double kappa_slow,
               double dt, double kp, double ki, long D, long D2, int mode,
               double fast_half, double slow_half, double tau_thermal, double abort_limit):
    cdef Py_ssize_t n = fwd.shape[0], k
    remote_a = np.zeros(n)
    error_a = np.zeros(n)
    fast_a = np.zeros(n)
    slow_a = np.zeros(n)
    ftot_a = np.zeros(n)
    cdef double[::1] remote = remote_a
    cdef double[::1] error = error_a
    cdef double[::1] fast = fast_a
    cdef double[::1] slow = slow_a
    cdef double[::1] ftot = ftot_a
    cdef bint coupled = omega_in.shape[0] == n and (kappa_fast != 0.0 or kappa_slow != 0.0)
    cdef bint pmd = omega_in.shape[0] == n
    cdef double a_th = dt / tau_thermal if tau_thermal > 0 else 1.0
    cdef double f_cur = 0.0, s_cur = 0.0, integ = 0.0
    cdef double c, c_old, f_k, e, u, cdes, th, ct, st, dot, sx, sy, sz, cx, cy, cz
    cdef int flags = 0
    cdef long status = 0
    if a_th > 1.0:
        a_th = 1.0
    for k in range(n):
        fast[k] = f_cur
        slow[k] = s_cur
        c = f_cur + s_cur
        f_k = fwd[k]
        if pmd:
            if coupled:
                th = kappa_fast * f_cur + kappa_slow * s_cur
                ct = cos(th)
                st = sin(th)
                dot = axis[0] * s0[0] + axis[1] * s0[1] + axis[2] * s0[2]
                cx = axis[1] * s0[2] - axis[2] * s0[1]
                cy = axis[2] * s0[0] - axis[0] * s0[2]
                cz = axis[0] * s0[1] - axis[1] * s0[0]
                sx = s0[0] * ct + cx * st + axis[0] * dot * (1.0 - ct)
                sy = s0[1] * ct + cy * st + axis[1] * dot * (1.0 - ct)
                sz = s0[2] * ct + cz * st + axis[2] * dot * (1.0 - ct)
            else:
                sx = s0[0]
                sy = s0[1]
                sz = s0[2]
            f_k -= 0.5 * (omega_in[k, 0] * sx + omega_in[k, 1] * sy + omega_in[k, 2] * sz)
        ftot[k] = f_k
        c_old = (fast[k - D] + slow[k - D]) if k >= D else 0.0
        e = c + c_old + bwd[k] + err_noise[k]
        e += ftot[k - D2] if k >= D2 else 0.0
        error[k] = e
        remote[k] = ((fast[k - D2] + slow[k - D2]) if k >= D2 else 0.0) + f_k
        if mode < 0:
            continue
        if fabs(e) > abort_limit and status == 0:
            status = k + 1
            break
        integ += ki * dt * e
        u = kp * e + integ
        cdes = -u
        if mode == 0:
            f_cur = cdes
        elif mode == 1:
            s_cur += a_th * (cdes - s_cur)
            f_cur = cdes - s_cur
        elif mode == 2:
            s_cur += a_th * (cdes - s_cur)
        else:
            f_cur = cdes
        if mode == 1 or mode == 3:
            if f_cur > fast_half:
                f_cur = fast_half
                flags |= 1
            elif f_cur < -fast_half:
                f_cur = -fast_half
                flags |= 1
        if mode == 1 or mode == 2:
            if s_cur > slow_half:
                s_cur = slow_half
                flags |= 2
            elif s_cur < -slow_half:
                s_cur = -slow_half
                flags |= 2
    return remote_a, error_a, fast_a, slow_a, ftot_a, flags, status


def pmd_vector(const double[:, ::1] theta, const double[:, ::1] delta, const double[::1] dgd):
    cdef Py_ssize_t nseg = theta.shape[0], n = theta.shape[1], i, k, r
    out = np.zeros((n, 3))
    cdef double[:, ::1] om = out
    cdef double q[3][3]
    cdef double bx, by, c, s, d, cx, cy, cz, x, y, z
    for i in range(n):
        for r in range(3):
            q[r][0] = 0.0
            q[r][1] = 0.0
            q[r][2] = 0.0
            q[r][r] = 1.0
        for k in range(nseg):
            bx = cos(2.0 * theta[k, i])
            by = sin(2.0 * theta[k, i])
            c = cos(delta[k, i])
            s = sin(delta[k, i])
            for r in range(3):
                x = q[r][0]
                y = q[r][1]
                z = q[r][2]
                om[i, r] += dgd[k] * (x * bx + y * by)
                # b x row with b = (bx, by, 0)
                cx = by * z
                cy = -bx * z
                cz = bx * y - by * x
                d = (bx * x + by * y) * (1.0 - c)
                q[r][0] = x * c + cx * s + bx * d
                q[r][1] = y * c + cy * s + by * d
                q[r][2] = z * c + cz * s
    return out
