"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import math

import numpy as np
from scipy.signal import lfilter


def onepole(x, alpha):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
    return y


def adev_sums(x, ms):
    x = np.asarray(x, dtype=float)
    n = x.size
    sums = np.zeros(len(ms))
    counts = np.zeros(len(ms), dtype=np.int64)
    for j, m in enumerate(ms):
        cnt = n - 2 * m
        if m < 1 or cnt < 1:
            continue
        d = x[2 * m :] - 2.0 * x[m : n - m] + x[: n - 2 * m]
        sums[j] = float(np.dot(d, d))
        counts[j] = cnt
    return sums, counts


def pmd_vector(theta, delta, dgd):
    """Input-referred PMD vector of a waveplate chain, shape (n_samples, 3)."""
    nseg, n = theta.shape
    omega = np.zeros((n, 3))
    q = np.broadcast_to(np.eye(3), (n, 3, 3))
    for k in range(nseg):
        b = np.stack([np.cos(2 * theta[k]), np.sin(2 * theta[k]), np.zeros(n)], axis=1)
        omega += dgd[k] * np.einsum("nij,nj->ni", q, b)
        # rotate every row of Q^T about b by delta (Rodrigues)
        c = np.cos(delta[k])[:, None, None]
        s = np.sin(delta[k])[:, None, None]
        bb = b[:, None, :]
        cross = np.cross(bb, q)
        dot = np.sum(bb * q, axis=2, keepdims=True)
        q = q * c + cross * s + bb * dot * (1.0 - c)
    return omega


def servo_loop(fwd, bwd, err_noise, omega_in, s0, axis, kappa_fast, kappa_slow,
               dt, kp, ki, D, D2, mode, fast_half, slow_half, tau_thermal, abort_limit):
    n = len(fwd)
    remote = np.zeros(n)
    error = np.zeros(n)
    fast = np.zeros(n)
    slow = np.zeros(n)
    ftot = np.zeros(n)
    pmd = omega_in.shape[0] == n
    coupled = pmd and (kappa_fast != 0.0 or kappa_slow != 0.0)
    a_th = min(dt / tau_thermal, 1.0) if tau_thermal > 0 else 1.0
    ax = [float(v) for v in axis]
    s = [float(v) for v in s0]
    dot = ax[0] * s[0] + ax[1] * s[1] + ax[2] * s[2]
    cr = (ax[1] * s[2] - ax[2] * s[1], ax[2] * s[0] - ax[0] * s[2], ax[0] * s[1] - ax[1] * s[0])
    fwd = np.asarray(fwd, dtype=float).tolist()
    bwd = np.asarray(bwd, dtype=float).tolist()
    err_noise = np.asarray(err_noise, dtype=float).tolist()
    om = omega_in.tolist() if pmd else None
    f_cur = s_cur = integ = 0.0
    flags = 0
    status = 0
    fl, sl, ft = [0.0] * n, [0.0] * n, [0.0] * n
    rem, err = [0.0] * n, [0.0] * n
    for k in range(n):
        fl[k] = f_cur
        sl[k] = s_cur
        c = f_cur + s_cur
        f_k = fwd[k]
        if pmd:
            if coupled:
                th = kappa_fast * f_cur + kappa_slow * s_cur
                ct, st = math.cos(th), math.sin(th)
                sv = [s[i] * ct + cr[i] * st + ax[i] * dot * (1.0 - ct) for i in range(3)]
            else:
                sv = s
            o = om[k]
            f_k -= 0.5 * (o[0] * sv[0] + o[1] * sv[1] + o[2] * sv[2])
        ft[k] = f_k
        c_old = fl[k - D] + sl[k - D] if k >= D else 0.0
        e = c + c_old + bwd[k] + err_noise[k] + (ft[k - D2] if k >= D2 else 0.0)
        err[k] = e
        rem[k] = (fl[k - D2] + sl[k - D2] if k >= D2 else 0.0) + f_k
        if mode < 0:
            continue
        if abs(e) > abort_limit and status == 0:
            status = k + 1
            break
        integ += ki * dt * e
        cdes = -(kp * e + integ)
        if mode == 0:
            f_cur = cdes
        elif mode == 1:
            s_cur += a_th * (cdes - s_cur)
            f_cur = cdes - s_cur
        elif mode == 2:
            s_cur += a_th * (cdes - s_cur)
        else:
            f_cur = cdes
        if mode in (1, 3) and abs(f_cur) > fast_half:
            f_cur = math.copysign(fast_half, f_cur)
            flags |= 1
        if mode in (1, 2) and abs(s_cur) > slow_half:
            s_cur = math.copysign(slow_half, s_cur)
            flags |= 2
    remote[:] = rem
    error[:] = err
    fast[:] = fl
    slow[:] = sl
    ftot[:] = ft
    return remote, error, fast, slow, ftot, flags, status
