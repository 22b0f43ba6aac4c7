"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``RFLINK_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("RFLINK_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def get_backend(name=None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def onepole(x, alpha, backend=None):
    return get_backend(backend).onepole(np.ascontiguousarray(x, dtype=float), float(alpha))


def adev_sums(x, ms, backend=None):
    return get_backend(backend).adev_sums(
        np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(ms, dtype=np.int_)
    )


def pmd_vector(theta, delta, dgd, backend=None):
    f = np.ascontiguousarray
    return get_backend(backend).pmd_vector(f(theta, dtype=float), f(delta, dtype=float),
                                           f(dgd, dtype=float))


def servo_loop(fwd, bwd, err_noise, omega_in, s0, axis, kappa_fast, kappa_slow, dt, kp, ki,
               D, D2, mode, fast_half, slow_half, tau_thermal, abort_limit, backend=None):
    f = np.ascontiguousarray
    if omega_in is None:
        omega_in = np.zeros((0, 3))
    return get_backend(backend).servo_loop(
        f(fwd, dtype=float), f(bwd, dtype=float), f(err_noise, dtype=float),
        f(omega_in, dtype=float), f(s0, dtype=float), f(axis, dtype=float),
        float(kappa_fast), float(kappa_slow), float(dt), float(kp), float(ki),
        int(D), int(D2), int(mode), float(fast_half), float(slow_half),
        float(tau_thermal), float(abort_limit),
    )
