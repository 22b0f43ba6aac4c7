"""Spectrum of a directly modulated laser and RF detection after dispersive fibre.

The field of a current-modulated DFB diode carries both amplitude and
frequency modulation::

    E = E0 * sqrt(1 + m_i cos(W t)) * exp(j (w0 t + m sin(W t)))

and is therefore an asymmetric comb of lines spaced by the RF frequency.
This module computes the comb coefficients, the per-line phases after
propagation (first order in chromatic dispersion), the recovered RF tone and
the phase noise produced when laser frequency jitter is converted by the
fibre dispersion.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

C_LIGHT = 299_792_458.0

#: terms of the sideband sums below this magnitude are dropped
SUM_CUTOFF = 1e-14
#: truncation target for both the Bessel and the envelope coefficients
TRUNCATION_TOL = 1e-12


@dataclass(frozen=True)
class LaserParams:
    """Static parameters of one modulated laser diode.

    ``chirp_mhz_per_ma`` is informational: the FM index ``frequency_mod_index``
    is what the spectrum calculations use.
    """

    wavelength_nm: float = 1550.0
    amplitude_mod_index: float = 0.7
    frequency_mod_index: float = 15.0
    chirp_mhz_per_ma: float = 375.0
    optical_power_mw: float = 20.0
    carrier_frequency_hz: float | None = None

    def __post_init__(self):
        if self.carrier_frequency_hz is None:
            object.__setattr__(
                self, "carrier_frequency_hz", C_LIGHT / (self.wavelength_nm * 1e-9)
            )
        nu, lam = self.carrier_frequency_hz, self.wavelength_nm * 1e-9
        if not (nu > 0 and lam > 0):
            raise ValueError("carrier frequency and wavelength must be positive")
        if abs(lam * nu / C_LIGHT - 1.0) > 1e-6:
            raise ValueError(
                f"wavelength {self.wavelength_nm} nm inconsistent with carrier {nu} Hz"
            )
        if not 0.0 <= self.amplitude_mod_index < 1.0:
            raise ValueError("amplitude_mod_index must lie in [0, 1)")
        if self.frequency_mod_index < 0:
            raise ValueError("frequency_mod_index must be >= 0")
        if self.optical_power_mw <= 0:
            raise ValueError("optical_power_mw must be positive")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.carrier_frequency_hz

    def check_power(self, ceiling_mw: float) -> None:
        if self.optical_power_mw > ceiling_mw:
            raise ValueError(
                f"optical power {self.optical_power_mw} mW above ceiling {ceiling_mw} mW"
            )


@dataclass(frozen=True)
class ModulationParams:
    """RF frequencies carried in each direction (Hz)."""

    forward_rf: float = 1.0e9
    backward_rf: float = 0.9e9

    def __post_init__(self):
        if self.forward_rf <= 0 or self.backward_rf <= 0:
            raise ValueError("RF frequencies must be positive")
        if self.forward_rf == self.backward_rf:
            raise ValueError(
                "forward and backward RF must differ to reject reflections and SBS"
            )


@dataclass(frozen=True)
class SpectrumCoefficients:
    truncation_order: int
    amplitude_coeffs: np.ndarray  # M_0..M_N
    bessel_coeffs: np.ndarray  # J_0..J_N
    sideband_plus: np.ndarray  # L_0, L_1+..L_N+ (index 0 holds L_0)
    sideband_minus: np.ndarray  # L_0, L_1-..L_N-
    m: float = 0.0
    m_i: float = 0.0

    @property
    def dc_term(self) -> float:
        return float(self.sideband_plus[0])

    def to_csv(self, path) -> None:
        """Write ``n, M_n, J_n, L_n_plus, L_n_minus`` rows (n = 0 row holds L_0)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "M_n", "J_n", "L_n_plus", "L_n_minus"])
            for n in range(self.truncation_order + 1):
                w.writerow(
                    [
                        n,
                        repr(float(self.amplitude_coeffs[n])),
                        repr(float(self.bessel_coeffs[n])),
                        repr(float(self.sideband_plus[n])),
                        repr(float(self.sideband_minus[n])),
                    ]
                )


@dataclass(frozen=True)
class PropagationPhases:
    carrier_phase: float
    plus_phases: np.ndarray  # phi_{n+}, n = 0..N (index 0 is the carrier)
    minus_phases: np.ndarray
    carrier_delay: float
    differential_delay: float


@dataclass(frozen=True)
class DetectedRf:
    inphase_amplitude: float
    quadrature_amplitude: float
    effective_phase: float
    total_amplitude: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "total_amplitude",
            math.hypot(self.inphase_amplitude, self.quadrature_amplitude),
        )


def differential_delay(D, L, wavelength_nm, carrier_hz, omega):
    """Group-delay difference between adjacent comb lines, in seconds.

    Parameters
    ----------
    D : float
        Fibre dispersion in ps/(km nm).
    L : float
        Length in km.
    wavelength_nm : float
        Laser wavelength in nm.
    carrier_hz : float
        Optical carrier frequency in Hz.
    omega : float
        RF angular frequency (rad/s).
    """
    if not math.isfinite(L) or L < 0:
        raise ValueError(f"fibre length must be finite and >= 0, got {L}")
    if carrier_hz <= 0:
        raise ValueError("carrier frequency must be positive")
    omega0 = 2.0 * math.pi * carrier_hz
    # ps/(km nm) * km * nm -> ps
    return -D * L * wavelength_nm * (omega / omega0) * 1e-12


def amplitude_coefficients(m_i, N, rtol=1e-13):
    """Cosine-series coefficients of ``sqrt(1 + m_i cos(theta))``.

    Trapezoidal quadrature over one period, doubling the node count until the
    coefficients stop changing (the integrand is periodic and analytic, so the
    rule converges geometrically).
    """
    if not 0.0 <= m_i < 1.0:
        raise ValueError("m_i must lie in [0, 1)")
    if N < 1:
        raise ValueError("N must be >= 1")
    n = np.arange(N + 1)
    K = max(64, 4 * (N + 1))
    prev = None
    while True:
        theta = 2.0 * np.pi * np.arange(K) / K
        f = np.sqrt(1.0 + m_i * np.cos(theta))
        coeffs = (2.0 / K) * (np.cos(np.outer(n, theta)) @ f)
        coeffs[0] *= 0.5
        if prev is not None and np.max(np.abs(coeffs - prev)) <= rtol * max(
            1.0, np.max(np.abs(coeffs))
        ):
            return coeffs
        if K > 1 << 22:
            raise RuntimeError("envelope quadrature failed to converge")
        prev = coeffs
        K *= 2


def truncation_order(m, m_i, tol=TRUNCATION_TOL):
    """Smallest order N at which both |J_N(m)| and |M_N| drop below ``tol``."""
    N = int(max(4, math.ceil(m + 10)))
    while abs(jv(N, m)) >= tol:
        N += 1
    if m_i > 0:
        while True:
            M = amplitude_coefficients(m_i, N)
            if abs(M[N]) < tol:
                break
            N += 8
    return N


def sideband_amplitudes(m, m_i, N=None):
    """Line amplitudes of the modulated field relative to E0.

    ``sideband_plus[n]`` multiplies ``exp(+j n W t)`` and ``sideband_minus[n]``
    multiplies ``exp(-j n W t)``; index 0 of both holds the carrier term L_0.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if not 0.0 <= m_i < 1.0:
        raise ValueError("m_i must lie in [0, 1)")
    N_min = truncation_order(m, m_i)
    N = N_min if N is None else max(int(N), N_min)
    # sums reference M up to index 2N and J up to N
    M = amplitude_coefficients(m_i, 2 * N)
    J = jv(np.arange(N + 1), m)
    sign = (-1.0) ** np.arange(N + 1)
    keep = np.abs(J) >= SUM_CUTOFF
    keep[0] = True
    a_idx = np.arange(1, N + 1)[keep[1:]]

    L0 = float(np.sum(M[0 : N + 1 : 2] * J[0 : N + 1 : 2]))
    plus = np.empty(N + 1)
    minus = np.empty(N + 1)
    plus[0] = minus[0] = L0
    for n in range(1, N + 1):
        near = M[np.abs(n - a_idx)]
        far = M[n + a_idx]
        Ja, sa = J[a_idx], sign[a_idx]
        plus[n] = 0.5 * (M[0] * J[n] + J[0] * M[n]) + 0.5 * np.sum(Ja * (near + sa * far))
        minus[n] = 0.5 * (sign[n] * M[0] * J[n] + J[0] * M[n]) + 0.5 * np.sum(
            Ja * (far + sa * near)
        )
    return SpectrumCoefficients(
        truncation_order=N,
        amplitude_coeffs=M[: N + 1].copy(),
        bessel_coeffs=J,
        sideband_plus=plus,
        sideband_minus=minus,
        m=float(m),
        m_i=float(m_i),
    )


CONVENTIONS = ("exact", "appendix")


def _quadratic_weight(convention):
    # exact second-order dispersion gives line n the phase n^2 W dt_d / 2; the
    # appendix expansion uses the group delay of each line, which doubles it
    if convention == "exact":
        return 0.5
    if convention == "appendix":
        return 1.0
    raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def propagation_phases(coeffs, dt_d, omega, t0, omega0, carrier_phase=0.0, convention="exact"):
    """Per-line phases after propagation, to second order in the line index.

    Line ``n`` on either side picks up a term linear in ``n`` (carrier group
    delay) and a term quadratic in ``n`` (dispersion).  With
    ``convention="appendix"`` the quadratic weight is one, which gives::

        phi_0 - phi_1+ = -w0*dt_d - W*dt_d - W*t0
        phi_0 - phi_1- = +w0*dt_d - W*dt_d + W*t0

    ``convention="exact"`` uses the weight one half that follows from
    expanding the propagation constant to second order.
    """
    q = _quadratic_weight(convention)
    n = np.arange(coeffs.truncation_order + 1)
    psi = omega0 * dt_d + omega * t0
    plus = carrier_phase + n * psi + q * n**2 * omega * dt_d
    minus = carrier_phase - n * psi + q * n**2 * omega * dt_d
    return PropagationPhases(
        carrier_phase=carrier_phase,
        plus_phases=plus,
        minus_phases=minus,
        carrier_delay=t0,
        differential_delay=dt_d,
    )


def _wrap(phase):
    w = math.remainder(phase, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def detected_rf(coeffs, dt_d, omega, t0, omega0, mode="full", convention="exact"):
    """Amplitude and phase of the intensity component at the RF frequency.

    The detected tone is ``A_I cos(W t - psi) + A_Q sin(W t - psi)`` with
    ``psi = w0*dt_d + W*t0``.  Each adjacent pair of lines on the upper
    (lower) side beats with an extra phase ``-(+)(2n+1) q W dt_d`` (``q`` the
    quadratic line-phase weight), so the
    quadrature term pairs ``L_n+ L_(n+1)+`` against ``L_n- L_(n+1)-``.

    ``mode="inphase"`` drops the quadrature contribution from the phase
    (the amplitude fields are still both reported).  ``convention`` selects
    the quadratic line-phase weight, see :func:`propagation_phases`.
    """
    q = _quadratic_weight(convention)
    if mode not in ("full", "inphase"):
        raise ValueError(f"unknown mode {mode!r}")
    lp, lm = coeffs.sideband_plus, coeffs.sideband_minus
    if not (np.any(lp) or np.any(lm)):
        raise ValueError("all-zero spectrum coefficients")
    n = np.arange(len(lp) - 1)
    arg = (2 * n + 1) * q * omega * dt_d
    up = lp[:-1] * lp[1:]
    down = lm[:-1] * lm[1:]
    a_i = 2.0 * float(np.sum((up + down) * np.cos(arg)))
    a_q = 2.0 * float(np.sum((up - down) * np.sin(arg)))
    psi = omega0 * dt_d + omega * t0
    rot = math.atan2(a_q, a_i) if mode == "full" else (0.0 if a_i >= 0 else math.pi)
    return DetectedRf(a_i, a_q, _wrap(-psi - rot))


def dispersion_phase_noise(dnu_fwd, dnu_bwd, dt_d, closed_loop=True):
    """RF phase noise (rad) from laser frequency jitter converted by dispersion.

    Open loop returns the round-trip value ``(dw1 + dw2) * dt_d``; in closed
    loop the remote end keeps half of it.
    """
    a = np.asarray(dnu_fwd, dtype=float)
    b = np.asarray(dnu_bwd, dtype=float)
    ga, gb = getattr(dnu_fwd, "grid", None), getattr(dnu_bwd, "grid", None)
    if a.shape != b.shape or (ga is not None and gb is not None and ga != gb):
        raise ValueError("frequency-noise series are not on the same grid")
    phi = 2.0 * np.pi * (a + b) * dt_d
    return 0.5 * phi if closed_loop else phi


def field_samples(m, m_i, K):
    """``E / (E0 exp(j w0 t))`` sampled at K points over one RF period."""
    theta = 2.0 * np.pi * np.arange(K) / K
    return np.sqrt(1.0 + m_i * np.cos(theta)) * np.exp(1j * m * np.sin(theta))


def max_line_power_fraction(coeffs) -> float:
    """Largest single-line share of the total optical power."""
    lines = np.concatenate([coeffs.sideband_plus, coeffs.sideband_minus[1:]])
    return float(np.max(lines**2) / np.sum(lines**2))
