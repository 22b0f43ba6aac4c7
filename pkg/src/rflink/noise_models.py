"""Seeded stochastic disturbances acting on the link.

Every generator is a pure function of ``(params, grid, seed, stream id)``:
the random stream is derived from a :class:`numpy.random.SeedSequence`
keyed on the seed and a CRC of the stream name, so adding a new noise source
never shifts the draws of the existing ones.

Delay-type noise is expressed in seconds.  Power-law PSDs are one-sided,
``S(f) = h * f**alpha`` for ``0 < f <= fs/2``.
"""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import kernels

#: 3-dB bandwidth of the phase-measurement low-pass (Hz)
MEASUREMENT_BANDWIDTH_HZ = 3.0
#: reference carrier for floor levels quoted in dB rad^2/Hz
FLOOR_REFERENCE_HZ = 1.0e9
DAY = 86400.0

SUPPORTED_EXPONENTS = (0, -1, -2, -3, -4)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_samples: int
    start_epoch: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_samples < 2:
            raise ValueError("a grid needs at least 2 samples")

    @classmethod
    def spanning(cls, duration, dt, start_epoch=0.0):
        return cls(dt, int(round(duration / dt)), start_epoch)

    @property
    def span(self) -> float:
        return self.dt * self.n_samples

    @property
    def t(self) -> np.ndarray:
        return self.start_epoch + self.dt * np.arange(self.n_samples)

    @property
    def rate(self) -> float:
        return 1.0 / self.dt


@dataclass(frozen=True, eq=False)
class PhaseSeries:
    """Samples on a :class:`TimeGrid`, tagged ``"rad"`` (at a carrier) or ``"s"``."""

    grid: TimeGrid
    values: np.ndarray
    unit: str = "s"
    carrier_frequency: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.unit not in ("rad", "s"):
            raise ValueError(f"unit must be 'rad' or 's', got {self.unit!r}")
        if v.shape != (self.grid.n_samples,):
            raise ValueError("values do not match the grid length")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite samples")
        if self.unit == "rad" and not (self.carrier_frequency and self.carrier_frequency > 0):
            raise ValueError("phase in rad needs a carrier frequency")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.grid.n_samples

    def seconds(self) -> np.ndarray:
        if self.unit == "s":
            return self.values
        return self.values / (2.0 * np.pi * self.carrier_frequency)

    def to_rad(self, carrier_frequency=None) -> "PhaseSeries":
        nu = carrier_frequency or self.carrier_frequency
        if nu is None:
            raise ValueError("conversion to rad needs a carrier frequency")
        return PhaseSeries(self.grid, 2.0 * np.pi * nu * self.seconds(), "rad", nu)

    def to_seconds(self) -> "PhaseSeries":
        return PhaseSeries(self.grid, self.seconds(), "s", self.carrier_frequency)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "value", "unit"])
            for t, v in zip(self.grid.t, self.values):
                w.writerow([repr(float(t)), repr(float(v)), self.unit])


def stream_rng(seed, name) -> np.random.Generator:
    key = zlib.crc32(str(name).encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


def synthesize_colored_noise(psd_spec, grid, seed, stream="noise"):
    """Gaussian series with one-sided PSD ``sum(h * f**alpha)``.

    White noise is shaped in the frequency domain.  For exponents of -2 and
    below the series is drawn four times longer and truncated, so that
    spectral content below ``1/span`` is not lost to circular wrap-around.
    """
    spec = {int(a): float(h) for a, h in dict(psd_spec).items()}
    for a, h in spec.items():
        if a not in SUPPORTED_EXPONENTS:
            raise ValueError(f"unsupported PSD exponent {a}")
        if h < 0 or not math.isfinite(h):
            raise ValueError(f"PSD coefficient for exponent {a} must be >= 0")
    n = grid.n_samples
    out = np.zeros(n)
    for a in sorted(spec, reverse=True):
        h = spec[a]
        if h == 0.0:
            continue
        pad = 4 if a <= -2 else 1
        m = n * pad
        rng = stream_rng(seed, f"{stream}/alpha{a}")
        w = rng.standard_normal(m)
        if a == 0:
            out += w[:n] * math.sqrt(h * grid.rate / 2.0)
            continue
        f = np.fft.rfftfreq(m, grid.dt)
        amp = np.zeros_like(f)
        amp[1:] = np.sqrt(h * f[1:] ** a * grid.rate / 2.0)
        out += np.fft.irfft(np.fft.rfft(w) * amp, m)[:n]
    return out


# ----------------------------------------------------------------- conversions


def white_pm_level(adev_1s, bandwidth=MEASUREMENT_BANDWIDTH_HZ):
    """White-PM delay PSD (s^2/Hz) giving ``adev_1s`` behind a one-pole filter."""
    return adev_1s**2 / (3.0 * 0.5 * math.pi * bandwidth)


def white_fm_level(adev_1s):
    """alpha = -2 delay PSD coefficient (s^2 Hz) for white FM at ``adev_1s``."""
    return adev_1s**2 / (2.0 * math.pi**2)


def flicker_fm_level(adev):
    """alpha = -3 coefficient for a flat Allan floor ``adev``."""
    return adev**2 / (2.0 * math.log(2.0) * 4.0 * math.pi**2)


def random_walk_fm_level(adev, tau):
    """alpha = -4 coefficient for random-walk FM reaching ``adev`` at ``tau``."""
    return adev**2 / ((2.0 * math.pi**2 / 3.0) * 4.0 * math.pi**2 * tau)


# --------------------------------------------------------------- fibre noise


@dataclass(frozen=True)
class FiberNoiseParams:
    """Reciprocal (direction-independent) fibre delay noise.

    The ``*_level`` fields are coefficients of the one-sided delay PSD for
    exponents 0, -1, -2, -3 and -4; the diurnal term is a deterministic sine.
    """

    white_pm_level: float = 0.0
    flicker_pm_level: float = 0.0
    random_walk_level: float = 0.0
    flicker_fm_level: float = 0.0
    random_walk_fm_level: float = 0.0
    diurnal_amplitude_ps: float = 0.0
    diurnal_period_s: float = DAY

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0")
        if self.diurnal_period_s <= 0:
            raise ValueError("diurnal_period_s must be positive")

    def psd_spec(self):
        return {
            0: self.white_pm_level,
            -1: self.flicker_pm_level,
            -2: self.random_walk_level,
            -3: self.flicker_fm_level,
            -4: self.random_walk_fm_level,
        }


def fiber_delay_process(params, grid, seed, stream="fiber"):
    """One-way fibre delay fluctuation (s) shared by both directions.

    The series starts at zero: an absolute delay offset is unobservable and
    the loop acquires lock with its actuators centred.
    """
    x = synthesize_colored_noise(params.psd_spec(), grid, seed, stream)
    x = x - x[0]
    if params.diurnal_amplitude_ps:
        x = x + params.diurnal_amplitude_ps * 1e-12 * np.sin(
            2.0 * np.pi * grid.t / params.diurnal_period_s
        )
    return x


# ----------------------------------------------------------------------- PMD


@dataclass(frozen=True)
class PmdParams:
    mean_dgd_ps: float = 0.0
    n_waveplate_segments: int = 20
    drift_time_constant_s: float = 6.0 * 3600.0
    drift_std_rad: float = 0.2
    diurnal_modulation_depth: float = 0.0
    diurnal_period_s: float = DAY
    scrambler_enabled_fwd: bool = True
    scrambler_enabled_bwd: bool = True
    scrambler_rates_hz: tuple = (60e3, 100e3, 130e3)

    def __post_init__(self):
        if self.mean_dgd_ps < 0:
            raise ValueError("mean_dgd_ps must be >= 0")
        if self.n_waveplate_segments < 1:
            raise ValueError("need at least one birefringent segment")
        if self.drift_time_constant_s <= 0:
            raise ValueError("drift_time_constant_s must be positive")

    @property
    def segment_dgd_ps(self) -> float:
        # mean DGD of n randomly coupled segments ~ sqrt(8 n / (3 pi)) * segment DGD
        n = self.n_waveplate_segments
        if n == 1:
            return self.mean_dgd_ps
        return self.mean_dgd_ps / math.sqrt(8.0 * n / (3.0 * math.pi))


def _check_stokes(state):
    s = np.asarray(state, dtype=float)
    norms = np.linalg.norm(s, axis=-1)
    if s.shape[-1] != 3 or not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError("polarization state must be a unit Stokes vector")
    return s


class PmdModel:
    """First-order PMD of a chain of linear birefringent segments.

    Segment ``k`` has a fixed differential group delay, an eigen-axis at
    angle ``theta_k(t)`` in the equatorial Stokes plane and a retardation
    ``delta_k(t)`` at the carrier; both drift (Ornstein-Uhlenbeck, with
    ``drift_time_constant_s``) and follow a common diurnal modulation.

    The delay seen by a signal launched in Stokes state ``s`` is
    ``-Omega_in . s / 2`` where ``Omega_in`` is the input-referred PMD
    vector: a state aligned with a fast axis travels early.
    """

    def __init__(self, params: PmdParams, seed, stream="pmd"):
        self.params = params
        self.seed = seed
        self.stream = stream
        # segment geometry is a property of the fibre, shared by every grid
        rng = stream_rng(seed, "pmd/static")
        n = params.n_waveplate_segments
        self.theta0 = rng.uniform(0.0, np.pi, n)
        self.delta0 = rng.uniform(0.0, 2.0 * np.pi, n)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, n)
        self.weight = rng.uniform(0.5, 1.5, n)
        self.dgd = np.full(n, params.segment_dgd_ps * 1e-12)

    def _drift(self, grid, k, what):
        p = self.params
        if p.drift_std_rad == 0.0:
            return np.zeros(grid.n_samples)
        rng = stream_rng(self.seed, f"{self.stream}/{what}{k}")
        rho = math.exp(-grid.dt / p.drift_time_constant_s)
        w = rng.standard_normal(grid.n_samples) * p.drift_std_rad * math.sqrt(1 - rho**2)
        x0 = rng.standard_normal() * p.drift_std_rad
        y, _ = lfilter([1.0], [1.0, -rho], w, zi=[rho * x0])
        return y

    def segment_angles(self, grid):
        """Eigen-axis angles and retardations, each shaped (n_seg, n_samples)."""
        p = self.params
        n = p.n_waveplate_segments
        arg = 2.0 * np.pi * grid.t / p.diurnal_period_s
        theta = np.empty((n, grid.n_samples))
        delta = np.empty((n, grid.n_samples))
        for k in range(n):
            mod = p.diurnal_modulation_depth * self.weight[k] * np.sin(arg + self.phase[k])
            theta[k] = self.theta0[k] + 0.5 * mod + self._drift(grid, k, "theta")
            delta[k] = self.delta0[k] + mod + self._drift(grid, k, "delta")
        return theta, delta

    def input_vector(self, grid, direction="fwd"):
        """Input-referred PMD vector (s), shape (n_samples, 3)."""
        if direction not in ("fwd", "bwd"):
            raise ValueError("direction must be 'fwd' or 'bwd'")
        N = grid.n_samples
        omega = np.zeros((N, 3))
        if self.params.mean_dgd_ps == 0.0:
            return omega
        theta, delta = self.segment_angles(grid)
        dgd = self.dgd
        if direction == "bwd":
            theta, delta, dgd = theta[::-1], delta[::-1], dgd[::-1]
        return kernels.pmd_vector(theta, delta, dgd)

    def delay(self, state, grid, direction="fwd", scrambled=False):
        """Extra one-way delay (s) for a launch in ``state``.

        With a scrambler the launch state is uniformly distributed on the
        Poincare sphere faster than anything downstream responds, and the
        first-order PMD delay averages to exactly zero.
        """
        s = _check_stokes(state)
        if scrambled or self.params.mean_dgd_ps == 0.0:
            return np.zeros(grid.n_samples)
        om = self.input_vector(grid, direction)
        return -0.5 * (om @ s if s.ndim == 1 else np.sum(om * s, axis=1))


def pmd_delay(params, polarization_state, grid, seed=0, direction="fwd", scrambled=None):
    """Convenience wrapper around :class:`PmdModel`."""
    if scrambled is None:
        scrambled = (
            params.scrambler_enabled_fwd if direction == "fwd" else params.scrambler_enabled_bwd
        )
    return PmdModel(params, seed).delay(polarization_state, grid, direction, scrambled)


def random_stokes(rng, n=None):
    v = rng.standard_normal((3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ------------------------------------------------------------- laser noise


@dataclass(frozen=True)
class LaserNoiseParams:
    """Optical frequency noise of one free-running diode.

    ``white_fm_level`` is the flat PSD of the frequency (Hz^2/Hz);
    ``slow_drift_level`` the coefficient h of an ``h/f`` frequency PSD (Hz^2).
    ``thermal_coupling_hz_per_s`` converts the thermal actuator excursion
    (seconds of delay) into a frequency offset of the local diode.
    """

    white_fm_level: float = 0.0
    slow_drift_level: float = 0.0
    thermal_coupling_hz_per_s: float = 0.0

    def __post_init__(self):
        if self.white_fm_level < 0 or self.slow_drift_level < 0:
            raise ValueError("laser noise levels must be >= 0")


def laser_frequency_noise(params, grid, seed, diode_id, stream="laser"):
    """Optical frequency deviation (Hz) of diode ``diode_id``."""
    spec = {0: params.white_fm_level, -1: params.slow_drift_level}
    return synthesize_colored_noise(spec, grid, seed, f"{stream}/{diode_id}")


def beat_adev_1s(params):
    """Expected Allan deviation (Hz) at 1 s of the beat of two such diodes."""
    return math.sqrt(2.0 * (params.white_fm_level / 2.0 + 2.0 * math.log(2.0) * params.slow_drift_level))


# -------------------------------------------------------------- floors


@dataclass(frozen=True)
class FloorParams:
    """Noise added by the compensator electronics and amplifiers.

    ``system_floor_psd_db`` is the phase PSD at 1 Hz in dB rad^2/Hz referred
    to a 1 GHz carrier; detection noise in rad is carrier independent, so the
    equivalent delay noise scales with ``1/f_rf``.  The ``*_stability`` fields
    are Allan deviations at 1 s.
    """

    system_floor_psd_db: float = -120.0
    floor_slope: int = -1
    edfa_excess_stability: float = 3e-15
    electronics_drift_stability: float = 0.0
    excess_white_pm_stability: float = 0.0

    def __post_init__(self):
        if self.floor_slope not in (0, -1):
            raise ValueError("floor_slope must be 0 (white PM) or -1 (flicker PM)")
        for k in ("edfa_excess_stability", "electronics_drift_stability", "excess_white_pm_stability"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")


def floor_psd_spec(params, rf_hz, n_edfa=0, snr_penalty_db=0.0):
    """Delay-PSD coefficients of the remote-referred floor."""
    h_phase = 10.0 ** ((params.system_floor_psd_db + snr_penalty_db) / 10.0)
    h_floor = h_phase / (2.0 * math.pi * FLOOR_REFERENCE_HZ) ** 2
    h_floor *= (FLOOR_REFERENCE_HZ / rf_hz) ** 2
    spec = {0: 0.0, -1: 0.0, -2: white_fm_level(params.electronics_drift_stability)}
    spec[params.floor_slope] += h_floor
    spec[0] += white_pm_level(params.excess_white_pm_stability)
    spec[0] += n_edfa * white_pm_level(params.edfa_excess_stability)
    return spec


def floor_process(params, grid, seed, rf_hz=FLOOR_REFERENCE_HZ, n_edfa=0, snr_penalty_db=0.0,
                  stream="floor"):
    return synthesize_colored_noise(
        floor_psd_spec(params, rf_hz, n_edfa, snr_penalty_db), grid, seed, stream
    )


@dataclass(frozen=True)
class NoiseBundle:
    fiber: FiberNoiseParams = field(default_factory=FiberNoiseParams)
    pmd: PmdParams = field(default_factory=PmdParams)
    laser: LaserNoiseParams = field(default_factory=LaserNoiseParams)
    floor: FloorParams = field(
        default_factory=lambda: FloorParams(float("-inf"), -1, 0.0, 0.0, 0.0)
    )

    @classmethod
    def quiet(cls):
        """Bundle in which every disturbance is zero."""
        return cls()
