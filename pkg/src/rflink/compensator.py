"""Closed-loop round-trip compensation of the fibre delay.

Signal flow (all quantities are delays in seconds)::

    local --c(t)--> fibre fwd f(t) --> remote  (regenerated at backward RF)
    local <--c(t)-- fibre bwd b(t) <-- remote

The correction ``c`` sits at the local input and is crossed by both
directions, so the round-trip error seen at the local end is::

    e(t) = c(t) + c(t - T) + f(t - T/2) + b(t)

and the remote time error is ``x(t) = c(t - T/2) + f(t)`` plus the
remote-referred floors.  With a PI loop filter ``c -> -(f + b)/2`` inside
the loop bandwidth, leaving ``(f - b)/2`` at the remote end.

Two loop models share this algebra:

``spectral``
    the analog PI loop applied exactly in the frequency domain (fractional
    delays included); used for long records on coarse grids.
``stepped``
    a sample-by-sample simulation (compiled kernel) with actuator limits,
    thermal lag of the slow line and polarization coupling of the actuators
    into the forward PMD delay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .laser_spectrum import LaserParams
from .link_topology import (
    REFERENCE_UGB_HZ,
    LinkTopology,
    power_budget,
    reference_roundtrip_delay,
    total_differential_delay,
)
from .noise_models import (
    DAY,
    MEASUREMENT_BANDWIDTH_HZ,
    NoiseBundle,
    PhaseSeries,
    PmdModel,
    TimeGrid,
    fiber_delay_process,
    floor_process,
    laser_frequency_noise,
    random_stokes,
    stream_rng,
)
from .stability import MIN_DIFFERENCES, AllanTable, merge_tables, octave_taus, overlapping_adev

PS = 1e-12
COUPLING_PASSES = 3

MODE_FREE = -1
MODE_ELECTRONIC = 0
MODE_FAST_SLOW = 1
MODE_SLOW_ONLY = 2
MODE_FAST_ONLY = 3


class LoopInstabilityError(RuntimeError):
    """The loop diverged or its design has no stability margin."""


@dataclass(frozen=True)
class ActuatorParams:
    fast_range_ps: float = 15.0
    fast_bandwidth_hz: float = 1e3
    slow_sensitivity_ps_per_c: float = 150.0
    slow_range_ns: float = 6.0
    slow_thermal_time_constant_s: float = 30.0
    polarization_perturbation_gain: float = 0.0  # rad per ps of fast stretch
    slow_polarization_gain: float = 0.0  # rad per ps of slow (thermal) correction

    def __post_init__(self):
        if self.fast_range_ps <= 0 or self.slow_range_ns <= 0:
            raise ValueError("actuator ranges must be positive")
        if self.fast_range_ps * PS >= self.slow_range_ns * 1e-9:
            raise ValueError("fast range must be much smaller than the slow range")
        if self.slow_thermal_time_constant_s <= 0:
            raise ValueError("thermal time constant must be positive")

    @property
    def fast_half(self):
        return 0.5 * self.fast_range_ps * PS

    @property
    def slow_half(self):
        return 0.5 * self.slow_range_ns * 1e-9


@dataclass(frozen=True)
class LoopParams:
    roundtrip_delay: float = 0.88e-3
    proportional_gain: float = 0.25
    target_unity_gain_bandwidth: float = 150.0
    slow_only_bandwidth: float = 1.5e-3
    integrator_gain: float | None = None

    def __post_init__(self):
        if self.roundtrip_delay <= 0:
            raise ValueError("roundtrip delay must be positive")
        if self.target_unity_gain_bandwidth >= 1.0 / (4.0 * self.roundtrip_delay):
            raise ValueError(
                f"unity-gain bandwidth {self.target_unity_gain_bandwidth} Hz violates the "
                f"delay margin 1/(4 T_rt) = {1 / (4 * self.roundtrip_delay):.1f} Hz"
            )
        if self.integrator_gain is None:
            object.__setattr__(
                self, "integrator_gain",
                design_integrator_gain(self.proportional_gain, self.target_unity_gain_bandwidth,
                                       self.roundtrip_delay),
            )

    def for_topology(self, topology):
        """Same design on ``topology``; the bandwidth shrinks as ``1/T_rt`` past the
        reference link so the delay margin is kept."""
        T = topology.roundtrip_delay
        ugb = min(self.target_unity_gain_bandwidth, REFERENCE_UGB_HZ * reference_roundtrip_delay() / T)
        return replace(self, roundtrip_delay=T, target_unity_gain_bandwidth=ugb, integrator_gain=None)


def design_integrator_gain(kp, ugb, T):
    """Integrator gain putting |K (1 + e^{-sT})| = 1 at ``ugb`` for K = kp + ki/s."""
    w = 2.0 * math.pi * ugb
    g = 2.0 * abs(math.cos(w * T / 2.0))
    if kp * g >= 1.0:
        raise ValueError("proportional gain alone exceeds unity at the target bandwidth")
    return w * math.sqrt(1.0 / g**2 - kp**2)


def open_loop(freqs, kp, ki, T, latency=0.0, thermal_tau=0.0):
    s = 2j * np.pi * np.asarray(freqs, dtype=float)
    K = kp + ki / s
    if latency:
        K = K * np.exp(-s * latency)
    if thermal_tau:
        K = K / (1.0 + s * thermal_tau)
    return K * (1.0 + np.exp(-s * T))


def phase_margin(kp, ki, T, latency=0.0, thermal_tau=0.0):
    """Smallest phase margin (deg) over every unity-gain crossing of the open loop.

    The round-trip term ``1 + e^{-sT}`` makes the gain come back in lobes
    spaced by ``1/T``; each lobe that rises above unity adds crossings, and
    the worst one decides stability.
    """
    f_lo = np.logspace(-6, math.log10(0.5 / T), 20000)
    span = 0.5 / T
    if ki > 0 and kp < 0.5:
        span = max(span, 2.0 * ki / (math.pi * (1.0 - 2.0 * kp)))
    if kp >= 0.5:
        span = max(span, 100.0 / T)
    span = min(span, 200.0 / T)
    f_hi = np.linspace(0.5 / T, span, max(2, int(400 * span * T)))[1:]
    f = np.concatenate([f_lo, f_hi])
    L = open_loop(f, kp, ki, T, latency, thermal_tau)
    mag = np.abs(L)
    phase = np.degrees(np.unwrap(np.angle(L)))
    idx = np.flatnonzero((mag[:-1] - 1.0) * (mag[1:] - 1.0) <= 0.0)
    idx = idx[mag[idx] != mag[idx + 1]]
    if not idx.size:
        return 180.0
    margins = (180.0 + phase[idx]) % 360.0
    margins = np.where(margins > 180.0, margins - 360.0, margins)
    return float(np.min(margins))


def residual_transfer(freqs, kp, ki, T, latency=0.0, thermal_tau=0.0):
    """Remote residual per unit of symmetric (reciprocal) delay noise."""
    s = 2j * np.pi * np.asarray(freqs, dtype=float)
    K = kp + ki / s
    if latency:
        K = K * np.exp(-s * latency)
    if thermal_tau:
        K = K / (1.0 + s * thermal_tau)
    half = np.exp(-s * T / 2.0)
    C = -K * (half + 1.0) / (1.0 + K * (1.0 + np.exp(-s * T)))
    return C * half + 1.0


@dataclass(frozen=True)
class CompensatorState:
    fast_correction: float = 0.0
    slow_correction: float = 0.0
    integrator_accumulator: float = 0.0
    saturation_flags: tuple = (False, False)


@dataclass(frozen=True)
class LinkSetup:
    """Everything a run needs apart from the grid and the seed."""

    topology: LinkTopology
    laser: LaserParams = field(default_factory=LaserParams)
    noise: NoiseBundle = field(default_factory=NoiseBundle)
    actuators: ActuatorParams = field(default_factory=ActuatorParams)
    loop: LoopParams | None = None
    compensator: str = "optical"  # optical | electronic | none
    fast_line: bool = True
    loop_model: str = "auto"  # auto | spectral | stepped

    def __post_init__(self):
        if self.compensator not in ("optical", "electronic", "none"):
            raise ValueError(f"unknown compensator {self.compensator!r}")
        if self.loop_model not in ("auto", "spectral", "stepped"):
            raise ValueError(f"unknown loop model {self.loop_model!r}")
        if self.loop is None:
            object.__setattr__(self, "loop", LoopParams().for_topology(self.topology))

    @property
    def forward_rf(self):
        return self.topology.modulation.forward_rf

    @property
    def backward_rf(self):
        return self.topology.modulation.backward_rf

    @property
    def servo_mode(self):
        if self.compensator == "none":
            return MODE_FREE
        if self.compensator == "electronic":
            return MODE_ELECTRONIC
        return MODE_FAST_SLOW if self.fast_line else MODE_SLOW_ONLY

    @property
    def coupled(self):
        """Actuators perturb a non-scrambled forward launch polarization."""
        a, pmd = self.actuators, self.noise.pmd
        if self.compensator != "optical" or pmd.scrambler_enabled_fwd or pmd.mean_dgd_ps == 0:
            return False
        kf = a.polarization_perturbation_gain if self.fast_line else 0.0
        return kf != 0.0 or a.slow_polarization_gain != 0.0


@dataclass
class ScenarioResult:
    grid: TimeGrid
    remote_phase: PhaseSeries
    local_reference_phase: PhaseSeries
    error_signal: PhaseSeries
    fast: np.ndarray
    slow: np.ndarray
    components: dict
    saturation_flags: dict
    loop_model: str
    metadata: dict = field(default_factory=dict)

    @property
    def compliant(self):
        return not any(self.saturation_flags.values())

    def residual_seconds(self):
        return self.remote_phase.seconds() - self.local_reference_phase.seconds()

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "remote_phase_rad", "error_rad", "fast_ps", "slow_ps"])
            t = self.grid.t
            rem = self.remote_phase.values - self.local_reference_phase.values
            for row in zip(t, rem, self.error_signal.values, self.fast / PS, self.slow / PS):
                w.writerow([repr(float(v)) for v in row])


# ----------------------------------------------------------------- disturbances


def dispersion_scale(setup):
    """Seconds of forward delay per Hz of optical frequency offset."""
    dt_d = total_differential_delay(setup.topology, setup.laser, 2.0 * math.pi * setup.forward_rf)
    return dt_d / setup.forward_rf


def build_disturbances(setup, grid, seed, tag="main"):
    """Per-direction delay disturbances on ``grid``.

    Returns a dict with ``fiber``, ``disp_fwd``, ``disp_bwd``, ``pmd_fwd``,
    ``pmd_bwd``, ``floor`` (arrays, s) and the forward PMD vector
    ``omega_fwd`` plus launch state when the forward path is not scrambled.
    """
    nb = setup.noise
    g = fiber_delay_process(nb.fiber, grid, seed, f"{tag}/fiber")
    k = dispersion_scale(setup)
    dnu1 = laser_frequency_noise(nb.laser, grid, seed, 1, f"{tag}/laser")
    dnu2 = laser_frequency_noise(nb.laser, grid, seed, 2, f"{tag}/laser")
    # sign chosen so the round trip carries (dw1 + dw2) * dt_d
    disp_f = dnu1 * k
    disp_b = -dnu2 * k
    srng = stream_rng(seed, "launch-states")
    s_f0, s_b0, axis = random_stokes(srng), random_stokes(srng), random_stokes(srng)
    pmd = PmdModel(nb.pmd, seed, f"{tag}/pmd")
    omega_f = None
    pmd_f = np.zeros(grid.n_samples)
    if not nb.pmd.scrambler_enabled_fwd and nb.pmd.mean_dgd_ps > 0:
        omega_f = pmd.input_vector(grid, "fwd")
        pmd_f = -0.5 * omega_f @ s_f0
    pmd_b = pmd.delay(s_b0, grid, "bwd", scrambled=nb.pmd.scrambler_enabled_bwd)
    budget = power_budget(setup.topology, setup.laser, nb.floor.system_floor_psd_db)
    n_edfa = len(setup.topology.edfas)
    floor = floor_process(nb.floor, grid, seed, setup.forward_rf, n_edfa,
                          budget.snr_penalty_db, f"{tag}/floor")
    return {
        "fiber": g, "disp_fwd": disp_f, "disp_bwd": disp_b, "pmd_fwd": pmd_f,
        "pmd_bwd": pmd_b, "floor": floor, "omega_fwd": omega_f, "launch_fwd": s_f0,
        "pol_axis": axis, "dnu1": dnu1, "dnu2": dnu2,
    }


# -------------------------------------------------------------- loop models


def _fractional_delay(x, delay, dt):
    """Delay ``x`` by ``delay`` seconds via the FFT of its even extension."""
    if delay == 0.0:
        return x.copy()
    n = len(x)
    ext = np.concatenate([x, x[::-1]])
    f = np.fft.rfftfreq(2 * n, dt)
    y = np.fft.irfft(np.fft.rfft(ext) * np.exp(-2j * np.pi * f * delay), 2 * n)
    return y[:n]


def _spectral_correction(fwd, bwd, dt, kp, ki, T):
    """Analog PI loop response c(t) to forward/backward disturbances.

    Series are mirrored before the FFT so the record is continuous across
    the periodic boundary.
    """
    n = len(fwd)
    F = np.fft.rfft(np.concatenate([fwd, fwd[::-1]]))
    B = np.fft.rfft(np.concatenate([bwd, bwd[::-1]]))
    f = np.fft.rfftfreq(2 * n, dt)
    C = np.empty_like(F)
    C[0] = -(F[0] + B[0]) / 2.0
    s = 2j * np.pi * f[1:]
    K = kp + ki / s
    half = np.exp(-s * T / 2.0)
    C[1:] = -K * (F[1:] * half + B[1:]) / (1.0 + K * (1.0 + np.exp(-s * T)))
    return np.fft.irfft(C, 2 * n)[:n]


def _split_actuators(c, dt, act):
    """Slow line follows the low-passed total; fast line takes the rest."""
    alpha = min(dt / act.slow_thermal_time_constant_s, 1.0)
    slow = kernels.onepole(c, alpha)
    return c - slow, slow


def _effective_gains(loop, dt, stepped, mode, thermal_tau):
    T = loop.roundtrip_delay
    if mode == MODE_SLOW_ONLY:
        w = 2.0 * math.pi * loop.slow_only_bandwidth
        return 0.0, 0.5 * w * math.sqrt(1.0 + (w * thermal_tau) ** 2)
    if stepped and loop.target_unity_gain_bandwidth > 0.05 / dt:
        ugb = 0.05 / dt
        return loop.proportional_gain, design_integrator_gain(loop.proportional_gain, ugb, max(T, dt))
    return loop.proportional_gain, loop.integrator_gain


def choose_loop_model(setup, dt):
    if setup.loop_model != "auto":
        return setup.loop_model
    if setup.compensator == "none":
        return "spectral"
    if setup.servo_mode == MODE_SLOW_ONLY:
        return "stepped"
    if dt <= setup.loop.roundtrip_delay / 4.0:
        return "stepped"
    return "spectral"


def simulate(setup, grid, seed, tag="main", extra=None, loop_model=None, backend=None):
    """Run one record of the link on ``grid``.

    ``extra`` optionally adds user-defined delay series: a dict with keys
    ``fwd``, ``bwd`` and/or ``remote`` (arrays in seconds).
    """
    d = build_disturbances(setup, grid, seed, tag)
    extra = extra or {}
    z = np.zeros(grid.n_samples)
    ex_f = np.asarray(extra.get("fwd", z), dtype=float)
    ex_b = np.asarray(extra.get("bwd", z), dtype=float)
    ex_r = np.asarray(extra.get("remote", z), dtype=float)
    model = loop_model or choose_loop_model(setup, grid.dt)
    mode = setup.servo_mode
    act, loop = setup.actuators, setup.loop
    T = loop.roundtrip_delay
    dt = grid.dt
    thermal = act.slow_thermal_time_constant_s if mode == MODE_SLOW_ONLY else 0.0
    kp, ki = _effective_gains(loop, dt, model == "stepped", mode, thermal)

    if mode != MODE_FREE and model == "spectral":
        if phase_margin(kp, ki, T) <= 0.0:
            raise LoopInstabilityError("loop design has no phase margin")

    thermal_coupling = setup.noise.laser.thermal_coupling_hz_per_s
    thermal_on = bool(thermal_coupling) and mode in (MODE_FAST_SLOW, MODE_SLOW_ONLY)
    # on the spectral model the actuator feedback paths are closed by fixed-point
    # iteration: each pass uses the actuator traces of the previous pass
    pol_on = setup.coupled and model == "spectral"
    passes = 1 + (COUPLING_PASSES if pol_on else 1 if thermal_on else 0)
    k_disp = dispersion_scale(setup)
    laser_th = z
    pmd_f = d["pmd_fwd"]
    bwd = d["fiber"] + d["disp_bwd"] + d["pmd_bwd"] + ex_b
    for _ in range(passes):
        fwd_static = d["fiber"] + d["disp_fwd"] + ex_f + laser_th
        if model == "stepped":
            out = _run_stepped(setup, d, fwd_static, bwd, grid, kp, ki, mode, backend)
        else:
            out = _run_spectral(setup, pmd_f, fwd_static, bwd, grid, kp, ki, mode)
        if thermal_on:
            slow = out["slow"]
            laser_th = thermal_coupling * (slow - slow.mean()) * k_disp
        if pol_on:
            pmd_f = coupled_pmd_delay(d, out["fast"], out["slow"], setup)

    remote = out["remote"] + d["floor"] + ex_r
    components = {
        "fiber": d["fiber"],
        "dispersion": d["disp_fwd"] + laser_th,
        "pmd": out["pmd_fwd"],
        "floor": d["floor"],
        "extra": ex_f + ex_r,
        "correction": out["c_remote"],
    }
    rf_f, rf_b = setup.forward_rf, setup.backward_rf
    fast, slow = out["fast"], out["slow"]
    flags = {"fast_saturated": False, "slow_saturated": False}
    if mode in (MODE_FAST_SLOW, MODE_FAST_ONLY):
        flags["fast_saturated"] = bool(out["flags"] & 1) or bool(
            np.any(np.abs(fast) > act.fast_half * (1 + 1e-9)))
    if mode in (MODE_FAST_SLOW, MODE_SLOW_ONLY):
        flags["slow_saturated"] = bool(out["flags"] & 2) or bool(
            np.any(np.abs(slow) > act.slow_half * (1 + 1e-9)))
    meta = {
        "seed": seed, "tag": tag, "loop_model": model, "mode": mode, "kp": kp, "ki": ki,
        "roundtrip_delay": T, "dt": dt, "n_samples": grid.n_samples,
    }
    return ScenarioResult(
        grid=grid,
        remote_phase=PhaseSeries(grid, 2 * np.pi * rf_f * remote, "rad", rf_f),
        local_reference_phase=PhaseSeries(grid, np.zeros(grid.n_samples), "rad", rf_f),
        error_signal=PhaseSeries(grid, 2 * np.pi * rf_b * out["error"], "rad", rf_b),
        fast=fast, slow=slow, components=components, saturation_flags=flags,
        loop_model=model, metadata=meta,
    )


def coupled_pmd_delay(d, fast, slow, setup):
    """Forward PMD delay with the launch state rotated by the actuator strain."""
    act = setup.actuators
    kf = act.polarization_perturbation_gain if setup.fast_line else 0.0
    theta = (kf * fast + act.slow_polarization_gain * slow) / PS
    s0, ax = d["launch_fwd"], d["pol_axis"]
    ct, st = np.cos(theta)[:, None], np.sin(theta)[:, None]
    sv = s0 * ct + np.cross(ax, s0) * st + ax * float(ax @ s0) * (1.0 - ct)
    return -0.5 * np.einsum("ij,ij->i", d["omega_fwd"], sv)


def _run_spectral(setup, pmd_f, fwd_static, bwd, grid, kp, ki, mode):
    T = setup.loop.roundtrip_delay
    dt = grid.dt
    fwd = fwd_static + pmd_f
    if mode == MODE_FREE:
        c = np.zeros(grid.n_samples)
    else:
        c = _spectral_correction(fwd, bwd, dt, kp, ki, T)
    c_remote = _fractional_delay(c, T / 2.0, dt)
    error = c + _fractional_delay(c, T, dt) + _fractional_delay(fwd, T / 2.0, dt) + bwd
    if mode == MODE_ELECTRONIC:
        fast, slow = c, np.zeros_like(c)
    elif mode == MODE_FREE:
        fast, slow = c, c.copy()
    elif mode == MODE_SLOW_ONLY:
        fast, slow = np.zeros_like(c), c
    else:
        fast, slow = _split_actuators(c, dt, setup.actuators)
    return {
        "remote": c_remote + fwd, "c_remote": c_remote, "error": error, "fast": fast,
        "slow": slow, "pmd_fwd": pmd_f, "flags": 0,
    }


def _run_stepped(setup, d, fwd_static, bwd, grid, kp, ki, mode, backend=None):
    T = setup.loop.roundtrip_delay
    dt = grid.dt
    act = setup.actuators
    D = int(round(T / dt))
    D2 = int(round(T / (2 * dt)))
    coupled = setup.coupled
    omega = d["omega_fwd"]
    if omega is None:
        omega_in, fwd_k = None, fwd_static + d["pmd_fwd"]
    else:
        omega_in, fwd_k = omega, fwd_static
    kf = act.polarization_perturbation_gain / PS if (coupled and setup.fast_line) else 0.0
    ks = act.slow_polarization_gain / PS if coupled else 0.0
    scale = max(np.max(np.abs(fwd_k)), np.max(np.abs(bwd)), 1e-15)
    if omega_in is not None:
        scale = max(scale, 0.5 * float(np.max(np.linalg.norm(omega_in, axis=1))))
    tau_th = act.slow_thermal_time_constant_s
    remote, error, fast, slow, ftot, flags, status = kernels.servo_loop(
        fwd_k, bwd, np.zeros(grid.n_samples), omega_in, d["launch_fwd"], d["pol_axis"],
        kf, ks, dt, kp, ki, D, D2, mode, act.fast_half, act.slow_half, tau_th,
        1e3 * scale, backend=backend,
    )
    if status:
        raise LoopInstabilityError(
            f"error signal diverged beyond 1e3 x input at sample {status - 1} "
            f"(t = {(status - 1) * dt:.6g} s)"
        )
    c = fast + slow
    c_remote = np.concatenate([np.zeros(min(D2, len(c))), c[: len(c) - D2]]) if D2 else c
    return {
        "remote": remote, "c_remote": c_remote, "error": error, "fast": fast, "slow": slow,
        "pmd_fwd": ftot - fwd_static, "flags": flags,
    }


# -------------------------------------------------------------- public runs


def run_closed_loop(setup, grid, seed, **kw):
    if setup.compensator != "optical":
        setup = replace(setup, compensator="optical")
    return simulate(setup, grid, seed, **kw)


def run_electronic_compensator(setup, grid, seed, **kw):
    setup = replace(setup, compensator="electronic")
    return simulate(setup, grid, seed, **kw)


def run_free_link(setup, grid, seed, **kw):
    setup = replace(setup, compensator="none")
    return simulate(setup, grid, seed, **kw)


def measurement_chain(remote, reference, bandwidth=MEASUREMENT_BANDWIDTH_HZ, out_rate=1.0):
    """Difference phase, one-pole low-pass, then point-decimation to ``out_rate``."""
    if remote.grid != reference.grid:
        raise ValueError("remote and reference must share a grid")
    dt = remote.grid.dt
    if 1.0 / dt <= 2.0 * bandwidth:
        raise ValueError(f"grid rate {1 / dt} Hz too low for a {bandwidth} Hz filter")
    step = (1.0 / out_rate) / dt
    istep = int(round(step))
    if abs(step - istep) > 1e-9 * step:
        raise ValueError("output period must be a whole number of samples")
    diff = remote.seconds() - reference.seconds()
    y = lowpass(diff, dt, bandwidth)
    dec = y[istep - 1 :: istep]
    grid = TimeGrid(dt * istep, len(dec), remote.grid.start_epoch + dt * (istep - 1))
    if remote.unit == "rad":
        return PhaseSeries(grid, 2 * np.pi * remote.carrier_frequency * dec, "rad",
                           remote.carrier_frequency)
    return PhaseSeries(grid, dec, "s", remote.carrier_frequency)


def lowpass(x, dt, bandwidth=MEASUREMENT_BANDWIDTH_HZ):
    alpha = 1.0 - math.exp(-2.0 * math.pi * bandwidth * dt)
    return kernels.onepole(x, alpha)


# ------------------------------------------------------- mixed-rate records


@dataclass
class LinkRun:
    """A long coarse record plus a short fast record through the measurement chain."""

    long: ScenarioResult
    fast: ScenarioResult | None
    measured_fast: PhaseSeries | None
    allan: AllanTable
    crossover: float

    @property
    def compliant(self):
        return self.long.compliant and (self.fast is None or self.fast.compliant)


def analysis_taus(grid, extra=(DAY,)):
    """Octave taus plus whole-sample ``extra`` points (one day by default)."""
    taus = set(octave_taus(grid.dt, grid.n_samples).tolist())
    for tau in extra:
        m = tau / grid.dt
        if abs(m - round(m)) < 1e-9 and grid.n_samples - 2 * round(m) >= MIN_DIFFERENCES:
            taus.add(round(m) * grid.dt)
    return np.array(sorted(taus))


def run_link(setup, seed, duration=3 * 86400.0, dt=1.0, fast_duration=2048.0, fast_dt=0.01,
             crossover=64.0, extra=None, backend=None):
    """Simulate ``duration`` at ``dt`` and a short ``fast_dt`` record for small taus."""
    grid = TimeGrid.spanning(duration, dt)
    long = simulate(setup, grid, seed, tag="long", extra=extra, backend=backend)
    long_series = PhaseSeries(grid, long.residual_seconds(), "s", setup.forward_rf)
    long_tab = overlapping_adev(long_series, analysis_taus(grid))
    if not fast_duration:
        return LinkRun(long, None, None, long_tab, 0.0)
    fgrid = TimeGrid.spanning(fast_duration, fast_dt)
    fast = simulate(setup, fgrid, seed, tag="fast", backend=backend)
    measured = measurement_chain(fast.remote_phase, fast.local_reference_phase)
    fast_tab = overlapping_adev(measured)
    return LinkRun(long, fast, measured, merge_tables(fast_tab, long_tab, crossover), crossover)


def dispersion_floor(setup, seed, duration=3 * 86400.0, dt=1.0, fast_duration=2048.0,
                     fast_dt=0.01, crossover=64.0):
    """Allan deviation of the closed-loop dispersion noise alone (remote end)."""
    from .laser_spectrum import dispersion_phase_noise

    k = dispersion_scale(setup)
    f_rf = setup.forward_rf
    tables = []
    for tag, dur, step in (("fast", fast_duration, fast_dt), ("long", duration, dt)):
        g = TimeGrid.spanning(dur, step)
        n1 = laser_frequency_noise(setup.noise.laser, g, seed, 1, f"{tag}/laser")
        n2 = laser_frequency_noise(setup.noise.laser, g, seed, 2, f"{tag}/laser")
        phi = dispersion_phase_noise(n1, n2, k * f_rf, closed_loop=True)
        series = PhaseSeries(g, phi, "rad", f_rf)
        if tag == "fast":
            series = measurement_chain(series, PhaseSeries(g, np.zeros(g.n_samples), "rad", f_rf))
        tables.append(overlapping_adev(series, None if tag == "fast" else analysis_taus(g)))
    return merge_tables(tables[0], tables[1], crossover)
