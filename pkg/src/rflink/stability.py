"""Allan deviation, phase-noise PSD and frequency-offset estimation.

Phase data is converted to time error ``x = phi / (2 pi nu0)`` before any
Allan statistic is formed, so results are fractional frequency.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from . import kernels
from .noise_models import PhaseSeries

#: PSD value (dB) reported for an identically zero series
PSD_FLOOR_SENTINEL_DB = -999.0
MIN_DIFFERENCES = 4

CI_CONVENTION = "68.3% chi-squared interval, EDF from identified power-law noise type"


@dataclass
class AllanTable:
    taus: np.ndarray
    sigma: np.ndarray
    ci: np.ndarray
    n: np.ndarray
    noise_types: list = field(default_factory=list)
    convention: str = CI_CONVENTION

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.ci = np.asarray(self.ci, dtype=float)
        self.n = np.asarray(self.n, dtype=np.int64)
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")

    def __len__(self):
        return len(self.taus)

    def at(self, tau, rtol=1e-9):
        """sigma_y at ``tau`` (exact match on the table's tau grid)."""
        idx = np.flatnonzero(np.isclose(self.taus, tau, rtol=rtol))
        if not idx.size:
            raise KeyError(f"tau={tau} not in table")
        return float(self.sigma[idx[0]])

    def interp(self, tau):
        """Log-log interpolation of sigma_y."""
        return float(np.exp(np.interp(np.log(tau), np.log(self.taus), np.log(self.sigma))))

    def slice(self, lo, hi):
        sel = (self.taus >= lo) & (self.taus <= hi)
        return self.taus[sel], self.sigma[sel]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s", "adev", "ci", "n"])
            for row in zip(self.taus, self.sigma, self.ci, self.n):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(data["tau_s"], data["adev"], data["ci"], data["n"].astype(np.int64))


@dataclass
class PsdEstimate:
    freqs: np.ndarray
    psd_db: np.ndarray
    n_segments: int
    window: str
    carrier_frequency: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "psd_dbrad2hz"])
            for f, p in zip(self.freqs, self.psd_db):
                w.writerow([repr(float(f)), repr(float(p))])

    def linear(self):
        out = 10.0 ** (self.psd_db / 10.0)
        out[self.psd_db <= PSD_FLOOR_SENTINEL_DB] = 0.0
        return out


def octave_taus(dt, n_samples):
    """tau = dt * 2**k for every k that leaves enough differences."""
    taus = []
    m = 1
    while n_samples - 2 * m >= MIN_DIFFERENCES:
        taus.append(m * dt)
        m *= 2
    return np.array(taus)


def _time_error(phase):
    if isinstance(phase, PhaseSeries):
        return phase.seconds(), phase.grid.dt
    raise TypeError("expected a PhaseSeries")


def _taus_to_m(taus, dt):
    ms = []
    for tau in np.atleast_1d(taus):
        m = tau / dt
        mi = int(round(m))
        if mi < 1 or abs(m - mi) > 1e-6 * max(1.0, m):
            raise ValueError(f"tau={tau} is not a positive multiple of dt={dt}")
        ms.append(mi)
    return np.array(ms, dtype=np.int_)


def overlapping_adev(phase, taus=None, backend=None):
    """Overlapping Allan deviation of a phase (or delay) series.

    Entries with fewer than four second differences are omitted.
    """
    x, dt = _time_error(phase)
    if taus is None:
        taus = octave_taus(dt, len(x))
    ms = _taus_to_m(taus, dt)
    order = np.argsort(ms)
    ms = np.unique(ms[order])
    sums, counts = kernels.adev_sums(x, ms, backend=backend)
    keep = counts >= MIN_DIFFERENCES
    ms, sums, counts = ms[keep], sums[keep], counts[keep]
    taus_out = ms * dt
    sigma = np.sqrt(sums / (2.0 * counts)) / taus_out
    types = identify_noise_types(taus_out, sigma)
    ci = np.array(
        [confidence_halfwidth(s, edf(len(x), m, t)) for s, m, t in zip(sigma, ms, types)]
    )
    return AllanTable(taus_out, sigma, ci, counts, types)


def nonoverlapping_adev(x, m, dt):
    """Classic non-overlapping estimator on time-error samples ``x``."""
    x = np.asarray(x, dtype=float)
    xs = x[::m]
    d = xs[2:] - 2.0 * xs[1:-1] + xs[:-2]
    if d.size == 0:
        raise ValueError("series too short")
    tau = m * dt
    return math.sqrt(np.mean(d**2) / 2.0) / tau


def identify_noise_types(taus, sigma):
    """Label each tau by the local log-log slope of sigma_y."""
    if len(taus) < 2:
        return ["white_fm"] * len(taus)
    lt, ls = np.log(taus), np.log(np.maximum(sigma, 1e-300))
    slopes = np.gradient(ls, lt)
    out = []
    for mu in slopes:
        if mu <= -0.75:
            out.append("white_pm")
        elif mu <= -0.25:
            out.append("white_fm")
        elif mu <= 0.25:
            out.append("flicker_fm")
        else:
            out.append("rw_fm")
    return out


def edf(n_phase, m, noise_type):
    """Approximate equivalent degrees of freedom of overlapping Allan variance."""
    N = n_phase - 1
    if N - 2 * m < 1:
        return 1.0
    if noise_type == "white_pm":
        v = (N + 1) * (N - 2 * m) / (2.0 * (N - m))
    elif noise_type == "white_fm":
        v = (3.0 * (N - 1) / (2.0 * m) - 2.0 * (N - 2) / N) * 4.0 * m * m / (4.0 * m * m + 5.0)
    elif noise_type == "flicker_fm":
        v = 2.0 * (N - 2) ** 2 / (2.3 * N - 4.9) if m == 1 else 5.0 * N * N / (4.0 * m * (N + 3 * m))
    else:
        v = (N - 2) / m * ((N - 1) ** 2 - 3 * m * (N - 1) + 4 * m * m) / (N - 3) ** 2
    return float(max(v, 1.0))


def confidence_halfwidth(sigma, dof, level=0.683):
    lo_q, hi_q = (1 - level) / 2, 1 - (1 - level) / 2
    upper = sigma * math.sqrt(dof / stats.chi2.ppf(lo_q, dof))
    lower = sigma * math.sqrt(dof / stats.chi2.ppf(hi_q, dof))
    return 0.5 * (upper - lower)


def merge_tables(short, long, crossover):
    """Join two tables: taus <= crossover from ``short``, the rest from ``long``."""
    a = short.taus <= crossover
    b = long.taus > crossover
    return AllanTable(
        np.concatenate([short.taus[a], long.taus[b]]),
        np.concatenate([short.sigma[a], long.sigma[b]]),
        np.concatenate([short.ci[a], long.ci[b]]),
        np.concatenate([short.n[a], long.n[b]]),
        [t for t, k in zip(short.noise_types, a) if k] + [t for t, k in zip(long.noise_types, b) if k],
    )


def psd_phase(phase, segment_length=None, window="hann"):
    """One-sided averaged-periodogram phase PSD in dB rad^2/Hz.

    Uses 50 %-overlapped segments (Welch).  Phase in seconds is converted at
    the series' carrier frequency (1 GHz when none is attached).
    """
    if isinstance(phase, PhaseSeries):
        carrier = phase.carrier_frequency or 1e9
        phi = phase.to_rad(carrier).values
        dt = phase.grid.dt
    else:
        raise TypeError("expected a PhaseSeries")
    n = len(phi)
    if segment_length is None:
        segment_length = min(n, 1 << max(1, int(math.log2(max(n // 8, 2)))))
    segment_length = int(segment_length)
    if segment_length < 2 or segment_length > n:
        raise ValueError(f"segment_length must be in [2, {n}]")
    f, p = signal.welch(
        phi, fs=1.0 / dt, window=window, nperseg=segment_length,
        noverlap=segment_length // 2, detrend="constant", return_onesided=True,
        scaling="density",
    )
    f, p = f[1:], p[1:]
    with np.errstate(divide="ignore"):
        db = np.where(p > 0, 10.0 * np.log10(np.where(p > 0, p, 1.0)), PSD_FLOOR_SENTINEL_DB)
    n_seg = 1 + (n - segment_length) // (segment_length - segment_length // 2)
    return PsdEstimate(f, db, n_seg, window, carrier)


@dataclass(frozen=True)
class FrequencyOffset:
    offset: float
    uncertainty: float
    ls_uncertainty: float


def fractional_offset(phase):
    """Mean fractional frequency offset from a least-squares fit to x(t).

    The reported uncertainty is the larger of the white-noise least-squares
    standard error and the Allan deviation at a third of the record length, which
    keeps the error bar honest when the residual is not white.
    """
    x, dt = _time_error(phase)
    t = phase.grid.t - phase.grid.t[0]
    if t[-1] < 1000.0:
        raise ValueError("need at least 1000 s of data")
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    resid = x - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(np.sum((t - t.mean()) ** 2)))
    m_half = len(x) // 3
    if m_half >= 1:
        tab = overlapping_adev(phase, [m_half * dt])
        adev_half = float(tab.sigma[0]) if len(tab) else 0.0
    else:
        adev_half = 0.0
    return FrequencyOffset(float(coef[0]), max(se, adev_half), se)


def adev_from_white_pm_psd(psd_rad2hz, carrier, f_h, tau):
    """sigma_y(tau) for white PM with flat phase PSD up to ``f_h``."""
    s_x = psd_rad2hz / (2.0 * math.pi * carrier) ** 2
    return math.sqrt(3.0 * f_h * s_x) / tau


def loglog_slope(taus, sigma):
    return float(np.polyfit(np.log(taus), np.log(sigma), 1)[0])
