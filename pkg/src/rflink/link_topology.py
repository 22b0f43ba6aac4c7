"""Cascaded link layouts, optical/RF power budgets and long-haul scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .laser_spectrum import (
    C_LIGHT,
    LaserParams,
    ModulationParams,
    differential_delay,
    max_line_power_fraction,
    sideband_amplitudes,
)


@dataclass(frozen=True)
class LinkSection:
    name: str
    length_km: float
    dispersion: float = 17.0  # ps/(km nm)
    attenuation_db_km: float = 0.2
    group_index: float = 1.468

    def __post_init__(self):
        if not (self.length_km > 0 and math.isfinite(self.length_km)):
            raise ValueError(f"section {self.name!r}: length must be > 0")
        if self.attenuation_db_km < 0:
            raise ValueError(f"section {self.name!r}: attenuation must be >= 0")
        if self.group_index < 1:
            raise ValueError(f"section {self.name!r}: group index must be >= 1")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_km

    @property
    def rf_loss_db(self) -> float:
        # square-law detection: RF power goes as optical power squared
        return 2.0 * self.loss_db

    @property
    def delay_s(self) -> float:
        return self.length_km * 1e3 * self.group_index / C_LIGHT

    def split(self, fraction=0.5):
        a = self.length_km * fraction
        kw = dict(dispersion=self.dispersion, attenuation_db_km=self.attenuation_db_km,
                  group_index=self.group_index)
        return (LinkSection(self.name + "_a", a, **kw),
                LinkSection(self.name + "_b", self.length_km - a, **kw))


@dataclass(frozen=True)
class Edfa:
    """Bidirectional amplifier; ``excess_stability`` is its sigma_y(1 s)."""

    name: str
    gain_db: float = 20.0
    excess_stability: float = 3e-15

    def __post_init__(self):
        if not 0 <= self.gain_db <= 30:
            raise ValueError(f"EDFA {self.name!r}: gain must lie in [0, 30] dB")


@dataclass(frozen=True)
class LinkTopology:
    elements: tuple
    launch_power_fwd_mw: float = 20.0
    launch_power_bwd_mw: float = 20.0
    sbs_ceiling_mw: float = 5.0
    detector_sensitivity_dbm: float = -20.0
    reference_rx_dbm: float = -5.0
    modulation: ModulationParams = field(default_factory=ModulationParams)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.sections:
            raise ValueError("topology needs at least one fibre section")
        names = [e.name for e in self.elements]
        if len(set(names)) != len(names):
            raise ValueError("element names must be unique")
        if self.launch_power_fwd_mw <= 0 or self.launch_power_bwd_mw <= 0:
            raise ValueError("launch powers must be positive")

    @property
    def sections(self):
        return [e for e in self.elements if isinstance(e, LinkSection)]

    @property
    def edfas(self):
        return [e for e in self.elements if isinstance(e, Edfa)]

    @property
    def total_length_km(self) -> float:
        return sum(s.length_km for s in self.sections)

    @property
    def roundtrip_delay(self) -> float:
        return 2.0 * sum(s.delay_s for s in self.sections)


def dbm(mw):
    return 10.0 * math.log10(mw)


@dataclass
class BudgetNode:
    direction: str
    name: str
    position_km: float
    power_dbm: float
    rf_db: float


@dataclass
class BudgetReport:
    nodes: list
    rx_dbm: dict
    rf_level_db: dict
    snr_db_1hz: dict
    projected_floor_db: float
    snr_penalty_db: float
    max_line_mw: float
    failures: list
    hard_failure: str | None = None

    @property
    def passed(self) -> bool:
        return not self.failures and self.hard_failure is None

    def text(self) -> str:
        lines = ["link power budget", "================="]
        for d in ("fwd", "bwd"):
            lines.append(
                f"{d}: received {self.rx_dbm[d]:.2f} dBm optical, RF level {self.rf_level_db[d]:.2f} dB, "
                f"C/N0 {self.snr_db_1hz[d]:.1f} dB in 1 Hz"
            )
        lines.append(f"max single-line launch power: {self.max_line_mw:.3f} mW")
        lines.append(f"projected error-signal floor: {self.projected_floor_db:.1f} dB rad^2/Hz at 1 Hz "
                     f"(penalty {self.snr_penalty_db:.1f} dB)")
        lines.append("nodes:")
        for n in self.nodes:
            lines.append(f"  {n.direction} {n.name:<12s} {n.position_km:8.1f} km "
                         f"{n.power_dbm:8.2f} dBm  RF {n.rf_db:8.2f} dB")
        if self.hard_failure:
            lines.append(f"HARD FAILURE: {self.hard_failure}")
        for f in self.failures:
            lines.append(f"FAIL: {f}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "node", "position_km", "power_dbm", "rf_db"])
            for n in self.nodes:
                w.writerow([n.direction, n.name, f"{n.position_km:.6g}", f"{n.power_dbm:.6f}", f"{n.rf_db:.6f}"])


def power_budget(topology, laser=None, system_floor_db=-120.0):
    """Cumulative dB accounting in both directions.

    Every point that launches light into fibre (transmitter or EDFA output)
    is checked against the per-line SBS ceiling; every detector against the
    configured sensitivity.
    """
    laser = laser or LaserParams()
    coeffs = sideband_amplitudes(laser.frequency_mod_index, laser.amplitude_mod_index)
    line_frac = max_line_power_fraction(coeffs)
    nodes, failures, hard = [], [], None
    rx, max_line = {}, 0.0
    for direction, launch_mw, elems in (
        ("fwd", topology.launch_power_fwd_mw, list(topology.elements)),
        ("bwd", topology.launch_power_bwd_mw, list(reversed(topology.elements))),
    ):
        p = dbm(launch_mw)
        pos = 0.0
        nodes.append(BudgetNode(direction, "tx", pos, p, 2.0 * p))
        launch_points = [("tx", p)]
        for e in elems:
            if isinstance(e, LinkSection):
                p -= e.loss_db
                pos += e.length_km
            else:
                p += e.gain_db
                launch_points.append((e.name, p))
            nodes.append(BudgetNode(direction, e.name, pos, p, 2.0 * p))
        for name, pl in launch_points:
            line_mw = 10.0 ** (pl / 10.0) * line_frac
            max_line = max(max_line, line_mw)
            if line_mw > topology.sbs_ceiling_mw and hard is None:
                hard = (f"SBS ceiling exceeded at {direction}/{name}: "
                        f"{line_mw:.3f} mW per line > {topology.sbs_ceiling_mw} mW")
        rx[direction] = p
        if p < topology.detector_sensitivity_dbm:
            failures.append(f"{direction} detector at {p:.2f} dBm below sensitivity "
                            f"{topology.detector_sensitivity_dbm} dBm")
    worst = min(rx.values())
    penalty = max(0.0, 2.0 * (topology.reference_rx_dbm - worst))
    floor = system_floor_db + penalty
    rf = {d: 2.0 * v for d, v in rx.items()}
    snr = {d: -(system_floor_db + max(0.0, 2.0 * (topology.reference_rx_dbm - v))) for d, v in rx.items()}
    return BudgetReport(nodes, rx, rf, snr, floor, penalty, max_line, failures, hard)


def total_differential_delay(topology, laser, omega):
    """Sum of per-section differential delays (s); negative-D fibre subtracts."""
    return sum(
        differential_delay(s.dispersion, s.length_km, laser.wavelength_nm,
                           laser.carrier_frequency_hz, omega)
        for s in topology.sections
    )


def dispersion_length_product(topology):
    """Sum of D*L over sections, ps/nm."""
    return sum(s.dispersion * s.length_km for s in topology.sections)


REFERENCE_LENGTH_KM = 90.0
REFERENCE_UGB_HZ = 150.0
REFERENCE_ADEV_1DAY = 2e-18


def reference_roundtrip_delay(group_index=1.468):
    return 2.0 * REFERENCE_LENGTH_KM * 1e3 * group_index / C_LIGHT


def scaling_forecast(total_length_km, group_index=1.468, span_km=100.0,
                     reference_length_km=REFERENCE_LENGTH_KM, reference_ugb_hz=REFERENCE_UGB_HZ,
                     measurement_bandwidth_hz=3.0, reference_adev_1day=REFERENCE_ADEV_1DAY):
    """Heuristic long-haul forecast scaled from the reference link.

    * loop bandwidth scales as ``1 / T_rt``;
    * one amplifier per ``span_km`` once the link is longer than one span;
    * suppression at 1 s is bounded by bandwidth / measurement bandwidth
      (the 1-s Allan point is set by noise near the edge of the 3-Hz filter);
    * the 1-day stability follows the dispersion noise, linear in length.
    """
    if not (total_length_km > 0 and math.isfinite(total_length_km)):
        raise ValueError("total_length_km must be positive")
    t_rt = 2.0 * total_length_km * 1e3 * group_index / C_LIGHT
    t_ref = reference_roundtrip_delay(group_index) * reference_length_km / REFERENCE_LENGTH_KM
    bw = reference_ugb_hz * t_ref / t_rt
    n_edfa = 0 if total_length_km <= span_km else math.ceil(total_length_km / span_km)
    return {
        "length_km": total_length_km,
        "roundtrip_delay_s": t_rt,
        "loop_bandwidth_hz": bw,
        "n_edfa": n_edfa,
        "max_noise_suppression_at_1s": bw / measurement_bandwidth_hz,
        "projected_adev_1day": reference_adev_1day * total_length_km / reference_length_km,
        "heuristic": True,
    }
