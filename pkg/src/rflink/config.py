"""Scenario files: INI grammar, strict validation and inheritance.

Grammar
-------
A scenario is a UTF-8 INI file (``configparser`` syntax, ``#`` comments).
An optional ``base = FILE`` key in ``[scenario]`` names a parent file
(resolved next to the child, then among the shipped scenarios); the child
overrides the parent key by key.  After merging every key listed in
``SCHEMA`` must be present, and any key or section not listed is an error.

Sections::

    [scenario]    name, compensator, fast_line, loop_model, seed,
                  duration_s, dt_s, fast_duration_s, fast_dt_s, crossover_s
    [link]        layout (comma separated element names), launch powers,
                  sbs_ceiling_mw, detector_sensitivity_dbm, reference_rx_dbm
    [fiber.NAME]  length_km, dispersion_ps_nm_km, attenuation_db_km, group_index
    [edfa.NAME]   gain_db, excess_stability
    [laser] [modulation] [fiber_noise] [pmd] [laser_noise] [floor]
    [actuators] [loop]

Fibre noise is given as Allan-deviation levels and converted to delay-PSD
coefficients on load.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import noise_models as nm
from .compensator import ActuatorParams, LinkSetup, LoopParams
from .laser_spectrum import LaserParams, ModulationParams
from .link_topology import Edfa, LinkSection, LinkTopology


class ConfigError(ValueError):
    """Malformed or incomplete scenario file."""


FLOAT, INT, BOOL, STR = "float", "int", "bool", "str"

SCHEMA = {
    "scenario": {
        "name": STR, "compensator": STR, "fast_line": BOOL, "loop_model": STR, "seed": INT,
        "duration_s": FLOAT, "dt_s": FLOAT, "fast_duration_s": FLOAT, "fast_dt_s": FLOAT,
        "crossover_s": FLOAT,
    },
    "link": {
        "layout": STR, "launch_power_fwd_mw": FLOAT, "launch_power_bwd_mw": FLOAT,
        "sbs_ceiling_mw": FLOAT, "detector_sensitivity_dbm": FLOAT, "reference_rx_dbm": FLOAT,
    },
    "laser": {
        "wavelength_nm": FLOAT, "amplitude_mod_index": FLOAT, "frequency_mod_index": FLOAT,
        "chirp_mhz_per_ma": FLOAT, "optical_power_mw": FLOAT,
    },
    "modulation": {"forward_rf_hz": FLOAT, "backward_rf_hz": FLOAT},
    "fiber_noise": {
        "white_pm_adev_1s": FLOAT, "flicker_fm_adev": FLOAT, "random_walk_fm_adev_1day": FLOAT,
        "diurnal_amplitude_ps": FLOAT, "diurnal_period_s": FLOAT,
    },
    "pmd": {
        "mean_dgd_ps": FLOAT, "n_waveplate_segments": INT, "drift_time_constant_s": FLOAT,
        "drift_std_rad": FLOAT, "diurnal_modulation_depth": FLOAT, "diurnal_period_s": FLOAT,
        "scrambler_fwd": BOOL, "scrambler_bwd": BOOL,
    },
    "laser_noise": {
        "white_fm_level": FLOAT, "slow_drift_level": FLOAT, "thermal_coupling_hz_per_s": FLOAT,
    },
    "floor": {
        "system_floor_psd_db": FLOAT, "floor_slope": INT, "edfa_excess_stability": FLOAT,
        "electronics_drift_stability": FLOAT, "excess_white_pm_stability": FLOAT,
    },
    "actuators": {
        "fast_range_ps": FLOAT, "fast_bandwidth_hz": FLOAT, "slow_sensitivity_ps_per_c": FLOAT,
        "slow_range_ns": FLOAT, "slow_thermal_time_constant_s": FLOAT,
        "polarization_perturbation_gain": FLOAT, "slow_polarization_gain": FLOAT,
    },
    "loop": {
        "proportional_gain": FLOAT, "unity_gain_bandwidth_hz": FLOAT,
        "slow_only_bandwidth_hz": FLOAT,
    },
}
ELEMENT_SCHEMA = {
    "fiber": {"length_km": FLOAT, "dispersion_ps_nm_km": FLOAT, "attenuation_db_km": FLOAT,
              "group_index": FLOAT},
    "edfa": {"gain_db": FLOAT, "excess_stability": FLOAT},
}
OPTIONAL = {"scenario": {"base"}}


def shipped_dir():
    return resources.files("rflink") / "scenarios"


def shipped_names():
    return sorted(p.name[:-4] for p in shipped_dir().iterdir() if p.name.endswith(".ini"))


def resolve(ref, relative_to=None):
    """Path of a scenario given a path or a shipped name (with or without .ini)."""
    cands = []
    p = Path(ref)
    if relative_to is not None and not p.is_absolute():
        cands.append(Path(relative_to) / p)
    cands.append(p)
    name = p.name if p.name.endswith(".ini") else p.name + ".ini"
    cands.append(Path(str(shipped_dir() / name)))
    for c in cands:
        if c.is_file():
            return c
    raise ConfigError(f"scenario {ref!r} not found (shipped: {', '.join(shipped_names())})")


def _read(path):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(cp.items(s)) for s in cp.sections()}


def load_raw(ref, _seen=None):
    """Merged ``{section: {key: str}}`` after following ``base`` links."""
    path = resolve(ref) if not isinstance(ref, Path) else ref
    _seen = _seen or []
    if path.resolve() in _seen:
        raise ConfigError(f"circular base chain at {path}")
    data = _read(path)
    base = data.get("scenario", {}).pop("base", None)
    if base is None:
        return data
    parent = load_raw(resolve(base, path.parent), _seen + [path.resolve()])
    for sec, kv in data.items():
        parent.setdefault(sec, {}).update(kv)
    return parent


def apply_overrides(raw, overrides):
    """``overrides`` maps ``section.key`` (section may contain a dot) to a string."""
    raw = {s: dict(kv) for s, kv in raw.items()}
    for dotted, value in overrides.items():
        sec, _, key = dotted.rpartition(".")
        if not sec:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if sec not in raw or key not in raw[sec]:
            raise ConfigError(f"override {dotted!r} does not address an existing key")
        raw[sec][key] = str(value)
    return raw


def canonical_text(raw):
    out = []
    for sec in sorted(raw):
        out.append(f"[{sec}]")
        out.extend(f"{k} = {raw[sec][k]}" for k in sorted(raw[sec]))
    return "\n".join(out) + "\n"


def config_hash(raw):
    return hashlib.sha256(canonical_text(raw).encode("utf-8")).hexdigest()[:16]


def _convert(sec, key, kind, text):
    text = text.strip()
    if text == "":
        raise ConfigError(f"[{sec}] {key} is empty")
    try:
        if kind == FLOAT:
            v = float(text)
            if math.isnan(v):
                raise ValueError
            return v
        if kind == INT:
            return int(text)
        if kind == BOOL:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
    except ValueError:
        raise ConfigError(f"[{sec}] {key} = {text!r} is not a valid {kind}") from None
    return text


def _typed(raw, sec, schema):
    if sec not in raw:
        raise ConfigError(f"missing section [{sec}]")
    kv = raw[sec]
    unknown = set(kv) - set(schema) - OPTIONAL.get(sec, set())
    if unknown:
        raise ConfigError(f"[{sec}] unknown key(s): {', '.join(sorted(unknown))}")
    missing = set(schema) - set(kv)
    if missing:
        raise ConfigError(f"[{sec}] missing key(s): {', '.join(sorted(missing))}")
    return {k: _convert(sec, k, t, kv[k]) for k, t in schema.items()}


@dataclass(frozen=True)
class Scenario:
    name: str
    setup: LinkSetup
    seed: int
    duration: float
    dt: float
    fast_duration: float
    fast_dt: float
    crossover: float
    raw: dict

    @property
    def config_hash(self):
        return config_hash(self.raw)

    def canonical_text(self):
        return canonical_text(self.raw)


def build(raw):
    """Validate a merged raw config and build a :class:`Scenario`."""
    element_secs = {s for s in raw if "." in s}
    for s in set(raw) - set(SCHEMA) - element_secs:
        raise ConfigError(f"unknown section [{s}]")
    v = {sec: _typed(raw, sec, schema) for sec, schema in SCHEMA.items()}

    sc = v["scenario"]
    if sc["compensator"] not in ("optical", "electronic", "none"):
        raise ConfigError(f"compensator must be optical, electronic or none, not {sc['compensator']!r}")
    if sc["loop_model"] not in ("auto", "spectral", "stepped"):
        raise ConfigError(f"loop_model must be auto, spectral or stepped, not {sc['loop_model']!r}")
    for k in ("duration_s", "dt_s", "fast_dt_s"):
        if not sc[k] > 0:
            raise ConfigError(f"[scenario] {k} must be positive")
    if sc["fast_duration_s"] < 0:
        raise ConfigError("[scenario] fast_duration_s must be >= 0")
    if sc["duration_s"] < 4 * sc["dt_s"]:
        raise ConfigError("[scenario] duration_s must cover at least four samples")

    layout = [n.strip() for n in v["link"]["layout"].split(",") if n.strip()]
    if not layout:
        raise ConfigError("[link] layout is empty")
    elements = []
    used = set()
    for name in layout:
        kinds = [k for k in ELEMENT_SCHEMA if f"{k}.{name}" in raw]
        if len(kinds) != 1:
            raise ConfigError(f"layout element {name!r} needs exactly one [fiber.{name}] or [edfa.{name}] section")
        sec = f"{kinds[0]}.{name}"
        used.add(sec)
        e = _typed(raw, sec, ELEMENT_SCHEMA[kinds[0]])
        try:
            if kinds[0] == "fiber":
                elements.append(LinkSection(name, e["length_km"], e["dispersion_ps_nm_km"],
                                            e["attenuation_db_km"], e["group_index"]))
            else:
                elements.append(Edfa(name, e["gain_db"], e["excess_stability"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for s in element_secs - used:
        kind = s.split(".", 1)[0]
        if kind not in ELEMENT_SCHEMA:
            raise ConfigError(f"unknown section [{s}]")
        raise ConfigError(f"section [{s}] is not used by [link] layout")

    try:
        lk = v["link"]
        mod = ModulationParams(v["modulation"]["forward_rf_hz"], v["modulation"]["backward_rf_hz"])
        topo = LinkTopology(
            tuple(elements), lk["launch_power_fwd_mw"], lk["launch_power_bwd_mw"],
            lk["sbs_ceiling_mw"], lk["detector_sensitivity_dbm"], lk["reference_rx_dbm"], mod,
        )
        laser = LaserParams(**v["laser"])
        fn = v["fiber_noise"]
        fiber = nm.FiberNoiseParams(
            white_pm_level=nm.white_pm_level(fn["white_pm_adev_1s"]),
            flicker_fm_level=nm.flicker_fm_level(fn["flicker_fm_adev"]),
            random_walk_fm_level=nm.random_walk_fm_level(fn["random_walk_fm_adev_1day"], nm.DAY),
            diurnal_amplitude_ps=fn["diurnal_amplitude_ps"],
            diurnal_period_s=fn["diurnal_period_s"],
        )
        p = dict(v["pmd"])
        p["scrambler_enabled_fwd"] = p.pop("scrambler_fwd")
        p["scrambler_enabled_bwd"] = p.pop("scrambler_bwd")
        pmd = nm.PmdParams(**p)
        noise = nm.NoiseBundle(fiber, pmd, nm.LaserNoiseParams(**v["laser_noise"]),
                               nm.FloorParams(**v["floor"]))
        act = ActuatorParams(**v["actuators"])
        lp = v["loop"]
        # the configured bandwidth is a ceiling; long links scale it down as 1/T_rt
        loop = LoopParams(proportional_gain=lp["proportional_gain"],
                          target_unity_gain_bandwidth=lp["unity_gain_bandwidth_hz"],
                          slow_only_bandwidth=lp["slow_only_bandwidth_hz"]).for_topology(topo)
        setup = LinkSetup(topo, laser, noise, act, loop, sc["compensator"], sc["fast_line"],
                          sc["loop_model"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return Scenario(sc["name"], setup, sc["seed"], sc["duration_s"], sc["dt_s"],
                    sc["fast_duration_s"], sc["fast_dt_s"], sc["crossover_s"], raw)


def load(ref, overrides=None, seed=None):
    """Load, merge, override and validate a scenario by path or shipped name."""
    raw = load_raw(resolve(ref))
    if overrides:
        raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw = apply_overrides(raw, {"scenario.seed": str(int(seed))})
    return build(raw)
