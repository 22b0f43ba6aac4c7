import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflink import config
from rflink.compensator import (
    PS,
    ActuatorParams,
    LinkSetup,
    LoopInstabilityError,
    LoopParams,
    design_integrator_gain,
    lowpass,
    measurement_chain,
    open_loop,
    phase_margin,
    residual_transfer,
    run_closed_loop,
    run_electronic_compensator,
    run_free_link,
    run_link,
    simulate,
)
from rflink.link_topology import LinkSection, LinkTopology
from rflink.noise_models import FiberNoiseParams, NoiseBundle, PhaseSeries, TimeGrid
from rflink.stability import overlapping_adev

SERVO_DT = 5e-5


@pytest.fixture(scope="module")
def quiet86():
    return LinkSetup(LinkTopology((LinkSection("span", 86.0),)))


def tone_amplitude(x, t, f):
    return 2.0 * abs(np.mean(x * np.exp(-2j * np.pi * f * t)))


class TestLoopDesign:
    def test_delay_margin_enforced(self):
        with pytest.raises(ValueError):
            LoopParams(roundtrip_delay=2e-3, target_unity_gain_bandwidth=150.0)

    def test_integrator_gives_unity_at_target(self):
        lp = LoopParams()
        L = open_loop([150.0], lp.proportional_gain, lp.integrator_gain, lp.roundtrip_delay)
        assert abs(L[0]) == pytest.approx(1.0, rel=1e-9)
        assert phase_margin(lp.proportional_gain, lp.integrator_gain, lp.roundtrip_delay) > 30.0

    def test_kp_too_large(self):
        with pytest.raises(ValueError):
            design_integrator_gain(0.6, 150.0, 0.88e-3)

    def test_bandwidth_scales_with_length(self):
        short = LoopParams().for_topology(LinkTopology((LinkSection("s", 86.0),)))
        long = LoopParams().for_topology(LinkTopology((LinkSection("s", 186.0),)))
        assert short.target_unity_gain_bandwidth == 150.0
        assert long.target_unity_gain_bandwidth * long.roundtrip_delay == pytest.approx(
            150.0 * 2 * 90e3 * 1.468 / 299_792_458.0)
        assert long.target_unity_gain_bandwidth < 1 / (4 * long.roundtrip_delay)

    def test_actuator_validation(self):
        with pytest.raises(ValueError):
            ActuatorParams(fast_range_ps=1e4, slow_range_ns=6.0)
        with pytest.raises(ValueError):
            ActuatorParams(slow_thermal_time_constant_s=0.0)

    def test_bad_setup_names(self, quiet86):
        with pytest.raises(ValueError):
            replace(quiet86, compensator="magic")
        with pytest.raises(ValueError):
            replace(quiet86, loop_model="exact")

    def test_phase_margin_checks_every_lobe(self):
        lp = LoopParams()
        T = lp.roundtrip_delay
        assert phase_margin(0.25, lp.integrator_gain, T) > 60.0
        assert phase_margin(0.8, 400.0, T) < 0.0

    def test_unstable_design_aborts(self, quiet86):
        # kp above 1/2 makes every lobe of K (1 + e^{-sT}) exceed unity
        bad = replace(quiet86, loop=replace(quiet86.loop, proportional_gain=0.8, integrator_gain=400.0))
        with pytest.raises(LoopInstabilityError):
            simulate(bad, TimeGrid(1.0, 100), 1, loop_model="spectral")
        g = TimeGrid.spanning(0.5, SERVO_DT)
        step = np.where(g.t > 0.01, PS, 0.0)
        with pytest.raises(LoopInstabilityError, match="diverged"):
            run_electronic_compensator(bad, g, 1, extra={"fwd": step, "bwd": step},
                                       loop_model="stepped")
        # the optical loop is held by its actuator ranges and flagged instead
        r = run_closed_loop(bad, g, 1, extra={"fwd": step, "bwd": step}, loop_model="stepped")
        assert r.saturation_flags["fast_saturated"] and not r.compliant


class TestZeroNoise:
    @pytest.mark.parametrize("runner", [run_closed_loop, run_electronic_compensator, run_free_link])
    def test_zero_residual(self, quiet86, runner):
        r = runner(quiet86, TimeGrid(1.0, 500), 3)
        assert np.all(r.residual_seconds() == 0.0)
        assert r.compliant


class TestHalfCorrection:
    @pytest.mark.parametrize("runner", [run_closed_loop, run_electronic_compensator])
    @pytest.mark.parametrize("model", ["stepped", "spectral"])
    def test_backward_only_step(self, quiet86, runner, model):
        eps = 1.7 * PS
        g = TimeGrid.spanning(2.0, SERVO_DT) if model == "stepped" else TimeGrid(1e-3, 4000)
        step = np.where(g.t >= 0.1, 2 * eps, 0.0)
        r = runner(quiet86, g, 1, extra={"bwd": step}, loop_model=model)
        x = r.residual_seconds()
        assert abs(x[-1]) == pytest.approx(eps, rel=0.02)
        assert r.fast[-1] + r.slow[-1] == pytest.approx(-eps, rel=0.02)

    @given(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
    @settings(max_examples=15, deadline=None)
    def test_steady_state_identity(self, quiet86, a, b):
        g = TimeGrid(1e-3, 3000)
        f = np.full(g.n_samples, a * PS)
        bw = np.full(g.n_samples, b * PS)
        r = simulate(quiet86, g, 1, extra={"fwd": f, "bwd": bw}, loop_model="spectral")
        c = r.fast + r.slow
        assert c[-1] == pytest.approx(-(a + b) / 2 * PS, abs=1e-4 * PS)
        assert r.residual_seconds()[-1] == pytest.approx((a - b) / 2 * PS, abs=1e-4 * PS)


class TestSymmetricSuppression:
    @pytest.mark.parametrize("f", [0.1, 10.0, 50.0])
    def test_matches_transfer_oracle(self, quiet86, f):
        lp = quiet86.loop
        dur = 20.0 if f < 1 else 2.0
        g = TimeGrid.spanning(dur, SERVO_DT)
        u = PS * np.sin(2 * np.pi * f * g.t)
        r = simulate(quiet86, g, 1, extra={"fwd": u, "bwd": u}, loop_model="stepped")
        sel = g.t >= dur / 2
        measured = tone_amplitude(r.residual_seconds()[sel], g.t[sel], f) / PS
        H = abs(residual_transfer([f], lp.proportional_gain, lp.integrator_gain, lp.roundtrip_delay)[0])
        assert measured == pytest.approx(H, rel=0.1)

    def test_spectral_model_is_the_analog_loop(self, quiet86):
        lp = quiet86.loop
        g = TimeGrid(1e-3, 20000)
        u = PS * np.sin(2 * np.pi * 2.0 * g.t)
        r = simulate(quiet86, g, 1, extra={"fwd": u, "bwd": u}, loop_model="spectral")
        sel = g.t >= 10
        measured = tone_amplitude(r.residual_seconds()[sel], g.t[sel], 2.0) / PS
        H = abs(residual_transfer([2.0], lp.proportional_gain, lp.integrator_gain, lp.roundtrip_delay)[0])
        assert measured == pytest.approx(H, rel=1e-3)


class TestShippedConfigs:
    @pytest.mark.parametrize("name", [n for n in config.shipped_names()
                                      if config.load(n).setup.compensator != "none"])
    def test_step_settles(self, name):
        s = replace(config.load(name).setup, noise=NoiseBundle.quiet())
        slow_only = s.servo_mode == 2
        ugb = s.loop.slow_only_bandwidth if slow_only else s.loop.target_unity_gain_bandwidth
        settle = 50.0 / ugb
        g = TimeGrid.spanning(1.2 * settle, 1.0 if slow_only else SERVO_DT)
        t0 = 0.1 * settle
        step = np.where(g.t >= t0, PS, 0.0)
        r = simulate(s, g, 1, extra={"fwd": step, "bwd": step}, loop_model="stepped")
        x = r.residual_seconds()
        assert np.max(np.abs(x)) <= 2 * PS
        assert np.max(np.abs(x[g.t >= t0 + settle])) < 0.02 * PS


class TestSaturation:
    @pytest.mark.parametrize("model", ["stepped", "spectral"])
    def test_large_drift_flagged(self, quiet86, model):
        g = TimeGrid(1.0, 4000)
        ramp = 8e-9 * g.t / g.t[-1]
        r = simulate(quiet86, g, 1, extra={"fwd": ramp, "bwd": ramp}, loop_model=model)
        assert r.saturation_flags["slow_saturated"]
        assert not r.compliant

    def test_small_drift_not_flagged(self, quiet86):
        # a slow 2-ns drift stays inside both ranges (the fast line carries the thermal lag)
        g = TimeGrid(1.0, 40000)
        ramp = 2e-9 * g.t / g.t[-1]
        r = simulate(quiet86, g, 1, extra={"fwd": ramp, "bwd": ramp}, loop_model="stepped")
        assert r.compliant

    def test_stepped_actuators_stay_in_range(self, quiet86):
        g = TimeGrid(1.0, 4000)
        ramp = 8e-9 * g.t / g.t[-1]
        r = simulate(quiet86, g, 1, extra={"fwd": ramp, "bwd": ramp}, loop_model="stepped")
        act = quiet86.actuators
        assert np.max(np.abs(r.slow)) <= act.slow_half
        assert np.max(np.abs(r.fast)) <= act.fast_half
        # the uncorrected part of the drift shows up at the remote end
        assert abs(r.residual_seconds()[-1]) > 1e-9

    def test_electronic_has_no_range(self, quiet86):
        g = TimeGrid(1.0, 4000)
        ramp = 8e-9 * g.t / g.t[-1]
        r = run_electronic_compensator(quiet86, g, 1, extra={"fwd": ramp, "bwd": ramp},
                                       loop_model="stepped")
        assert r.compliant


def closure_error(r):
    rf = r.remote_phase.carrier_frequency
    total = sum(r.components.values())
    rebuilt = 2 * np.pi * rf * total
    return np.max(np.abs(rebuilt - (r.remote_phase.values - r.local_reference_phase.values)))


class TestBookkeeping:
    @pytest.mark.parametrize("name", ["baseline_86km", "paper_fig3_free_86km",
                                      "paper_fig5_no_scramblers", "paper_fig6_optical_186km"])
    def test_closure(self, name):
        sc = config.load(name)
        r = simulate(sc.setup, TimeGrid(1.0, 20000), sc.seed)
        assert closure_error(r) < 1e-12

    def test_closure_coupled_spectral(self):
        sc = config.load("baseline_86km", overrides={"pmd.scrambler_fwd": "false"})
        assert sc.setup.coupled
        r = simulate(sc.setup, TimeGrid(1.0, 20000), sc.seed)
        assert r.loop_model == "spectral"
        assert closure_error(r) < 1e-12

    def test_closure_servo_band(self):
        sc = config.load("baseline_86km", overrides={"pmd.scrambler_fwd": "false"})
        r = simulate(sc.setup, TimeGrid.spanning(2.0, SERVO_DT), sc.seed)
        assert r.loop_model == "stepped"
        assert closure_error(r) < 1e-12

    def test_components_and_grid(self):
        sc = config.load("baseline_86km")
        r = simulate(sc.setup, TimeGrid(1.0, 1000), sc.seed)
        assert set(r.components) == {"fiber", "dispersion", "pmd", "floor", "extra", "correction"}
        for s in (r.remote_phase, r.local_reference_phase, r.error_signal):
            assert s.grid == r.grid

    def test_csv_columns(self, tmp_path):
        sc = config.load("baseline_86km")
        r = simulate(sc.setup, TimeGrid(1.0, 10), sc.seed)
        r.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "t,remote_phase_rad,error_rad,fast_ps,slow_ps"
        assert len(lines) == 11


class TestPolarizationCoupling:
    def test_scrambler_protects_loop(self):
        on = config.load("baseline_86km")
        off = config.load("baseline_86km", overrides={"pmd.scrambler_fwd": "false",
                                                      "pmd.scrambler_bwd": "false"})
        assert off.setup.coupled and not on.setup.coupled
        sig = []
        for sc in (on, off):
            r = run_link(sc.setup, sc.seed, duration=86400.0, fast_duration=0)
            sig.append(r.allan.at(1024.0))
        assert sig[1] >= 5 * sig[0]


class TestMeasurementChain:
    def test_identical_inputs(self):
        g = TimeGrid(1e-2, 1000)
        a = PhaseSeries(g, np.random.default_rng(0).standard_normal(1000) * 1e-12)
        out = measurement_chain(a, a)
        assert np.all(out.values == 0.0)
        assert out.grid.dt == pytest.approx(1.0)

    def test_rate_too_low(self):
        g = TimeGrid(0.2, 100)
        a = PhaseSeries(g, np.zeros(100))
        with pytest.raises(ValueError):
            measurement_chain(a, a)

    def test_grid_mismatch(self):
        a = PhaseSeries(TimeGrid(1e-2, 100), np.zeros(100))
        b = PhaseSeries(TimeGrid(1e-2, 101), np.zeros(101))
        with pytest.raises(ValueError):
            measurement_chain(a, b)

    def test_10hz_response(self):
        g = TimeGrid(1e-3, 20000)
        x = PhaseSeries(g, 1e-12 * np.sin(2 * np.pi * 10.0 * g.t))
        zero = PhaseSeries(g, np.zeros(g.n_samples))
        out = measurement_chain(x, zero, out_rate=200.0)
        sel = out.grid.t > 5.0
        amp = tone_amplitude(out.values[sel], out.grid.t[sel], 10.0)
        expect = 1e-12 / math.hypot(1.0, 10.0 / 3.0)
        assert amp == pytest.approx(expect, rel=0.05)

    def test_noise_bandwidth(self):
        g = TimeGrid(1e-3, 400_000)
        x = np.random.default_rng(4).standard_normal(g.n_samples)
        y = lowpass(x, g.dt)
        ratio = np.var(y[1000:]) / np.var(x)
        enb = 0.5 * math.pi * 3.0
        assert ratio == pytest.approx(enb / (0.5 / g.dt), rel=0.1)

    def test_rad_series_kept_in_rad(self):
        g = TimeGrid(1e-2, 200)
        a = PhaseSeries(g, np.ones(200), "rad", 1e9)
        b = PhaseSeries(g, np.zeros(200), "rad", 1e9)
        out = measurement_chain(a, b)
        assert out.unit == "rad"
        assert out.values[-1] == pytest.approx(1.0)


class TestFreeLink:
    def test_diurnal_bump(self, quiet86):
        s = replace(quiet86, noise=NoiseBundle(fiber=FiberNoiseParams(diurnal_amplitude_ps=20.0)))
        g = TimeGrid(60.0, 14400)
        r = run_free_link(s, g, 1)
        taus = 60.0 * np.unique(np.logspace(0, math.log10(3000), 80).astype(int))
        tab = overlapping_adev(PhaseSeries(g, r.residual_seconds()), taus)
        peak = tab.taus[np.argmax(tab.sigma)]
        assert 0.3 * 86400 <= peak <= 0.55 * 86400

    def test_free_link_has_no_correction(self):
        sc = config.load("paper_fig3_free_86km")
        r = simulate(sc.setup, TimeGrid(1.0, 100), sc.seed)
        assert np.all(r.fast == 0) and np.all(r.components["correction"] == 0)
