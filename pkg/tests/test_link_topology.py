import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rflink.laser_spectrum import LaserParams, ModulationParams, differential_delay
from rflink.link_topology import (
    Edfa,
    LinkSection,
    LinkTopology,
    dispersion_length_product,
    power_budget,
    reference_roundtrip_delay,
    scaling_forecast,
    total_differential_delay,
)

W = 2 * np.pi * 1e9


def link(*elements, **kw):
    kw.setdefault("launch_power_fwd_mw", 20.0)
    kw.setdefault("launch_power_bwd_mw", 20.0)
    return LinkTopology(elements, **kw)


class TestElements:
    def test_section_validation(self):
        for bad in (0.0, -1.0, float("nan")):
            with pytest.raises(ValueError):
                LinkSection("s", bad)
        with pytest.raises(ValueError):
            LinkSection("s", 1.0, attenuation_db_km=-0.1)
        with pytest.raises(ValueError):
            LinkSection("s", 1.0, group_index=0.9)

    def test_edfa_gain_range(self):
        with pytest.raises(ValueError):
            Edfa("a", gain_db=31)

    def test_topology_validation(self):
        with pytest.raises(ValueError):
            link(Edfa("a"))
        with pytest.raises(ValueError):
            link(LinkSection("s", 1), LinkSection("s", 2))
        with pytest.raises(ValueError):
            link(LinkSection("s", 1), launch_power_fwd_mw=0.0)

    def test_delay(self):
        s = LinkSection("s", 86.0)
        assert s.delay_s == pytest.approx(86e3 * 1.468 / 299_792_458.0)
        t = link(s)
        assert t.roundtrip_delay == pytest.approx(2 * s.delay_s)

    @given(st.floats(1.0, 500.0), st.floats(0.05, 0.95))
    def test_split_preserves_totals(self, L, frac):
        a, b = LinkSection("s", L).split(frac)
        assert a.length_km + b.length_km == pytest.approx(L)
        assert a.loss_db + b.loss_db == pytest.approx(LinkSection("s", L).loss_db)


class TestBudget:
    def test_86km_passes(self):
        r = power_budget(link(LinkSection("span", 86.0), launch_power_fwd_mw=20.0))
        assert r.passed
        assert r.rx_dbm["fwd"] == pytest.approx(10 * math.log10(20) - 17.2)
        assert r.rf_level_db["fwd"] == pytest.approx(2 * r.rx_dbm["fwd"])

    def test_extra_100km_costs_40db_rf(self):
        base = power_budget(link(LinkSection("span", 86.0)))
        long = power_budget(link(LinkSection("span1", 86.0), LinkSection("span2", 100.0)))
        assert base.rf_level_db["fwd"] - long.rf_level_db["fwd"] == pytest.approx(40.0)
        assert not long.passed
        assert any("fwd detector" in f for f in long.failures)

    def test_edfa_restores_budget(self):
        r = power_budget(link(LinkSection("span1", 86.0), Edfa("amp1", 20.0), LinkSection("span2", 100.0)))
        assert r.passed
        assert r.rx_dbm["fwd"] == pytest.approx(r.rx_dbm["bwd"])
        text = r.text()
        assert "result: PASS" in text and "amp1" in text

    def test_sbs_ceiling_is_hard_failure(self):
        r = power_budget(link(LinkSection("span", 10.0), launch_power_fwd_mw=200.0))
        assert r.hard_failure is not None and "SBS" in r.hard_failure
        assert not r.passed

    def test_sbs_at_edfa_output(self):
        r = power_budget(link(LinkSection("a", 10.0), Edfa("amp", 30.0), LinkSection("b", 10.0),
                              launch_power_fwd_mw=1.0, launch_power_bwd_mw=1.0))
        assert r.hard_failure and "amp" in r.hard_failure

    def test_snr_penalty(self):
        r = power_budget(link(LinkSection("span", 150.0)), system_floor_db=-120.0)
        assert r.snr_penalty_db > 0
        assert r.projected_floor_db == pytest.approx(-120.0 + r.snr_penalty_db)

    def test_csv(self, tmp_path):
        power_budget(link(LinkSection("span", 86.0))).to_csv(tmp_path / "b.csv")
        rows = (tmp_path / "b.csv").read_text().splitlines()
        assert rows[0] == "direction,node,position_km,power_dbm,rf_db"
        assert len(rows) == 5


class TestDispersion:
    def test_sum_over_sections(self):
        lp = LaserParams()
        t = link(LinkSection("a", 50.0), LinkSection("b", 40.0))
        one = differential_delay(17, 90, lp.wavelength_nm, lp.carrier_frequency_hz, W)
        assert total_differential_delay(t, lp, W) == pytest.approx(one, rel=1e-12)
        assert dispersion_length_product(t) == pytest.approx(17 * 90)

    def test_compensating_fibre(self):
        lp = LaserParams()
        t = link(LinkSection("a", 50.0), LinkSection("dcf", 10.0, dispersion=-85.0))
        assert total_differential_delay(t, lp, W) == pytest.approx(0.0, abs=1e-25)


class TestForecast:
    def test_1000km(self):
        f = scaling_forecast(1000.0)
        assert f["n_edfa"] == 10
        assert 5.0 <= f["loop_bandwidth_hz"] <= 20.0
        assert f["max_noise_suppression_at_1s"] <= 10.0
        assert f["heuristic"] is True

    def test_reference_point(self):
        f = scaling_forecast(90.0)
        assert f["n_edfa"] == 0
        assert f["loop_bandwidth_hz"] == pytest.approx(150.0)
        assert f["roundtrip_delay_s"] == pytest.approx(reference_roundtrip_delay())

    @given(st.floats(10.0, 5000.0))
    def test_bandwidth_times_delay_constant(self, L):
        f = scaling_forecast(L)
        assert f["loop_bandwidth_hz"] * f["roundtrip_delay_s"] == pytest.approx(
            150.0 * reference_roundtrip_delay())

    def test_bad_length(self):
        with pytest.raises(ValueError):
            scaling_forecast(0.0)


def test_modulation_in_topology():
    t = link(LinkSection("s", 1.0), modulation=ModulationParams(1e8, 0.9e8))
    assert t.modulation.forward_rf == 1e8
