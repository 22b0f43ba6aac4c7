import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rflink.noise_models import (
    PhaseSeries,
    TimeGrid,
    flicker_fm_level,
    random_walk_fm_level,
    synthesize_colored_noise,
    white_fm_level,
)
from rflink.stability import (
    PSD_FLOOR_SENTINEL_DB,
    AllanTable,
    adev_from_white_pm_psd,
    confidence_halfwidth,
    fractional_offset,
    identify_noise_types,
    loglog_slope,
    merge_tables,
    nonoverlapping_adev,
    octave_taus,
    overlapping_adev,
    psd_phase,
)


def brute_force_oadev(x, m, tau):
    """Oracle: literal double loop over overlapping second differences."""
    n = len(x)
    acc = 0.0
    cnt = 0
    for i in range(n - 2 * m):
        d = x[i + 2 * m] - 2 * x[i + m] + x[i]
        acc += d * d
        cnt += 1
    return math.sqrt(acc / (2 * cnt)) / tau


class TestAllanEstimator:
    @pytest.mark.parametrize("backend", ["python", "cython"])
    def test_brute_force_64(self, backend):
        rng = np.random.default_rng(11)
        g = TimeGrid(0.5, 64)
        x = rng.standard_normal(64) * 1e-12
        tab = overlapping_adev(PhaseSeries(g, x), [0.5, 1.0, 2.0, 4.0, 8.0, 15.0, 30.0],
                               backend=backend)
        for tau, s in zip(tab.taus, tab.sigma):
            m = int(round(tau / 0.5))
            assert s == pytest.approx(brute_force_oadev(x, m, tau), rel=1e-12)

    @given(arrays(float, st.integers(10, 80), elements=st.floats(-1e-9, 1e-9)))
    @settings(max_examples=40, deadline=None)
    def test_brute_force_property(self, x):
        g = TimeGrid(1.0, len(x))
        tab = overlapping_adev(PhaseSeries(g, x), octave_taus(1.0, len(x)))
        for tau, s in zip(tab.taus, tab.sigma):
            assert s == pytest.approx(brute_force_oadev(x, int(tau), tau), rel=1e-9, abs=1e-30)

    def test_m1_equals_nonoverlapping(self):
        x = np.random.default_rng(2).standard_normal(100)
        g = TimeGrid(1.0, 100)
        assert overlapping_adev(PhaseSeries(g, x), [1.0]).sigma[0] == pytest.approx(
            nonoverlapping_adev(x, 1, 1.0), rel=1e-12)

    def test_rad_input_converted(self):
        x = np.random.default_rng(3).standard_normal(50) * 1e-12
        g = TimeGrid(1.0, 50)
        a = overlapping_adev(PhaseSeries(g, x), [1.0, 2.0])
        b = overlapping_adev(PhaseSeries(g, x).to_rad(1e9), [1.0, 2.0])
        assert np.allclose(a.sigma, b.sigma, rtol=1e-12)

    def test_short_taus_dropped(self):
        g = TimeGrid(1.0, 20)
        tab = overlapping_adev(PhaseSeries(g, np.arange(20.0) ** 2), [1.0, 8.0, 9.0])
        assert list(tab.taus) == [1.0, 8.0]

    def test_tau_not_multiple(self):
        with pytest.raises(ValueError):
            overlapping_adev(PhaseSeries(TimeGrid(1.0, 20), np.zeros(20)), [1.5])

    def test_needs_phase_series(self):
        with pytest.raises(TypeError):
            overlapping_adev(np.zeros(20))

    def test_quadratic_phase(self):
        # constant drift D in y: x = D t^2 / 2, second difference D tau^2, sigma = D / sqrt 2
        g = TimeGrid(1.0, 100)
        D = 1e-15
        x = 0.5 * D * g.t**2
        tab = overlapping_adev(PhaseSeries(g, x), [1.0, 4.0, 16.0])
        assert np.allclose(tab.sigma, D * tab.taus / math.sqrt(2), rtol=1e-9)

    def test_octave_taus(self):
        assert list(octave_taus(0.5, 20)) == [0.5, 1.0, 2.0, 4.0]


class TestSlopes:
    @pytest.mark.parametrize("spec,taus,slope", [
        ({0: 1e-26}, [1, 2, 4, 8, 16, 32, 64], -1.0),
        ({-2: white_fm_level(1e-14)}, [1, 2, 4, 8, 16, 32, 64], -0.5),
        ({-3: flicker_fm_level(1e-15)}, [4, 8, 16, 32, 64, 128], 0.0),
        ({-4: random_walk_fm_level(1e-15, 100.0)}, [4, 8, 16, 32, 64, 128], 0.5),
    ])
    def test_taxonomy(self, spec, taus, slope):
        g = TimeGrid(1.0, 2**17)
        sig = np.mean([overlapping_adev(PhaseSeries(g, synthesize_colored_noise(spec, g, s)), taus).sigma
                       for s in range(4)], axis=0)
        assert loglog_slope(np.array(taus, float), sig) == pytest.approx(slope, abs=0.15)

    def test_labels(self):
        taus = np.array([1.0, 10.0, 100.0])
        assert identify_noise_types(taus, 1 / taus) == ["white_pm"] * 3
        assert identify_noise_types(taus, taus**0.5) == ["rw_fm"] * 3
        assert identify_noise_types(taus, np.ones(3)) == ["flicker_fm"] * 3


class TestPsd:
    def test_white_pm_psd_matches_adev(self):
        g = TimeGrid(0.01, 2**18)
        x = synthesize_colored_noise({0: 1e-27}, g, 5)
        s = PhaseSeries(g, x, carrier_frequency=1e9)
        est = psd_phase(s)
        level = float(np.mean(est.linear()))
        expect = 1e-27 * (2 * np.pi * 1e9) ** 2
        assert level == pytest.approx(expect, rel=0.1)
        for tau in (0.1, 1.0, 10.0):
            predicted = adev_from_white_pm_psd(level, 1e9, g.rate / 2, tau)
            measured = overlapping_adev(s, [tau]).sigma[0]
            assert measured == pytest.approx(predicted, rel=0.1)

    def test_flicker_fm_psd_slope(self):
        g = TimeGrid(1.0, 2**16)
        s = PhaseSeries(g, synthesize_colored_noise({-3: 1e-30}, g, 1))
        est = psd_phase(s, segment_length=4096)
        sel = (est.freqs > 0.01) & (est.freqs < 0.2)
        slope = np.polyfit(np.log10(est.freqs[sel]), est.psd_db[sel] / 10, 1)[0]
        assert slope == pytest.approx(-3.0, abs=0.3)

    def test_zero_series_sentinel(self):
        est = psd_phase(PhaseSeries(TimeGrid(1.0, 64), np.zeros(64)))
        assert np.all(est.psd_db == PSD_FLOOR_SENTINEL_DB)
        assert np.all(est.linear() == 0.0)

    def test_segment_length_validated(self):
        with pytest.raises(ValueError):
            psd_phase(PhaseSeries(TimeGrid(1.0, 64), np.zeros(64)), segment_length=100)

    def test_csv(self, tmp_path):
        est = psd_phase(PhaseSeries(TimeGrid(1.0, 64), np.random.default_rng(0).standard_normal(64)))
        est.to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().startswith("freq_hz,psd_dbrad2hz")


class TestOffset:
    def test_recovers_slope(self):
        g = TimeGrid(1.0, 5000)
        x = 3e-15 * g.t + synthesize_colored_noise({0: 1e-26}, g, 2)
        r = fractional_offset(PhaseSeries(g, x))
        assert r.offset == pytest.approx(3e-15, abs=3 * r.uncertainty)
        assert r.uncertainty >= r.ls_uncertainty

    def test_uncertainty_honest_for_random_walk(self):
        # repeated random-walk FM records: scatter of the estimate matches the reported bar
        g = TimeGrid(1.0, 3000)
        est, bars = [], []
        for s in range(30):
            r = fractional_offset(PhaseSeries(g, synthesize_colored_noise({-4: 1e-28}, g, s)))
            est.append(r.offset)
            bars.append(r.uncertainty)
        assert np.std(est) < 3 * np.mean(bars)

    def test_needs_1000s(self):
        with pytest.raises(ValueError):
            fractional_offset(PhaseSeries(TimeGrid(1.0, 999), np.zeros(999)))


class TestTable:
    def test_merge(self):
        a = AllanTable([1, 2, 4, 8], [1, 2, 3, 4], [0] * 4, [9] * 4, ["white_pm"] * 4)
        b = AllanTable([4, 8, 16], [5, 6, 7], [0] * 3, [9] * 3, ["rw_fm"] * 3)
        m = merge_tables(a, b, 4)
        assert list(m.taus) == [1, 2, 4, 8, 16]
        assert list(m.sigma) == [1, 2, 3, 6, 7]
        assert m.noise_types[-1] == "rw_fm"

    def test_at_and_interp(self):
        t = AllanTable([1, 10, 100], [1e-14, 1e-15, 1e-16], [0] * 3, [5] * 3)
        assert t.at(10) == 1e-15
        assert t.interp(math.sqrt(10)) == pytest.approx(math.sqrt(1e-14 * 1e-15))
        with pytest.raises(KeyError):
            t.at(3)

    def test_csv_roundtrip(self, tmp_path):
        t = AllanTable([1.0, 2.0], [1e-14, 5e-15], [1e-15, 1e-15], [10, 8])
        t.to_csv(tmp_path / "a.csv")
        u = AllanTable.from_csv(tmp_path / "a.csv")
        assert np.array_equal(t.sigma, u.sigma) and np.array_equal(t.n, u.n)

    def test_monotone_taus(self):
        with pytest.raises(ValueError):
            AllanTable([2, 1], [1, 1], [0, 0], [1, 1])

    @given(st.floats(1e-18, 1e-12), st.floats(2, 1e5))
    def test_ci_shrinks_with_dof(self, sigma, dof):
        assert confidence_halfwidth(sigma, 2 * dof) < confidence_halfwidth(sigma, dof)
