from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forewarn.errors import MissingSignalError
from forewarn.risk import (
    RiskConfig,
    RiskLevel,
    assess_flood_risk,
    rolling_accumulations,
)
from forewarn.serving import ForecastSeries

T0 = datetime(2026, 2, 3, 6, tzinfo=timezone.utc)


def make_series(tcwv, tp, label="TestTown"):
    leads = tuple(6 * k for k in range(len(tcwv)))
    return ForecastSeries(
        label=label,
        lat=-26.25,
        lon=28.0,
        forecast_run_time=T0,
        lead_hours=leads,
        values={"tcwv": tuple(tcwv), "tp": tuple(tp)},
    )


def flat(value, n):
    return [value] * n


class TestRollingAccumulations:
    def test_window_sums(self):
        leads = (0, 6, 12, 18, 24, 30)
        tp = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
        got = rolling_accumulations(leads, tp, 24)
        assert got == [(18, 10.0), (24, 14.0), (30, 18.0)]

    def test_short_series_has_no_windows(self):
        assert rolling_accumulations((0, 6, 12), (1.0, 1.0, 1.0), 24) == []

    def test_against_independent_oracle(self):
        # Oracle: float64 numpy convolution over 1000 random series.
        rng = np.random.default_rng(17)
        for _ in range(1000):
            n = int(rng.integers(4, 61))
            tp = rng.uniform(0, 40, n)
            leads = tuple(6 * k for k in range(n))
            got = rolling_accumulations(leads, tuple(float(v) for v in tp), 24)
            kernel = np.ones(4, dtype=np.float64)
            want = np.convolve(tp.astype(np.float64), kernel, mode="valid")
            assert len(got) == len(want)
            for (end, total), w in zip(got, want):
                assert total == pytest.approx(float(w), rel=0, abs=1e-9)
            assert [end for end, _ in got] == [leads[k + 3] for k in range(n - 3)]


class TestLevels:
    def test_all_quiet_is_normal(self):
        a = assess_flood_risk(make_series(flat(30.0, 12), flat(1.0, 12)))
        assert a.level is RiskLevel.NORMAL
        assert a.signals == ()
        assert a.lead_window == (0, 0)

    def test_moisture_alone_is_elevated(self):
        tcwv = flat(30.0, 12)
        tcwv[4] = 55.0
        a = assess_flood_risk(make_series(tcwv, flat(1.0, 12)))
        assert a.level is RiskLevel.ELEVATED
        assert [s.name for s in a.signals] == ["tcwv-peak"]
        assert a.signals[0].value == 55.0
        assert a.signals[0].window == (24, 24)

    def test_rain_alone_is_elevated(self):
        tp = flat(1.0, 12)
        tp[3:7] = [30.0, 30.0, 30.0, 30.0]  # 120 mm in 24 h
        a = assess_flood_risk(make_series(flat(30.0, 12), tp))
        assert a.level is RiskLevel.ELEVATED
        assert [s.name for s in a.signals] == ["tp-24h"]
        assert a.signals[0].value == pytest.approx(120.0)

    def test_both_is_severe(self):
        tcwv = flat(58.0, 12)
        tp = flat(30.0, 12)
        a = assess_flood_risk(make_series(tcwv, tp))
        assert a.level is RiskLevel.SEVERE
        assert {s.name for s in a.signals} == {"tcwv-peak", "tp-24h"}

    def test_thresholds_are_strict_inequalities(self):
        a = assess_flood_risk(make_series(flat(50.0, 8), flat(25.0, 8)))
        assert a.level is RiskLevel.NORMAL  # exactly at threshold is not a breach
        b = assess_flood_risk(make_series(flat(50.0 + 1e-9, 8), flat(25.0, 8)))
        assert b.level is RiskLevel.ELEVATED

    def test_custom_config(self):
        cfg = RiskConfig(tcwv_threshold_mm=70.0, tp_24h_threshold_mm=300.0)
        a = assess_flood_risk(make_series(flat(60.0, 8), flat(30.0, 8)), cfg)
        assert a.level is RiskLevel.NORMAL

    def test_missing_signal_raises(self):
        s = make_series(flat(30.0, 8), flat(1.0, 8))
        broken = ForecastSeries(
            label=s.label,
            lat=s.lat,
            lon=s.lon,
            forecast_run_time=s.forecast_run_time,
            lead_hours=s.lead_hours,
            values={"tcwv": s.values["tcwv"]},
        )
        with pytest.raises(MissingSignalError) as ei:
            assess_flood_risk(broken)
        assert ei.value.variable == "tp"

    def test_window_spans_all_signals(self):
        tcwv = flat(30.0, 12)
        tcwv[1] = 60.0
        tp = flat(1.0, 12)
        tp[8:12] = [40.0, 40.0, 40.0, 40.0]
        a = assess_flood_risk(make_series(tcwv, tp))
        assert a.level is RiskLevel.SEVERE
        assert a.lead_window[0] == 6
        assert a.lead_window[1] == 66

    def test_short_series_cannot_breach_accumulation(self):
        # Fewer than four steps: no full 24 h window exists.
        a = assess_flood_risk(make_series(flat(30.0, 3), flat(200.0, 3)))
        assert a.level is RiskLevel.NORMAL


class TestMonotonicity:
    @given(
        seed=st.integers(0, 10_000),
        tcwv_thr=st.floats(10.0, 90.0),
        tp_thr=st.floats(20.0, 400.0),
    )
    @settings(max_examples=150, deadline=None)
    def test_raising_thresholds_never_raises_level(self, seed, tcwv_thr, tp_thr):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 20))
        tcwv = [float(v) for v in rng.uniform(0, 100, n)]
        tp = [float(v) for v in rng.uniform(0, 60, n)]
        series = make_series(tcwv, tp)
        base = assess_flood_risk(series, RiskConfig(tcwv_threshold_mm=tcwv_thr, tp_24h_threshold_mm=tp_thr))
        looser = assess_flood_risk(
            series,
            RiskConfig(tcwv_threshold_mm=tcwv_thr * 1.5, tp_24h_threshold_mm=tp_thr * 1.5),
        )
        assert looser.level.rank <= base.level.rank

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=150, deadline=None)
    def test_adding_rain_never_lowers_level(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 20))
        tcwv = [float(v) for v in rng.uniform(0, 80, n)]
        tp = [float(v) for v in rng.uniform(0, 50, n)]
        series = assess_flood_risk(make_series(tcwv, tp))
        wetter = assess_flood_risk(make_series(tcwv, [v + 10.0 for v in tp]))
        assert wetter.level.rank >= series.level.rank

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_level_is_function_of_breach_kinds(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 30))
        tcwv = [float(v) for v in rng.uniform(0, 100, n)]
        tp = [float(v) for v in rng.uniform(0, 60, n)]
        a = assess_flood_risk(make_series(tcwv, tp))
        kinds = {s.name for s in a.signals}
        expected = {
            frozenset(): RiskLevel.NORMAL,
            frozenset({"tcwv-peak"}): RiskLevel.ELEVATED,
            frozenset({"tp-24h"}): RiskLevel.ELEVATED,
            frozenset({"tcwv-peak", "tp-24h"}): RiskLevel.SEVERE,
        }[frozenset(kinds)]
        assert a.level is expected


class TestConfigValidation:
    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            RiskConfig(tcwv_threshold_mm=0.0)
        with pytest.raises(ValueError):
            RiskConfig(tp_24h_threshold_mm=-5.0)

    def test_window_must_align_to_step(self):
        with pytest.raises(ValueError):
            RiskConfig(accumulation_window_hours=20)
