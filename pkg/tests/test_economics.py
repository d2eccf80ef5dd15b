from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forewarn.economics import (
    CapacityModel,
    CostModel,
    cents,
    compute_capacity,
    compute_costs,
    load_preset,
)


@pytest.fixture(scope="module")
def cost_model():
    return CostModel.from_dict(load_preset("paper_costs"))


@pytest.fixture(scope="module")
def capacity_model():
    return CapacityModel.from_dict(load_preset("paper_capacity"))


class TestCents:
    def test_exact_for_hourly_rates(self):
        assert cents(1.49) == 149
        assert cents(142.30) == 14230
        assert cents(0.0) == 0
        assert cents(240000000) == 24_000_000_000


class TestReferenceCosts:
    def test_gpu_monthly(self, cost_model):
        report = compute_costs(cost_model)
        assert report.gpu_monthly_cents == 108_770  # 1.49 x 730

    def test_component_ranges(self, cost_model):
        report = compute_costs(cost_model)
        assert report.cpu_monthly_cents == (20_000, 50_000)
        assert report.db_monthly_cents == (14_230, 14_230)

    def test_monthly_totals(self, cost_model):
        report = compute_costs(cost_model)
        assert report.total_monthly_cents == (143_000, 173_000)

    def test_annual_totals(self, cost_model):
        report = compute_costs(cost_model)
        assert report.total_annual_cents == (1_716_000, 2_076_000)

    def test_five_year_totals(self, cost_model):
        report = compute_costs(cost_model)
        assert report.total_horizon_cents == (8_580_000, 10_380_000)

    def test_radar_totals(self, cost_model):
        report = compute_costs(cost_model)
        assert report.radar_horizon_cents == (21_000_000_000, 39_000_000_000)

    def test_cost_ratio_truncates_toward_zero(self, cost_model):
        report = compute_costs(cost_model)
        assert report.cost_ratio == (2023, 4545)

    def test_as_dict_round_numbers(self, cost_model):
        d = compute_costs(cost_model).as_dict()
        assert d["total_monthly_usd"] == [1430.0, 1730.0]
        assert d["total_annual_usd"] == [17160.0, 20760.0]
        assert d["total_horizon_usd"] == [85800.0, 103800.0]

    def test_zero_radar_ratio_is_zero(self, cost_model):
        from dataclasses import replace

        model = replace(cost_model, radar_capital_cents=(0, 0), radar_maintenance_total_cents=0)
        assert compute_costs(model).cost_ratio == (0, 0)

    def test_annual_is_twelve_monthlies(self, cost_model):
        report = compute_costs(cost_model)
        assert report.total_annual_cents == tuple(12 * v for v in report.total_monthly_cents)
        assert report.total_horizon_cents == tuple(
            12 * report.horizon_years * v for v in report.total_monthly_cents
        )

    def test_range_validation(self):
        with pytest.raises(ValueError):
            CostModel(
                gpu_hourly_cents=100,
                gpu_hours_per_month=730,
                cpu_instances=(10, 5),
                cpu_monthly_each_cents=(4000, 5000),
                db_monthly_cents=(0, 0),
                radar_capital_cents=(0, 0),
                radar_maintenance_total_cents=0,
            )

    @given(
        gpu=st.integers(0, 10_000),
        hours=st.integers(0, 1000),
        cpu_n=st.tuples(st.integers(0, 50), st.integers(0, 50)).map(sorted).map(tuple),
        years=st.integers(1, 30),
    )
    @settings(max_examples=100, deadline=None)
    def test_low_never_exceeds_high(self, gpu, hours, cpu_n, years):
        model = CostModel(
            gpu_hourly_cents=gpu,
            gpu_hours_per_month=hours,
            cpu_instances=cpu_n,
            cpu_monthly_each_cents=(4000, 5000),
            db_monthly_cents=(10_000, 20_000),
            radar_capital_cents=(6_000_000_000, 24_000_000_000),
            radar_maintenance_total_cents=15_000_000_000,
            horizon_years=years,
        )
        report = compute_costs(model)
        for lo, hi in (
            report.cpu_monthly_cents,
            report.total_monthly_cents,
            report.total_annual_cents,
            report.total_horizon_cents,
            report.cost_ratio,
        ):
            assert lo <= hi


class TestReferenceCapacity:
    def test_funnel(self, capacity_model):
        report = compute_capacity(capacity_model)
        assert report.addressable_users == 28_000_000
        assert report.active_users == 8_400_000
        assert report.peak_requests_per_minute == 168_000.0
        assert report.peak_rps == pytest.approx(2800.0)

    def test_instance_counts(self, capacity_model):
        report = compute_capacity(capacity_model)
        assert report.instances_raw == (3, 6)
        assert report.instances_with_headroom == (5, 10)

    def test_tiny_population_keeps_float_rates(self):
        model = CapacityModel(
            population=1,
            addressable_fraction=1.0,
            engagement_fraction=1.0,
            peak_concurrent_fraction=1.0,
            per_instance_rps=(500.0, 1000.0),
        )
        report = compute_capacity(model)
        assert report.peak_requests_per_minute == 1.0
        assert report.peak_rps == pytest.approx(1 / 60)
        assert report.instances_raw == (1, 1)

    def test_zero_population(self):
        model = CapacityModel(
            population=0,
            addressable_fraction=0.5,
            engagement_fraction=0.5,
            peak_concurrent_fraction=0.5,
            per_instance_rps=(500.0, 1000.0),
        )
        report = compute_capacity(model)
        assert report.instances_raw == (0, 0)
        assert report.instances_with_headroom == (0, 0)

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            CapacityModel(
                population=10,
                addressable_fraction=1.5,
                engagement_fraction=0.5,
                peak_concurrent_fraction=0.5,
                per_instance_rps=(1.0, 2.0),
            )

    @given(
        pop=st.integers(0, 100_000_000),
        fa=st.floats(0, 1),
        fe=st.floats(0, 1),
        fp=st.floats(0, 1),
    )
    @settings(max_examples=150, deadline=None)
    def test_funnel_monotone_and_headroom_dominates(self, pop, fa, fe, fp):
        model = CapacityModel(
            population=pop,
            addressable_fraction=fa,
            engagement_fraction=fe,
            peak_concurrent_fraction=fp,
            per_instance_rps=(500.0, 1000.0),
        )
        report = compute_capacity(model)
        assert 0 <= report.active_users <= max(report.addressable_users, 1)
        assert report.instances_raw[0] <= report.instances_raw[1]
        assert report.instances_with_headroom[0] >= report.instances_raw[0]
        assert report.instances_with_headroom[1] >= report.instances_raw[1]


class TestPresets:
    def test_load_by_name(self):
        assert load_preset("paper_costs")["gpu_hourly_usd"] == 1.49

    def test_load_by_path(self, tmp_path):
        p = tmp_path / "custom.json"
        p.write_text('{"population": 5}')
        assert load_preset(str(p)) == {"population": 5}

    def test_unknown_preset(self):
        with pytest.raises(FileNotFoundError):
            load_preset("does_not_exist")
