import numpy as np
import pytest

from xbarsim import costmodel as cm
from xbarsim import mapping as mp
from xbarsim import network as nn


@pytest.fixture(scope="module")
def plan():
    return mp.compile_network(nn.canonical_network(),
                              mp.MappingScheme.WEIGHT_STATIONARY)


def row(report, name):
    return next(r for r in report.rows if r["name"] == name)


def comp(table, name):
    return next(c for c in table if c.name == name)


class TestComponentTable:
    def test_tdm_adc_entry(self):
        adc = comp(cm.component_table(cm.Variant.TDM), "adc")
        assert adc.count == 7
        assert adc.area_mm2 == pytest.approx(4.62, rel=0.01)
        assert adc.power_mw == pytest.approx(70.0, rel=0.01)

    def test_parallel_adc_entry(self):
        adc = comp(cm.component_table(cm.Variant.PARALLELIZED), "adc")
        assert adc.count == 448
        assert adc.area_mm2 == pytest.approx(296.0, rel=0.01)
        assert adc.power_mw == pytest.approx(4480.0, rel=0.01)

    def test_dac_identical_across_variants(self):
        for variant in cm.Variant:
            dac = comp(cm.component_table(variant), "dac")
            assert dac.count == 448
            assert dac.area_mm2 == pytest.approx(25.8, rel=0.01)

    def test_negative_figures_rejected(self):
        with pytest.raises(ValueError):
            cm.ComponentSpec("x", "", -1, 0.0, 0.0, 0.0)


class TestPassLatency:
    def test_calibrated_values_exact(self):
        assert cm.crossbar_pass_latency(cm.Scenario.ALL_ON) == \
            pytest.approx(2.03e-3, rel=1e-12)
        assert cm.crossbar_pass_latency(cm.Scenario.MIDPOINT) == \
            pytest.approx(6.07e-3, rel=1e-12)

    def test_zero_line_resistance_hits_read_floor(self):
        assert cm.crossbar_pass_latency(cm.Scenario.ALL_ON, r_line=0.0) == 6e-3
        assert cm.crossbar_pass_latency(cm.Scenario.MIDPOINT, r_line=0.0) == 6e-3

    def test_midpoint_slower_than_all_on(self):
        assert cm.crossbar_pass_latency(cm.Scenario.MIDPOINT) > \
            cm.crossbar_pass_latency(cm.Scenario.ALL_ON)


class TestSchedule:
    def test_canonical_schedule(self, plan):
        sched = cm.schedule_from_plan(plan)
        assert sched.n_tiles == 7
        assert sched.stages == 6          # conv group + 4 fc1 sections + fc2
        assert sched.device_count == 7 * 64 * 64
        assert sched.conv_passes == {"conv1": 34, "conv2": 35}

    def test_invocation_counts(self, plan):
        sched = cm.schedule_from_plan(plan)
        assert sched.invocations("dac", cm.Variant.TDM) == 6 * 7 * 64
        assert sched.invocations("dac", cm.Variant.PARALLELIZED) == 42
        assert sched.invocations("adc", cm.Variant.TDM) == 2688
        assert sched.invocations("adc", cm.Variant.PARALLELIZED) == 6
        assert sched.invocations("subtractor", cm.Variant.TDM) == 384
        assert sched.invocations("s_h", cm.Variant.TDM) == 6
        assert sched.invocations("crossbar", cm.Variant.TDM) == 28_672
        assert sched.invocations("crossbar", cm.Variant.PARALLELIZED) == 64

    def test_tdm_adc_is_64x_parallel_tile_drives(self, plan):
        sched = cm.schedule_from_plan(plan)
        drives = sched.stages * sched.n_tiles
        assert sched.invocations("adc", cm.Variant.TDM) == 64 * drives


class TestTotals:
    def test_area_and_power_within_one_percent(self, plan):
        tdm = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON)
        assert tdm.total_area_mm2 == pytest.approx(31.3, rel=0.01)
        assert tdm.total_power_mw == pytest.approx(2790.0, rel=0.01)
        par = cm.total_cost(plan, cm.Variant.PARALLELIZED, cm.Scenario.ALL_ON)
        assert par.total_area_mm2 == pytest.approx(322.0, rel=0.01)
        assert par.total_power_mw == pytest.approx(7210.0, rel=0.01)

    def test_midpoint_latency_and_energy_within_ten_percent(self, plan):
        tdm = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.MIDPOINT)
        assert tdm.total_latency_us == pytest.approx(445.0, rel=0.10)
        assert tdm.total_energy_uj == pytest.approx(1240.0, rel=0.10)
        par = cm.total_cost(plan, cm.Variant.PARALLELIZED, cm.Scenario.MIDPOINT)
        assert par.total_latency_us == pytest.approx(1.13, rel=0.10)
        assert par.total_energy_uj == pytest.approx(8.12, rel=0.10)

    def test_tdm_over_100x_slower_than_parallel(self, plan):
        tdm = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.MIDPOINT)
        par = cm.total_cost(plan, cm.Variant.PARALLELIZED, cm.Scenario.MIDPOINT)
        assert tdm.total_latency_us / par.total_latency_us > 100

    def test_area_power_schedule_independent(self, plan):
        # a second plan with different pass counts must not move area/power
        spec = nn.build_network_architecture(64, 64, 1, 2, [20], [8])
        other = mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY)
        assert other.n_tiles == plan.n_tiles
        a = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON)
        b = cm.total_cost(other, cm.Variant.TDM, cm.Scenario.ALL_ON)
        assert a.total_area_mm2 == b.total_area_mm2
        assert a.total_power_mw == b.total_power_mw
        assert cm.schedule_from_plan(other).conv_passes != \
            cm.schedule_from_plan(plan).conv_passes

    def test_component_energy_consistency(self, plan):
        report = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.MIDPOINT)
        for r in report.rows:
            want = r["power_mw"] * r["latency_us"] / 1000.0
            assert r["busy_energy_uj"] == pytest.approx(want, rel=1e-9, abs=1e-30)
        assert report.total_energy_uj == pytest.approx(
            report.total_power_mw * report.total_latency_us / 1000.0, rel=1e-12)

    def test_zero_tile_plan_keeps_only_fixed_components(self):
        spec = nn.NetworkSpec(input_length=8, blocks=(), fc=(), alpha=(), beta=())
        plan = mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY)
        report = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON)
        per_tile = {"dac", "adc", "s_h", "subtractor", "crossbar"}
        for r in report.rows:
            if r["name"] in per_tile:
                assert r["area_mm2"] == 0.0 and r["power_mw"] == 0.0
                assert r["latency_us"] == 0.0
        fixed = [r for r in report.rows if r["name"] not in per_tile]
        assert report.total_area_mm2 == pytest.approx(
            sum(r["area_mm2"] for r in fixed))
        assert report.total_power_mw == pytest.approx(
            sum(r["power_mw"] for r in fixed))
        assert report.total_latency_us == pytest.approx(
            sum(r["latency_us"] for r in fixed))

    def test_average_power_below_worst_case(self, plan):
        report = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.MIDPOINT)
        assert 0 < report.average_power_mw < report.total_power_mw
        want = report.component_energy_uj * 1000.0 / report.total_latency_us
        assert report.average_power_mw == pytest.approx(want, rel=1e-12)

    def test_report_serialization(self, plan):
        report = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON)
        doc = report.to_dict()
        assert doc["totals"]["area_mm2"] == report.total_area_mm2
        assert doc["schedule"]["stages"] == 6
        text = report.to_text()
        assert "crossbar" in text and "Total" in text


class TestScaleTechnology:
    def test_identity(self):
        table = cm.component_table(cm.Variant.TDM)
        scaled = cm.scale_technology(table, {"area": 1.0, "power": 1.0,
                                             "latency": 1.0})
        assert scaled == table

    def test_single_metric_isolation(self):
        table = cm.component_table(cm.Variant.TDM)
        scaled = cm.scale_technology(table, {"area": 0.5})
        for before, after in zip(table, scaled):
            assert after.unit_area_mm2 == pytest.approx(before.unit_area_mm2 * 0.5)
            assert after.unit_power_mw == before.unit_power_mw
            assert after.unit_latency_us == before.unit_latency_us

    def test_scale_then_total_equals_total_then_scale(self, plan):
        table = cm.component_table(cm.Variant.TDM, cm.Scenario.ALL_ON)
        scaled = cm.scale_technology(table, {"area": 0.25})
        a = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON, table=scaled)
        b = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON, table=table)
        assert a.total_area_mm2 == pytest.approx(b.total_area_mm2 * 0.25, rel=1e-12)

    def test_rejects_bad_factor(self):
        table = cm.component_table(cm.Variant.TDM)
        with pytest.raises(ValueError):
            cm.scale_technology(table, {"area": 0.0})
        with pytest.raises(ValueError):
            cm.scale_technology(table, {"speed": 2.0})
