"""Component-level power/area/latency/energy accounting.

Component unit figures target a 22 nm process: DACs at 1.25 GHz and 6 mW,
ADCs at 10 MHz and 10 mW, devices of 100x100 nm^2 with a 6 ns read
latency floor, and CACTI-derived buffer figures.  Two readout variants
trade power for latency: TDM shares one ADC per tile across 64 columns
through sample-and-hold stages; the parallelized variant gives every
column its own ADC.

Latency accounting follows an explicit, exported schedule.  A network
inference is a sequence of readout stages (one for the parallel conv
group, one per stacked FC section, one for the final FC); per stage, all
tiles are driven, and the TDM variant serializes 64 column slots per tile
drive.  Crossbar settle events are counted per device read under TDM and
per row under the parallelized variant.  Every invocation count appears
in the report so the arithmetic is auditable.

Worst-case power assumes all components simultaneously active, so the
grand-total energy is total power times end-to-end latency; each row also
carries its own busy energy (power x busy time).

Two resistance scenarios bound the crossbar: all active devices at
R_on ~ 10 kOhm (uniform, maximum power) or at the window midpoint
~55 kOhm (zero-centered weights).  The per-pass settle time is a lumped
RC estimate with named constants fitted per scenario.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .mapping import MappingPlan, TILE_COLS, TILE_ROWS

__all__ = [
    "Variant",
    "Scenario",
    "ComponentSpec",
    "RCCalibration",
    "ExecutionSchedule",
    "CostReport",
    "component_table",
    "crossbar_pass_latency",
    "schedule_from_plan",
    "total_cost",
    "scale_technology",
]


class Variant(enum.Enum):
    TDM = "tdm"
    PARALLELIZED = "parallel"


class Scenario(enum.Enum):
    ALL_ON = "on"            # every active device at R_on
    MIDPOINT = "mid"         # active devices average (R_on + R_off) / 2


# Scenario path resistances, ohms.
_SCENARIO_R = {Scenario.ALL_ON: 10e3, Scenario.MIDPOINT: 55e3}


@dataclass(frozen=True)
class ComponentSpec:
    """One accounting row: per-unit figures plus an instance count.

    invocation labels the activation model the schedule applies to the
    component: "per-slot" (per TDM column slot of every tile drive),
    "per-drive" (per tile drive), "per-stage" (per readout stage),
    "per-read" (per device/row settle event) or "per-inference".
    """

    name: str
    spec_label: str
    count: int
    unit_area_mm2: float
    unit_power_mw: float
    unit_latency_us: float
    invocation: str = "per-inference"

    def __post_init__(self):
        if min(self.count, self.unit_area_mm2, self.unit_power_mw,
               self.unit_latency_us) < 0:
            raise ValueError(f"{self.name}: negative cost figures")

    @property
    def area_mm2(self) -> float:
        return self.count * self.unit_area_mm2

    @property
    def power_mw(self) -> float:
        return self.count * self.unit_power_mw


# Per-unit constants.  DAC/ADC come from the cited converter datapoints;
# the remaining units are the published aggregate figures divided by the
# canonical 7-tile instance counts.
_DAC_UNIT = (0.0576, 6.0, 8.00e-4)
_ADC_UNIT = (0.66, 10.0, 1.00e-1)
_RELU_UNIT = (9.60e-3 / 2, 3.28e-2 / 2, 9.80e-2)
_POOL_UNIT = (3.83e-4, 1.59, 8.49e-5)
_ADDER_UNIT = (5.34e-3 / 10, 1.74e-2 / 10, 3.06e-4)
_SUB_UNIT = (2.46e-4 / 7, 2.87e-1 / 7, 3.34e-4)
_SH_UNIT = (8.98e-6 / 448, 3.81e-3 / 448, 8.33e-4)
_EDRAM_UNIT = (4.72e-3, 1.81e1, 1.15e-4)
_BUS_UNIT = (4.50e-3 / 192, 3.5 / 192, 9.02e-5)
_IR_UNIT = (8.10e-1, 6.74e-1, 8.21e-5)
_OR_UNIT = (8.70e-4, 4.18e-1, 8.21e-5)

# Crossbar: device area 100x100 nm^2; tile power per scenario (and the
# small TDM/parallelized asymmetry of the published all-on figure).
_XBAR_UNIT_AREA = TILE_ROWS * TILE_COLS * (100e-9 * 100e-9) * 1e6  # mm^2
_XBAR_POWER = {
    (Scenario.ALL_ON, Variant.TDM): 8.67 / 7,
    (Scenario.ALL_ON, Variant.PARALLELIZED): 8.69 / 7,
    (Scenario.MIDPOINT, Variant.TDM): 4.35 / 7,
    (Scenario.MIDPOINT, Variant.PARALLELIZED): 4.35 / 7,
}


@dataclass(frozen=True)
class RCCalibration:
    """Lumped-RC settle model for one crossbar pass.

    settle time = k(scenario) * R(scenario) * C_line, with C_line the
    per-segment line capacitance times the 64 segments of a wire.  The two
    k constants are fitted so the default configuration reproduces the
    published per-pass latencies (2.03e-3 us all-on, 6.07e-3 us midpoint).
    With no line resistance there is no wire delay and the fixed 6 ns
    device read latency remains.
    """

    read_latency_floor_us: float = 6e-3
    line_capacitance_per_segment_f: float = 5e-14
    segments: int = 64
    settle_k_all_on: float = 2.03e-9 / (10e3 * 64 * 5e-14)
    settle_k_midpoint: float = 6.07e-9 / (55e3 * 64 * 5e-14)

    def settle_k(self, scenario: Scenario) -> float:
        return (self.settle_k_all_on if scenario is Scenario.ALL_ON
                else self.settle_k_midpoint)


def crossbar_pass_latency(scenario: Scenario, r_line: float = 2.0,
                          calib: RCCalibration | None = None) -> float:
    """Per-pass crossbar latency in microseconds."""
    calib = calib or RCCalibration()
    if r_line < 0:
        raise ValueError("r_line must be >= 0")
    if r_line == 0:
        return calib.read_latency_floor_us
    c_total = calib.segments * calib.line_capacitance_per_segment_f
    tau_s = calib.settle_k(scenario) * _SCENARIO_R[scenario] * c_total
    return tau_s * 1e6


@dataclass(frozen=True)
class ExecutionSchedule:
    """Invocation counts per inference, derived from a mapping plan.

    stages counts sequential readout events: 1 for the conv group (its
    tiles run in parallel) plus each FC layer's stacked-section depth.
    conv_passes records the per-layer sliding-window pass counts for
    reference; they do not enter the latency arithmetic, which follows the
    stage/slot conventions described in the module docstring.
    """

    n_tiles: int
    stages: int
    device_count: int
    tdm_slots: int = TILE_COLS
    rows: int = TILE_ROWS
    conv_passes: dict[str, int] = field(default_factory=dict)

    def invocations(self, component: str, variant: Variant) -> int:
        tdm = variant is Variant.TDM
        drives = self.stages * self.n_tiles
        table = {
            "dac": drives * self.tdm_slots if tdm else drives,
            "adc": drives * self.tdm_slots if tdm else self.stages,
            "s_h": self.stages,
            "subtractor": self.stages * self.tdm_slots if tdm else self.stages,
            "relu": 1,
            "avgpool": 1,
            "adder": 2,
            "edram_buffer": 2,
            "edram_bus": 1,
            "input_register": 2,
            "output_register": 2,
            "crossbar": self.device_count if tdm
                        else (self.rows if self.n_tiles else 0),
        }
        if component not in table:
            raise KeyError(f"no invocation model for component {component!r}")
        return table[component]

    def to_dict(self) -> dict:
        return {
            "n_tiles": self.n_tiles,
            "stages": self.stages,
            "device_count": self.device_count,
            "tdm_slots": self.tdm_slots,
            "conv_passes": dict(self.conv_passes),
        }


def schedule_from_plan(plan: MappingPlan) -> ExecutionSchedule:
    conv_names = [b.name for block in plan.spec.blocks for b in block.branches]
    stages = 1 if conv_names else 0
    stages += sum(plan.layers[fc.name].budget.pass_count for fc in plan.spec.fc)
    return ExecutionSchedule(
        n_tiles=plan.n_tiles,
        stages=stages,
        device_count=plan.n_tiles * TILE_ROWS * TILE_COLS,
        conv_passes={n: plan.layers[n].budget.pass_count for n in conv_names},
    )


def component_table(variant: Variant, scenario: Scenario = Scenario.ALL_ON,
                    n_tiles: int = 7,
                    calib: RCCalibration | None = None) -> list[ComponentSpec]:
    """The accounting rows for an n-tile accelerator instance."""
    per_col_adc = variant is Variant.PARALLELIZED
    tdm = variant is Variant.TDM
    return [
        ComponentSpec("dac", "6 bits", n_tiles * 64, *_DAC_UNIT,
                      invocation="per-slot" if tdm else "per-drive"),
        ComponentSpec("adc", "6 bits, 10MHz",
                      n_tiles * 64 if per_col_adc else n_tiles, *_ADC_UNIT,
                      invocation="per-slot" if tdm else "per-stage"),
        ComponentSpec("relu", "", 2, *_RELU_UNIT),
        ComponentSpec("avgpool", "", 1, *_POOL_UNIT),
        ComponentSpec("adder", "", 10, *_ADDER_UNIT),
        ComponentSpec("subtractor", "",
                      n_tiles * 32 if per_col_adc else n_tiles, *_SUB_UNIT,
                      invocation="per-slot" if tdm else "per-stage"),
        ComponentSpec("s_h", "", n_tiles * 64, *_SH_UNIT,
                      invocation="per-stage"),
        ComponentSpec("edram_buffer", "2KB, 128b bus", 1, *_EDRAM_UNIT),
        ComponentSpec("edram_bus", "", 192, *_BUS_UNIT),
        ComponentSpec("input_register", "1KB", 1, *_IR_UNIT),
        ComponentSpec("output_register", "512B", 1, *_OR_UNIT),
        ComponentSpec("crossbar", "64x64",
                      n_tiles, _XBAR_UNIT_AREA,
                      _XBAR_POWER[(scenario, variant)],
                      crossbar_pass_latency(scenario, calib=calib),
                      invocation="per-read"),
    ]


@dataclass
class CostReport:
    """Per-component and total cost for one (variant, scenario) pair."""

    variant: Variant
    scenario: Scenario
    rows: list[dict]
    schedule: ExecutionSchedule
    total_area_mm2: float
    total_power_mw: float
    total_latency_us: float
    total_energy_uj: float          # all-active convention: power x latency
    component_energy_uj: float      # sum of per-row busy energies

    @property
    def average_power_mw(self) -> float:
        """Duty-cycled power: each component weighted by its busy fraction."""
        if self.total_latency_us == 0:
            return 0.0
        return self.component_energy_uj * 1000.0 / self.total_latency_us

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "scenario": self.scenario.value,
            "schedule": self.schedule.to_dict(),
            "components": self.rows,
            "totals": {
                "area_mm2": self.total_area_mm2,
                "power_mw": self.total_power_mw,
                "average_power_mw": self.average_power_mw,
                "latency_us": self.total_latency_us,
                "energy_uj": self.total_energy_uj,
                "component_energy_uj": self.component_energy_uj,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        header = (f"{'Component':<16} {'Spec':<14} {'Count':>6} "
                  f"{'Area(mm2)':>11} {'Power(mW)':>11} {'Lat(us)':>10} "
                  f"{'TotLat(us)':>11} {'Energy(uJ)':>11}")
        lines = [f"variant={self.variant.value} scenario={self.scenario.value}",
                 header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r['name']:<16} {r['spec']:<14} {r['count']:>6d} "
                f"{r['area_mm2']:>11.3e} {r['power_mw']:>11.3e} "
                f"{r['unit_latency_us']:>10.3e} {r['latency_us']:>11.3e} "
                f"{r['busy_energy_uj']:>11.3e}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'Total':<16} {'':<14} {'':>6} "
            f"{self.total_area_mm2:>11.3e} {self.total_power_mw:>11.3e} "
            f"{'':>10} {self.total_latency_us:>11.3e} {self.total_energy_uj:>11.3e}"
        )
        return "\n".join(lines) + "\n"


def total_cost(plan: MappingPlan, variant: Variant, scenario: Scenario,
               calib: RCCalibration | None = None,
               table: list[ComponentSpec] | None = None) -> CostReport:
    """Roll a plan's schedule through the component table.

    Area and power totals are schedule-independent sums; latency sums the
    per-component busy times along the documented stage/slot arithmetic;
    grand-total energy multiplies worst-case power by end-to-end latency.
    """
    schedule = schedule_from_plan(plan)
    if table is None:
        table = component_table(variant, scenario, n_tiles=plan.n_tiles,
                                calib=calib)
    rows = []
    total_area = total_power = total_latency = component_energy = 0.0
    for comp in table:
        inv = schedule.invocations(comp.name, variant)
        latency = inv * comp.unit_latency_us
        busy_energy = comp.power_mw * latency / 1000.0  # mW*us -> uJ
        rows.append({
            "name": comp.name,
            "spec": comp.spec_label,
            "count": comp.count,
            "area_mm2": comp.area_mm2,
            "power_mw": comp.power_mw,
            "unit_latency_us": comp.unit_latency_us,
            "invocations": inv,
            "latency_us": latency,
            "busy_energy_uj": busy_energy,
        })
        total_area += comp.area_mm2
        total_power += comp.power_mw
        total_latency += latency
        component_energy += busy_energy
    return CostReport(
        variant=variant, scenario=scenario, rows=rows, schedule=schedule,
        total_area_mm2=total_area, total_power_mw=total_power,
        total_latency_us=total_latency,
        total_energy_uj=total_power * total_latency / 1000.0,
        component_energy_uj=component_energy,
    )


def scale_technology(table: list[ComponentSpec],
                     factors: dict[str, float]) -> list[ComponentSpec]:
    """Multiplicative technology scaling per metric (area/power/latency)."""
    unknown = set(factors) - {"area", "power", "latency"}
    if unknown:
        raise ValueError(f"unknown scaling metrics: {sorted(unknown)}")
    for metric, f in factors.items():
        if f <= 0:
            raise ValueError(f"{metric} factor must be positive")
    return [
        replace(
            comp,
            unit_area_mm2=comp.unit_area_mm2 * factors.get("area", 1.0),
            unit_power_mw=comp.unit_power_mw * factors.get("power", 1.0),
            unit_latency_us=comp.unit_latency_us * factors.get("latency", 1.0),
        )
        for comp in table
    ]
