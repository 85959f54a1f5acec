"""Stuck-device repair: complement offsetting and the two-pass baseline.

Both methods exploit the differential pair: when one device of a pair is
frozen, the free complement can be moved so the pair difference lands as
close to the target as the window allows.  The offsetting method computes
those complements up front and writes every weight exactly once; the
baseline first initializes all free devices to defaults and then adjusts
them, costing a second write pass for the same final values.

Pairs with both devices stuck cannot be adjusted at all and are only
counted; single-stuck pairs whose optimal complement is clamped at a
window endpoint keep whatever residual the endpoint allows, which is never
worse than leaving the complement at its nominal value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import crossbar as xb
from . import network as nn
from .mapping import MappingPlan

__all__ = [
    "RepairReport",
    "offset_stuck_weights",
    "inner_fault_tolerance_baseline",
    "mean_weight_error",
    "evaluate_mitigation",
    "sweep_rows_to_csv",
]


@dataclass
class RepairReport:
    """Outcome accounting for one repair run."""

    total_stuck_devices: int = 0
    adjusted: int = 0
    repaired: int = 0
    unrepairable_both_stuck: int = 0
    no_improvement: int = 0
    write_passes: int = 1
    residuals: list[float] = field(default_factory=list)

    @property
    def unrepairable(self) -> int:
        """Both-stuck pairs plus single-stuck pairs pinned at a window edge."""
        return self.unrepairable_both_stuck + self.no_improvement

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.residuals)) if self.residuals else 0.0

    def to_dict(self) -> dict:
        return {
            "total_stuck_devices": self.total_stuck_devices,
            "adjusted": self.adjusted,
            "repaired": self.repaired,
            "unrepairable_both_stuck": self.unrepairable_both_stuck,
            "no_improvement": self.no_improvement,
            "unrepairable": self.unrepairable,
            "write_passes": self.write_passes,
            "mean_residual": self.mean_residual,
        }


def _stuck_value(state: int, window: tuple[float, float]) -> float:
    return window[1] if state == xb.STUCK_ON else window[0]


def _repair_pairs(plan: MappingPlan, image: xb.ProgramImage,
                  stuck_maps: list[np.ndarray],
                  window: tuple[float, float]) -> tuple[list[np.ndarray], RepairReport]:
    """Shared core: optimal free-complement values under box constraints."""
    lo, hi = window
    adjusted = [t.copy() for t in image.targets]
    report = RepairReport()
    report.total_stuck_devices = int(sum((m != xb.FREE).sum() for m in stuck_maps))

    for name in plan.layer_order():
        for p in plan.layers[name].placements:
            stuck = stuck_maps[p.tile]
            sp, sm = int(stuck[p.row, p.col_plus]), int(stuck[p.row, p.col_minus])
            if sp == xb.FREE and sm == xb.FREE:
                continue
            tile = adjusted[p.tile]
            scale = image.scales[p.tile]
            d_target = (image.targets[p.tile][p.row, p.col_plus]
                        - image.targets[p.tile][p.row, p.col_minus])
            if sp != xb.FREE and sm != xb.FREE:
                report.unrepairable_both_stuck += 1
                gp = _stuck_value(sp, window)
                gm = _stuck_value(sm, window)
                tile[p.row, p.col_plus] = gp
                tile[p.row, p.col_minus] = gm
                report.residuals.append(abs((gp - gm) - d_target) / scale)
                continue
            # One device frozen: move the free complement to minimize
            # |(g_plus - g_minus) - d_target| within the window.  The stuck
            # cell's target is set to its frozen value so the pair encodes
            # the same difference if the repair is re-derived (idempotence).
            if sp != xb.FREE:
                gp = _stuck_value(sp, window)
                gm_free = float(np.clip(gp - d_target, lo, hi))
                before = abs((gp - tile[p.row, p.col_minus]) - d_target)
                after = abs((gp - gm_free) - d_target)
                tile[p.row, p.col_plus] = gp
                tile[p.row, p.col_minus] = gm_free
            else:
                gm = _stuck_value(sm, window)
                gp_free = float(np.clip(gm + d_target, lo, hi))
                before = abs((tile[p.row, p.col_plus] - gm) - d_target)
                after = abs((gp_free - gm) - d_target)
                tile[p.row, p.col_plus] = gp_free
                tile[p.row, p.col_minus] = gm
            report.adjusted += 1
            if after < before * (1 - 1e-12) or after == 0.0:
                report.repaired += 1
            elif after > 0:
                report.no_improvement += 1
            report.residuals.append(after / scale)
    return adjusted, report


def offset_stuck_weights(plan: MappingPlan, image: xb.ProgramImage,
                         stuck_maps: list[np.ndarray],
                         window: tuple[float, float] | None = None,
                         ) -> tuple[xb.ProgramImage, RepairReport]:
    """Single-write repair: pre-offset the free complement of stuck devices.

    Requires the stuck maps before any weight is written.  Free pairs are
    untouched; the returned image is written once like an unmitigated one.
    """
    window = window or image.device.window
    adjusted, report = _repair_pairs(plan, image, stuck_maps, window)
    report.write_passes = 1
    out = xb.ProgramImage(targets=adjusted, diff_weights=image.diff_weights,
                          scales=image.scales, device=image.device)
    return out, report


def inner_fault_tolerance_baseline(plan: MappingPlan, image: xb.ProgramImage,
                                   stuck_maps: list[np.ndarray],
                                   window: tuple[float, float] | None = None,
                                   ) -> tuple[xb.ProgramImage, RepairReport]:
    """Two-pass baseline: default-initialize free devices, then adjust each.

    Pass one writes every free device to the window bottom; pass two sweeps
    the free devices, setting each so the represented value cannot get any
    closer to the target.  Final values coincide with offset_stuck_weights;
    the cost is the second write pass.
    """
    window = window or image.device.window
    lo, hi = window

    # pass one: defaults everywhere a device is writable
    defaults = [np.full_like(t, lo) for t in image.targets]
    # pass two: per-pair coordinate sweep (plus column, then minus column)
    adjusted = [t.copy() for t in defaults]
    report = RepairReport()
    report.total_stuck_devices = int(sum((m != xb.FREE).sum() for m in stuck_maps))
    for name in plan.layer_order():
        for p in plan.layers[name].placements:
            stuck = stuck_maps[p.tile]
            sp, sm = int(stuck[p.row, p.col_plus]), int(stuck[p.row, p.col_minus])
            scale = image.scales[p.tile]
            d_target = (image.targets[p.tile][p.row, p.col_plus]
                        - image.targets[p.tile][p.row, p.col_minus])
            tile = adjusted[p.tile]
            gp = _stuck_value(sp, window) if sp != xb.FREE else tile[p.row, p.col_plus]
            gm = _stuck_value(sm, window) if sm != xb.FREE else tile[p.row, p.col_minus]
            for _ in range(2):
                if sp == xb.FREE:
                    gp = float(np.clip(gm + d_target, lo, hi))
                if sm == xb.FREE:
                    gm = float(np.clip(gp - d_target, lo, hi))
            tile[p.row, p.col_plus] = gp
            tile[p.row, p.col_minus] = gm
            if sp != xb.FREE and sm != xb.FREE:
                report.unrepairable_both_stuck += 1
                report.residuals.append(abs((gp - gm) - d_target) / scale)
            elif sp != xb.FREE or sm != xb.FREE:
                report.adjusted += 1
                report.residuals.append(abs((gp - gm) - d_target) / scale)
    report.write_passes = 2
    out = xb.ProgramImage(targets=adjusted, diff_weights=image.diff_weights,
                          scales=image.scales, device=image.device)
    return out, report


def mean_weight_error(plan: MappingPlan, image: xb.ProgramImage,
                      tiles: list[xb.CrossbarTile]) -> float:
    """Mean |mapped - target| over every placement, in weight units."""
    g = np.stack([t.g for t in tiles])
    tgt = np.stack(image.targets)
    tile_scales = np.array([t.scale for t in tiles])
    image_scales = np.array(image.scales)
    errors = []
    for name in plan.layer_order():
        lp = plan.layers[name]
        ti, ri, cp, cm, _, _ = xb._placement_arrays(lp, _weight_shape(plan, name))
        mapped = (g[ti, ri, cp] - g[ti, ri, cm]) / tile_scales[ti]
        target = (tgt[ti, ri, cp] - tgt[ti, ri, cm]) / image_scales[ti]
        errors.append(np.abs(mapped - target))
    return float(np.mean(np.concatenate(errors))) if errors else 0.0


def _weight_shape(plan: MappingPlan, name: str) -> tuple[int, ...]:
    layer = next(l for l in plan.spec.weighted_layers if l.name == name)
    if layer.kind is nn.LayerKind.CONV1D:
        sh = nn.trace_shapes(plan.spec)[name]
        return (sh.out_channels, sh.in_channels, layer.kernel_size)
    return (layer.in_features, layer.out_features)


def evaluate_mitigation(spec: nn.NetworkSpec, params: nn.NetworkParams,
                        plan: MappingPlan, samples: np.ndarray,
                        labels: np.ndarray, stuck_rates, seeds,
                        base_cfg: xb.NonIdealityConfig | None = None,
                        options: xb.ExecutionOptions | None = None) -> list[dict]:
    """Accuracy and weight-error sweep over stuck rates, with/without repair.

    For every (rate, seed) the same sampled fault maps feed an unmitigated
    and an offset-repaired programming run, isolating the repair effect.
    Returns one row dict per (rate, seed, mitigated).
    """
    if len(samples) == 0:
        raise ValueError("empty evaluation set")
    base_cfg = base_cfg or xb.NonIdealityConfig.ideal()
    image = xb.build_program_image(plan, params)
    rows = []
    for rate in stuck_rates:
        for seed in seeds:
            cfg = base_cfg.replace(p_stuck_on=rate / 2, p_stuck_off=rate / 2,
                                   rng_seed=int(seed))
            window = (image.device.g_off * cfg.g_window_scale,
                      image.device.g_on * cfg.g_window_scale)
            stuck_maps = xb.sample_stuck_maps(plan.n_tiles, cfg)
            for mitigated in (False, True):
                if mitigated:
                    img, report = offset_stuck_weights(plan, image, stuck_maps,
                                                       window=window)
                else:
                    img, report = image, None
                tiles = xb.program_network(plan, img, cfg, stuck_maps=stuck_maps)
                logits = xb.execute_batch(plan, tiles, samples, cfg, options)
                acc = float(np.mean(np.argmax(logits, axis=1) == labels))
                rows.append({
                    "stuck_rate": rate,
                    "seed": int(seed),
                    "mitigated": int(mitigated),
                    "accuracy": acc,
                    "mean_weight_error": mean_weight_error(plan, image, tiles),
                })
    return rows


def sweep_rows_to_csv(rows: list[dict]) -> str:
    """Render sweep rows with stable column order."""
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
