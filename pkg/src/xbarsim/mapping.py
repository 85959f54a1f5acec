"""Compilation of network parameters onto 64x64 crossbar tiles.

Two conv mappings are supported.  The staggered mapping replicates every
kernel once per output position along separate column pairs so a whole
convolution completes in a single presentation of the input; it is
area-hungry but fast.  The weight-stationary mapping stores each kernel
once and slides the input window across passes, trading pass count for
cells.  Fully-connected layers are always laid out staggered-style as
64-row sections stacked side by side, four per tile when the output width
allows.

Signed weights use differential column pairs: the represented value is
proportional to g_plus - g_minus, with the smaller-magnitude side resting
at the bottom of the conductance window.

A compiled MappingPlan is pure geometry plus a pass schedule ("drive these
rows, read these column pairs into these outputs"); conductance targets
are derived from it separately so device non-idealities and repair can be
injected between planning and programming.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .network import ConvBlockSpec, LayerKind, LayerSpec, NetworkSpec, trace_shapes

__all__ = [
    "TILE_ROWS",
    "TILE_COLS",
    "BIAS_DRIVE",
    "MappingScheme",
    "DifferentialPair",
    "CellBudget",
    "Placement",
    "PassSpec",
    "LayerMapPlan",
    "MappingPlan",
    "MappingError",
    "map_weight_to_pair",
    "pair_to_weight",
    "plan_conv_staggered",
    "plan_conv_weight_stationary",
    "plan_fc",
    "compare_schemes",
    "compile_network",
    "plan_from_json",
]

TILE_ROWS = 64
TILE_COLS = 64

# Drive-source sentinel in a pass row map: constant full-scale bias drive.
BIAS_DRIVE = -1

# Rows reserved at the bottom of every conv kernel band for bias terms
# (one per parallel branch if both shared a tile; one is actually used).
CONV_BIAS_ROWS = 2


class MappingError(ValueError):
    """Plan construction failed (capacity, collision, or bad dimensions)."""


class MappingScheme(enum.Enum):
    STAGGERED = "staggered"
    WEIGHT_STATIONARY = "stationary"


@dataclass(frozen=True)
class DifferentialPair:
    """Conductances of the positive and negative columns of one weight."""

    g_plus: float
    g_minus: float


def map_weight_to_pair(w: float, scale: float, window: tuple[float, float]) -> DifferentialPair:
    """One-sided differential encoding of a signed weight.

    The column carrying the magnitude sits at g_off + |w| * scale; the
    complementary column rests at g_off, so (g_plus - g_minus) / scale
    recovers w exactly.
    """
    g_off, g_on = window
    magnitude = abs(w) * scale
    if magnitude > (g_on - g_off) * (1 + 1e-12):
        raise MappingError(
            f"weight {w} at scale {scale} exceeds conductance window "
            f"[{g_off}, {g_on}] (scale misconfiguration)"
        )
    high = g_off + min(magnitude, g_on - g_off)
    if w >= 0:
        return DifferentialPair(g_plus=high, g_minus=g_off)
    return DifferentialPair(g_plus=g_off, g_minus=high)


def pair_to_weight(pair: DifferentialPair, scale: float) -> float:
    return (pair.g_plus - pair.g_minus) / scale


@dataclass(frozen=True)
class CellBudget:
    """Memristor cell and pass accounting for one layer mapping."""

    cells_used: int
    cells_used_incl_sparsity: int
    pass_count: int

    def __post_init__(self):
        if self.cells_used > self.cells_used_incl_sparsity:
            raise MappingError("sparsity-inclusive count cannot be smaller")


@dataclass(frozen=True)
class Placement:
    """One logical weight on one cell pair.

    index identifies the logical parameter: ("w", f, c, t) / ("b", f) for
    conv layers, ("w", i, o) / ("b", o) for FC layers.  The staggered conv
    mapping replicates weights, so (layer, index) may appear once per
    output position, disambiguated by copy.
    """

    layer: str
    index: tuple
    tile: int
    row: int
    col_plus: int
    col_minus: int
    copy: int = 0


@dataclass(frozen=True)
class PassSpec:
    """One crossbar activation: row drive map plus differential readouts.

    drive maps physical row -> flattened (channel-major, padded) input
    index, or BIAS_DRIVE for the constant full-scale bias row.  reads list
    (col_plus, col_minus, flat output index); recovered values accumulate
    into the layer output, which makes section stacking and row-block
    splits express the same way.
    """

    tile: int
    stage: int
    drive: tuple[tuple[int, int], ...]
    reads: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True)
class LayerMapPlan:
    """Placements, schedule, and budget for one weighted layer."""

    layer: str
    kind: LayerKind
    scheme: MappingScheme
    in_channels: int
    in_length: int
    pad_left: int
    pad_right: int
    output_shape: tuple[int, ...]
    placements: tuple[Placement, ...]
    passes: tuple[PassSpec, ...]
    budget: CellBudget
    tiles_used: tuple[int, ...]

    @property
    def n_outputs(self) -> int:
        return int(np.prod(self.output_shape))

    def rebase(self, tile_map: dict[int, int]) -> "LayerMapPlan":
        return replace(
            self,
            placements=tuple(replace(p, tile=tile_map[p.tile]) for p in self.placements),
            passes=tuple(replace(p, tile=tile_map[p.tile]) for p in self.passes),
            tiles_used=tuple(sorted(tile_map[t] for t in self.tiles_used)),
        )


@dataclass(frozen=True)
class MappingPlan:
    """Full-network placement: every parameter on a (tile, row, col pair)."""

    spec: NetworkSpec
    scheme: MappingScheme
    n_tiles: int
    layers: dict[str, LayerMapPlan]
    input_scales: dict[str, float]

    def with_input_scales(self, input_scales: dict[str, float]) -> "MappingPlan":
        """Same placements with new per-layer input full-scales.

        Placement geometry does not depend on parameter values, so a
        compiled plan can be recalibrated cheaply for new parameters.
        """
        scales = dict(self.input_scales)
        unknown = set(input_scales) - set(scales)
        if unknown:
            raise MappingError(f"input_scales for unknown layers: {sorted(unknown)}")
        scales.update({k: float(v) for k, v in input_scales.items()})
        return replace(self, input_scales=scales)

    @property
    def budgets(self) -> dict[str, CellBudget]:
        return {name: lp.budget for name, lp in self.layers.items()}

    @property
    def total_cells_used(self) -> int:
        return sum(b.cells_used for b in self.budgets.values())

    def layer_order(self) -> list[str]:
        return [layer.name for layer in self.spec.weighted_layers]

    def to_json(self) -> str:
        doc = {
            "scheme": self.scheme.value,
            "tiles": [{"id": t, "rows": TILE_ROWS, "cols": TILE_COLS}
                      for t in range(self.n_tiles)],
            "input_scales": self.input_scales,
            "network": _spec_to_doc(self.spec),
            "layers": {},
        }
        for name in self.layer_order():
            lp = self.layers[name]
            doc["layers"][name] = {
                "kind": lp.kind.value,
                "scheme": lp.scheme.value,
                "in_channels": lp.in_channels,
                "in_length": lp.in_length,
                "pad_left": lp.pad_left,
                "pad_right": lp.pad_right,
                "output_shape": list(lp.output_shape),
                "tiles": list(lp.tiles_used),
                "budget": {
                    "cells_used": lp.budget.cells_used,
                    "cells_used_incl_sparsity": lp.budget.cells_used_incl_sparsity,
                    "pass_count": lp.budget.pass_count,
                },
                "placements": [
                    {"index": list(p.index), "copy": p.copy, "tile": p.tile,
                     "row": p.row, "col_plus": p.col_plus, "col_minus": p.col_minus}
                    for p in lp.placements
                ],
                "passes": [
                    {"tile": p.tile, "stage": p.stage,
                     "drive": [[r, s] for r, s in p.drive],
                     "reads": [list(r) for r in p.reads]}
                    for p in lp.passes
                ],
            }
        return json.dumps(doc, indent=2, sort_keys=True)


def _spec_to_doc(spec: NetworkSpec) -> dict:
    def layer_doc(layer: LayerSpec) -> dict:
        return {
            "kind": layer.kind.value, "name": layer.name,
            "in_channels": layer.in_channels, "out_channels": layer.out_channels,
            "kernel_size": layer.kernel_size, "stride": layer.stride,
            "padding_left": layer.padding_left, "padding_right": layer.padding_right,
            "in_features": layer.in_features, "out_features": layer.out_features,
        }

    return {
        "input_length": spec.input_length,
        "alpha": list(spec.alpha),
        "beta": list(spec.beta),
        "parallel": spec.parallel,
        "blocks": [{"branches": [layer_doc(b) for b in block.branches],
                    "pool": layer_doc(block.pool)} for block in spec.blocks],
        "fc": [layer_doc(fc) for fc in spec.fc],
    }


def _spec_from_doc(doc: dict) -> NetworkSpec:
    def layer(d: dict) -> LayerSpec:
        return LayerSpec(kind=LayerKind(d["kind"]),
                         **{k: d[k] for k in d if k != "kind"})

    return NetworkSpec(
        input_length=doc["input_length"],
        blocks=tuple(ConvBlockSpec(
            branches=tuple(layer(b) for b in blk["branches"]),
            pool=layer(blk["pool"])) for blk in doc["blocks"]),
        fc=tuple(layer(fc) for fc in doc["fc"]),
        alpha=tuple(doc["alpha"]),
        beta=tuple(doc["beta"]),
        parallel=doc["parallel"],
    )


def plan_from_json(text: str) -> MappingPlan:
    """Reconstruct a MappingPlan from its exported JSON document."""
    doc = json.loads(text)
    spec = _spec_from_doc(doc["network"])
    layers: dict[str, LayerMapPlan] = {}
    for name, ld in doc["layers"].items():
        placements = tuple(Placement(
            layer=name, index=tuple(p["index"]), copy=p["copy"], tile=p["tile"],
            row=p["row"], col_plus=p["col_plus"], col_minus=p["col_minus"],
        ) for p in ld["placements"])
        passes = tuple(PassSpec(
            tile=p["tile"], stage=p["stage"],
            drive=tuple((r, s) for r, s in p["drive"]),
            reads=tuple((cp, cm, o) for cp, cm, o in p["reads"]),
        ) for p in ld["passes"])
        layers[name] = LayerMapPlan(
            layer=name, kind=LayerKind(ld["kind"]),
            scheme=MappingScheme(ld["scheme"]),
            in_channels=ld["in_channels"], in_length=ld["in_length"],
            pad_left=ld["pad_left"], pad_right=ld["pad_right"],
            output_shape=tuple(ld["output_shape"]),
            placements=placements, passes=passes,
            budget=CellBudget(**ld["budget"]),
            tiles_used=tuple(ld["tiles"]),
        )
    return MappingPlan(spec=spec, scheme=MappingScheme(doc["scheme"]),
                       n_tiles=len(doc["tiles"]), layers=layers,
                       input_scales=dict(doc["input_scales"]))


def _check_tile_bounds(placements, n_tiles: int) -> None:
    for p in placements:
        if not (0 <= p.tile < n_tiles):
            raise MappingError(f"{p.layer}: tile {p.tile} out of range")
        if not (0 <= p.row < TILE_ROWS and 0 <= p.col_plus < TILE_COLS
                and 0 <= p.col_minus < TILE_COLS):
            raise MappingError(f"{p.layer}: placement outside tile bounds: {p}")


def plan_conv_staggered(n_filters: int, kernel_len: int, input_len: int,
                        bias: bool = True, in_channels: int = 1,
                        pad_left: int = 0, pad_right: int = 0,
                        name: str = "conv") -> tuple[LayerMapPlan, CellBudget]:
    """im2col-style mapping: one kernel copy per output position.

    Column pairs are position-major (position p, filter f -> pair
    p * n_filters + f); each copy is shifted down by its position, forming
    the diagonal band.  All results arrive in a single input presentation,
    so pass_count = 1.  Logical rows are the padded input (bias row last);
    the logical grid is cut into 64x64 tiles, row blocks accumulating
    digitally after readout.
    """
    padded = input_len + pad_left + pad_right
    positions = padded - kernel_len + 1
    if positions < 1:
        raise MappingError(f"{name}: kernel {kernel_len} longer than input {padded}")
    n_rows = in_channels * padded + (1 if bias else 0)
    n_cols = 2 * positions * n_filters
    bias_row = in_channels * padded
    row_tiles = math.ceil(n_rows / TILE_ROWS)
    col_tiles = math.ceil(n_cols / TILE_COLS)

    def tile_of(row, col):
        return (row // TILE_ROWS) * col_tiles + (col // TILE_COLS)

    placements = []
    for p in range(positions):
        for f in range(n_filters):
            pair = p * n_filters + f
            col_plus, col_minus = 2 * pair, 2 * pair + 1
            for c in range(in_channels):
                for t in range(kernel_len):
                    row = c * padded + p + t
                    placements.append(Placement(
                        layer=name, index=("w", f, c, t), copy=p,
                        tile=tile_of(row, col_plus),
                        row=row % TILE_ROWS,
                        col_plus=col_plus % TILE_COLS,
                        col_minus=col_minus % TILE_COLS,
                    ))
            if bias:
                placements.append(Placement(
                    layer=name, index=("b", f), copy=p,
                    tile=tile_of(bias_row, col_plus),
                    row=bias_row % TILE_ROWS,
                    col_plus=col_plus % TILE_COLS,
                    col_minus=col_minus % TILE_COLS,
                ))

    passes = []
    for rb in range(row_tiles):
        for cb in range(col_tiles):
            drive = []
            for local_row in range(TILE_ROWS):
                row = rb * TILE_ROWS + local_row
                if row < in_channels * padded:
                    drive.append((local_row, row))
                elif bias and row == bias_row:
                    drive.append((local_row, BIAS_DRIVE))
            reads = []
            for local_pair in range(TILE_COLS // 2):
                pair = (cb * TILE_COLS) // 2 + local_pair
                if pair >= positions * n_filters:
                    break
                p, f = divmod(pair, n_filters)
                reads.append((2 * local_pair, 2 * local_pair + 1, f * positions + p))
            if drive and reads:
                passes.append(PassSpec(tile=rb * col_tiles + cb, stage=0,
                                       drive=tuple(drive), reads=tuple(reads)))

    cells = positions * (n_filters * kernel_len * in_channels
                         + (n_filters if bias else 0)) * 2
    budget = CellBudget(
        cells_used=cells,
        cells_used_incl_sparsity=n_rows * n_cols,
        pass_count=1,
    )
    lp = LayerMapPlan(
        layer=name, kind=LayerKind.CONV1D, scheme=MappingScheme.STAGGERED,
        in_channels=in_channels, in_length=input_len,
        pad_left=pad_left, pad_right=pad_right,
        output_shape=(n_filters, positions),
        placements=tuple(placements), passes=tuple(passes), budget=budget,
        tiles_used=tuple(range(row_tiles * col_tiles)),
    )
    _check_tile_bounds(lp.placements, row_tiles * col_tiles)
    return lp, budget


def plan_conv_weight_stationary(n_filters: int, kernel_len: int, input_len: int,
                                bias: bool = True, in_channels: int = 1,
                                pad_left: int = 0, pad_right: int = 0,
                                name: str = "conv") -> tuple[LayerMapPlan, CellBudget]:
    """Weight-stationary mapping: kernels written once, input window slides.

    Filter f occupies column pair f; kernel rows are stacked channel-major
    with the bias row directly below (two rows reserved).  Each output
    position is one pass whose row drive presents the corresponding input
    window, so pass_count equals the number of output positions.
    """
    padded = input_len + pad_left + pad_right
    positions = padded - kernel_len + 1
    if positions < 1:
        raise MappingError(f"{name}: kernel {kernel_len} longer than input {padded}")
    kernel_rows = in_channels * kernel_len
    rows_needed = kernel_rows + (CONV_BIAS_ROWS if bias else 0)
    if rows_needed > TILE_ROWS or 2 * n_filters > TILE_COLS:
        raise MappingError(
            f"{name}: weight-stationary plan exceeds one {TILE_ROWS}x{TILE_COLS} tile "
            f"({rows_needed} rows, {2 * n_filters} cols)"
        )
    bias_row = kernel_rows

    placements = []
    for f in range(n_filters):
        col_plus, col_minus = 2 * f, 2 * f + 1
        for c in range(in_channels):
            for t in range(kernel_len):
                placements.append(Placement(
                    layer=name, index=("w", f, c, t), tile=0,
                    row=c * kernel_len + t, col_plus=col_plus, col_minus=col_minus,
                ))
        if bias:
            placements.append(Placement(
                layer=name, index=("b", f), tile=0,
                row=bias_row, col_plus=col_plus, col_minus=col_minus,
            ))

    passes = []
    for p in range(positions):
        drive = [(c * kernel_len + t, c * padded + p + t)
                 for c in range(in_channels) for t in range(kernel_len)]
        if bias:
            drive.append((bias_row, BIAS_DRIVE))
        reads = tuple((2 * f, 2 * f + 1, f * positions + p) for f in range(n_filters))
        passes.append(PassSpec(tile=0, stage=p, drive=tuple(drive), reads=reads))

    cells = (n_filters * kernel_len * in_channels + (n_filters if bias else 0)) * 2
    budget = CellBudget(cells_used=cells, cells_used_incl_sparsity=cells,
                        pass_count=positions)
    lp = LayerMapPlan(
        layer=name, kind=LayerKind.CONV1D, scheme=MappingScheme.WEIGHT_STATIONARY,
        in_channels=in_channels, in_length=input_len,
        pad_left=pad_left, pad_right=pad_right,
        output_shape=(n_filters, positions),
        placements=tuple(placements), passes=tuple(passes), budget=budget,
        tiles_used=(0,),
    )
    _check_tile_bounds(lp.placements, 1)
    return lp, budget


def plan_fc(in_features: int, out_features: int, bias: bool = True,
            name: str = "fc") -> tuple[LayerMapPlan, CellBudget]:
    """FC mapping: 64-row input sections stacked horizontally per tile.

    A section holds a 64 x out_features slice of the weight matrix on
    2 * out_features columns; floor(64 / (2 * out)) sections share a tile
    and are presented sequentially.  Wide layers (2 * out > 64) split their
    output columns across tiles instead.  Partial products accumulate
    digitally across sections.  Bias pairs land in free columns of the last
    tile (or rarely, one extra tile), merged into an existing pass when a
    free drive row exists, otherwise on a dedicated pass.
    """
    if in_features < 1 or out_features < 1:
        raise MappingError(f"{name}: features must be >= 1")
    sections = math.ceil(in_features / TILE_ROWS)
    pair_cols = 2 * out_features

    placements = []
    passes = []
    tile_stage_count: dict[int, int] = {}
    # row spans driven per (tile, stage) so bias merging can find free rows
    driven: dict[tuple[int, int], set[int]] = {}

    if pair_cols <= TILE_COLS:
        per_tile = TILE_COLS // pair_cols
        n_tiles = math.ceil(sections / per_tile)
        for s in range(sections):
            tile = s // per_tile
            col0 = (s % per_tile) * pair_cols
            stage = s % per_tile
            rows = range(s * TILE_ROWS, min((s + 1) * TILE_ROWS, in_features))
            drive = tuple((r - s * TILE_ROWS, r) for r in rows)
            reads = tuple((col0 + 2 * o, col0 + 2 * o + 1, o) for o in range(out_features))
            for r in rows:
                for o in range(out_features):
                    placements.append(Placement(
                        layer=name, index=("w", r, o), tile=tile,
                        row=r - s * TILE_ROWS,
                        col_plus=col0 + 2 * o, col_minus=col0 + 2 * o + 1,
                    ))
            passes.append(PassSpec(tile=tile, stage=stage, drive=drive, reads=reads))
            driven[(tile, stage)] = {d[0] for d in drive}
            tile_stage_count[tile] = max(tile_stage_count.get(tile, 0), stage + 1)
        used_cols = {t: min(TILE_COLS, (sections - t * per_tile) * pair_cols)
                     for t in range(n_tiles)}
    else:
        groups = math.ceil(out_features / (TILE_COLS // 2))
        if sections * groups < 1:
            raise MappingError(f"{name}: degenerate split")
        n_tiles = sections * groups
        for s in range(sections):
            rows = range(s * TILE_ROWS, min((s + 1) * TILE_ROWS, in_features))
            for gidx in range(groups):
                tile = s * groups + gidx
                outs = range(gidx * (TILE_COLS // 2),
                             min((gidx + 1) * (TILE_COLS // 2), out_features))
                drive = tuple((r - s * TILE_ROWS, r) for r in rows)
                reads = tuple((2 * (o - gidx * (TILE_COLS // 2)),
                               2 * (o - gidx * (TILE_COLS // 2)) + 1, o) for o in outs)
                for r in rows:
                    for o in outs:
                        lo = o - gidx * (TILE_COLS // 2)
                        placements.append(Placement(
                            layer=name, index=("w", r, o), tile=tile,
                            row=r - s * TILE_ROWS,
                            col_plus=2 * lo, col_minus=2 * lo + 1,
                        ))
                passes.append(PassSpec(tile=tile, stage=0, drive=drive, reads=reads))
                driven[(tile, 0)] = {d[0] for d in drive}
                tile_stage_count[tile] = 1
        used_cols = {t: TILE_COLS for t in range(n_tiles)}

    if bias:
        # Bias pairs are placed chunk-wise so wide layers stay per-group:
        # a chunk lands either in free columns of an existing tile, on a
        # free row above its own group's weight columns, or on a fresh
        # tile.  The hosting pass (merged or dedicated) drives the bias
        # row at full scale; accumulation adds it into the outputs once.
        if pair_cols <= TILE_COLS:
            chunks = [(list(range(out_features)), None)]
        else:
            half = TILE_COLS // 2
            chunks = [(list(range(g * half, min((g + 1) * half, out_features))), g)
                      for g in range(math.ceil(out_features / half))]

        def add_bias_pass(tile, bias_row, reads, merge_stage=None):
            if merge_stage is not None:
                for i, p in enumerate(passes):
                    if p.tile == tile and p.stage == merge_stage:
                        passes[i] = PassSpec(
                            tile=tile, stage=p.stage,
                            drive=p.drive + ((bias_row, BIAS_DRIVE),),
                            reads=p.reads + reads)
                        return
            stage = tile_stage_count.get(tile, 0)
            passes.append(PassSpec(tile=tile, stage=stage,
                                   drive=((bias_row, BIAS_DRIVE),), reads=reads))
            tile_stage_count[tile] = stage + 1

        for outs, group in chunks:
            span = 2 * len(outs)
            host = col0 = bias_row = merge_stage = None
            if group is None:
                for tile in sorted(used_cols, reverse=True):
                    if TILE_COLS - used_cols[tile] >= span:
                        host, col0 = tile, used_cols[tile]
                        break
                if host is not None:
                    for (tile, stage), rows in sorted(driven.items()):
                        if tile == host and len(rows) < TILE_ROWS:
                            bias_row = min(set(range(TILE_ROWS)) - rows)
                            merge_stage = stage
                            break
                    if bias_row is None:
                        bias_row = 0
            else:
                # wide layer: reuse the group's own weight columns on a
                # free row of its last-section tile, when one exists
                tile = (sections - 1) * groups + group
                section_rows = driven[(tile, 0)]
                if len(section_rows) < TILE_ROWS:
                    host, col0 = tile, 0
                    bias_row = min(set(range(TILE_ROWS)) - section_rows)
                    merge_stage = 0
            if host is None:
                host, col0, bias_row = n_tiles, 0, 0
                n_tiles += 1
                used_cols[host] = 0
            reads = tuple((col0 + 2 * i, col0 + 2 * i + 1, o)
                          for i, o in enumerate(outs))
            add_bias_pass(host, bias_row, reads, merge_stage)
            used_cols[host] = max(used_cols.get(host, 0), col0 + span)
            for i, o in enumerate(outs):
                placements.append(Placement(
                    layer=name, index=("b", o), tile=host, row=bias_row,
                    col_plus=col0 + 2 * i, col_minus=col0 + 2 * i + 1,
                ))

    cells = (in_features * out_features + (out_features if bias else 0)) * 2
    budget = CellBudget(
        cells_used=cells, cells_used_incl_sparsity=cells,
        pass_count=max(tile_stage_count.values()),
    )
    lp = LayerMapPlan(
        layer=name, kind=LayerKind.FULLY_CONNECTED, scheme=MappingScheme.STAGGERED,
        in_channels=1, in_length=in_features, pad_left=0, pad_right=0,
        output_shape=(out_features,),
        placements=tuple(placements), passes=tuple(passes), budget=budget,
        tiles_used=tuple(range(n_tiles)),
    )
    _check_tile_bounds(lp.placements, n_tiles)
    return lp, budget


@dataclass(frozen=True)
class SchemeComparison:
    staggered: CellBudget
    weight_stationary: CellBudget
    recommendation: MappingScheme


def compare_schemes(n_filters: int, kernel_len: int, input_len: int,
                    bias: bool = True) -> SchemeComparison:
    """Budget both conv mappings; recommend the cheaper-area one.

    The weight-stationary scheme wins on cells whenever its count is
    strictly lower; callers prioritizing latency can read both budgets and
    pick the single-pass staggered plan instead.
    """
    _, stag = plan_conv_staggered(n_filters, kernel_len, input_len, bias)
    _, stat = plan_conv_weight_stationary(n_filters, kernel_len, input_len, bias)
    rec = (MappingScheme.WEIGHT_STATIONARY if stat.cells_used < stag.cells_used
           else MappingScheme.STAGGERED)
    return SchemeComparison(staggered=stag, weight_stationary=stat, recommendation=rec)


def _host_last_fc_on_conv_tile(fc: LayerSpec, conv_plan: LayerMapPlan) -> LayerMapPlan | None:
    """Try to place a small final FC layer in the free rows of a conv tile.

    The FC cells sit below the conv band (rows disjoint), reusing the same
    physical columns; time-multiplexed passes keep the layers independent
    because undriven rows contribute no current.
    """
    conv_rows = max(p.row for p in conv_plan.placements) + CONV_BIAS_ROWS
    rows_needed = fc.in_features + 1
    if rows_needed > TILE_ROWS - conv_rows or 2 * fc.out_features > TILE_COLS:
        return None
    tile = conv_plan.tiles_used[0]
    bias_row = TILE_ROWS - fc.in_features - 1
    placements = []
    for i in range(fc.in_features):
        for o in range(fc.out_features):
            placements.append(Placement(
                layer=fc.name, index=("w", i, o), tile=tile,
                row=bias_row + 1 + i, col_plus=2 * o, col_minus=2 * o + 1,
            ))
    for o in range(fc.out_features):
        placements.append(Placement(
            layer=fc.name, index=("b", o), tile=tile,
            row=bias_row, col_plus=2 * o, col_minus=2 * o + 1,
        ))
    drive = tuple((bias_row + 1 + i, i) for i in range(fc.in_features))
    drive += ((bias_row, BIAS_DRIVE),)
    reads = tuple((2 * o, 2 * o + 1, o) for o in range(fc.out_features))
    cells = (fc.in_features * fc.out_features + fc.out_features) * 2
    return LayerMapPlan(
        layer=fc.name, kind=LayerKind.FULLY_CONNECTED, scheme=MappingScheme.STAGGERED,
        in_channels=1, in_length=fc.in_features, pad_left=0, pad_right=0,
        output_shape=(fc.out_features,),
        placements=tuple(placements),
        passes=(PassSpec(tile=tile, stage=0, drive=drive, reads=reads),),
        budget=CellBudget(cells_used=cells, cells_used_incl_sparsity=cells,
                          pass_count=1),
        tiles_used=(tile,),
    )


def compile_network(spec: NetworkSpec, scheme: MappingScheme,
                    input_scales: dict[str, float] | None = None,
                    max_tiles: int | None = None) -> MappingPlan:
    """Compile every weighted layer of a network onto shared tiles.

    Conv layers follow the requested scheme; FC layers are always section
    mapped.  Under the weight-stationary scheme the final FC layer is
    folded into the first conv tile's free region when it fits (the
    canonical network then occupies exactly 7 tiles), and the compiled plan
    must respect an 8-tile budget unless max_tiles overrides it.
    """
    shapes = trace_shapes(spec)
    layer_plans: dict[str, LayerMapPlan] = {}
    next_tile = 0
    hosted_fc: str | None = None

    conv_layers = [b for block in spec.blocks for b in block.branches]
    for layer in conv_layers:
        if layer.stride != 1:
            raise MappingError(
                f"{layer.name}: stride-{layer.stride} convolution mapping "
                "is out of scope (both schemes assume unit stride)"
            )
        sh = shapes[layer.name]
        builder = (plan_conv_weight_stationary
                   if scheme is MappingScheme.WEIGHT_STATIONARY
                   else plan_conv_staggered)
        lp, _ = builder(
            layer.out_channels, layer.kernel_size, sh.in_length,
            bias=True, in_channels=sh.in_channels,
            pad_left=layer.padding_left, pad_right=layer.padding_right,
            name=layer.name,
        )
        tile_map = {t: next_tile + t for t in lp.tiles_used}
        layer_plans[layer.name] = lp.rebase(tile_map)
        next_tile += len(lp.tiles_used)

    for i, layer in enumerate(spec.fc):
        is_last = i == len(spec.fc) - 1
        if (is_last and scheme is MappingScheme.WEIGHT_STATIONARY and conv_layers):
            hosted = _host_last_fc_on_conv_tile(layer, layer_plans[conv_layers[0].name])
            if hosted is not None:
                layer_plans[layer.name] = hosted
                hosted_fc = layer.name
                continue
        lp, _ = plan_fc(layer.in_features, layer.out_features, bias=True,
                        name=layer.name)
        tile_map = {t: next_tile + t for t in lp.tiles_used}
        layer_plans[layer.name] = lp.rebase(tile_map)
        next_tile += len(lp.tiles_used)

    n_tiles = next_tile
    if max_tiles is None and scheme is MappingScheme.WEIGHT_STATIONARY:
        max_tiles = 8
    if max_tiles is not None and n_tiles > max_tiles:
        raise MappingError(f"plan needs {n_tiles} tiles, budget is {max_tiles}")

    occupied: dict[tuple[int, int, int], tuple] = {}
    for lp in layer_plans.values():
        for p in lp.placements:
            for col in (p.col_plus, p.col_minus):
                key = (p.tile, p.row, col)
                if key in occupied:
                    raise MappingError(
                        f"placement collision at tile {p.tile} cell "
                        f"({p.row}, {col}): {occupied[key]} vs {(p.layer, p.index)}"
                    )
                occupied[key] = (p.layer, p.index)

    scales = {layer.name: 1.0 for layer in spec.weighted_layers}
    if input_scales:
        unknown = set(input_scales) - set(scales)
        if unknown:
            raise MappingError(f"input_scales for unknown layers: {sorted(unknown)}")
        scales.update({k: float(v) for k, v in input_scales.items()})
    for name, value in scales.items():
        if not (value > 0 and math.isfinite(value)):
            raise MappingError(f"input scale for {name} must be positive and finite")

    return MappingPlan(spec=spec, scheme=scheme, n_tiles=n_tiles,
                       layers=layer_plans, input_scales=scales)
