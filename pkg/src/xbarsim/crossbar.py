"""Analog crossbar device and circuit model.

Programming applies write quantization, multiplicative Gaussian write
deviation, window clamping, and per-device stuck-at overrides, all
reproducible from a single seed (child streams are derived per tile, and
separately for stuck sampling and write noise, so repair experiments see
identical fault maps with and without mitigation).

Readout solves either the ideal VMM (Ohm + Kirchhoff with perfect wires)
or the full resistive mesh: every row and column wire is a chain of
r_line segments between adjacent cells, rows are driven through r_source
at the left edge, and columns terminate into ideal virtual-ground sense
nodes at the bottom edge.  The mesh conductance matrix is factorized once
per tile and reused across passes.

DAC/ADC conversion uses a signed mid-tread code (two's-complement style:
codes -2^(b-1) .. 2^(b-1)-1) so a zero input maps to exactly 0 V and a
zero current to the mid code.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import network as nn
from .mapping import BIAS_DRIVE, MappingPlan, TILE_COLS, TILE_ROWS

__all__ = [
    "FREE",
    "STUCK_ON",
    "STUCK_OFF",
    "DeviceParams",
    "DeviceState",
    "NonIdealityConfig",
    "ConfigError",
    "CrossbarTile",
    "ReadoutResult",
    "SolverError",
    "NodalSolver",
    "vmm_ideal",
    "vmm_nonideal",
    "dac_convert",
    "adc_convert",
    "adc_reconstruct",
    "ProgramImage",
    "build_program_image",
    "calibrate_input_scales",
    "sample_stuck_maps",
    "program_tile",
    "program_network",
    "decompile_network",
    "read_tile",
    "ExecutionOptions",
    "execute_network",
    "execute_batch",
]

# Stuck-at states.
FREE, STUCK_ON, STUCK_OFF = 0, 1, 2


@dataclass(frozen=True)
class DeviceParams:
    """Nominal RRAM conductance window: R_on ~ 10 kOhm, R_off ~ 100 kOhm,
    so the midpoint resistance (R_on + R_off) / 2 is ~55 kOhm."""

    r_on: float = 10e3
    r_off: float = 100e3

    @property
    def g_on(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_off(self) -> float:
        return 1.0 / self.r_off

    @property
    def window(self) -> tuple[float, float]:
        return (self.g_off, self.g_on)


_CONFIG_FIELDS = (
    "dac_bits", "adc_bits", "write_bits", "write_sigma",
    "p_stuck_on", "p_stuck_off", "r_line", "r_source",
    "g_window_scale", "v_max", "rng_seed",
)


class ConfigError(ValueError):
    """Rejected non-ideality configuration."""


@dataclass(frozen=True)
class NonIdealityConfig:
    """All analog non-ideality knobs.

    Resolution fields accept None to disable the converter entirely
    (ideal linear transfer); write_bits None disables write quantization.
    """

    dac_bits: int | None = 6
    adc_bits: int | None = 6
    write_bits: int | None = None
    write_sigma: float = 0.0
    p_stuck_on: float = 0.0
    p_stuck_off: float = 0.0
    r_line: float = 2.0
    r_source: float = 20.0
    g_window_scale: float = 1.0
    v_max: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_stuck_on", "p_stuck_off"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if self.p_stuck_on + self.p_stuck_off > 1.0:
            raise ConfigError("p_stuck_on + p_stuck_off must not exceed 1")
        if self.r_line < 0 or self.r_source < 0:
            raise ConfigError("line and source resistance must be >= 0")
        if self.v_max <= 0:
            raise ConfigError("v_max must be positive")
        if self.g_window_scale <= 0:
            raise ConfigError("g_window_scale must be positive")
        if self.write_sigma < 0:
            raise ConfigError("write_sigma must be >= 0")
        for name in ("dac_bits", "adc_bits", "write_bits"):
            bits = getattr(self, name)
            if bits is not None and bits < 1:
                raise ConfigError(f"{name} must be >= 1 or null")

    @classmethod
    def ideal(cls, rng_seed: int = 0) -> "NonIdealityConfig":
        """Every non-ideality switched off."""
        return cls(dac_bits=None, adc_bits=None, write_bits=None,
                   write_sigma=0.0, p_stuck_on=0.0, p_stuck_off=0.0,
                   r_line=0.0, r_source=0.0, g_window_scale=1.0,
                   rng_seed=rng_seed)

    @classmethod
    def from_dict(cls, doc: dict) -> "NonIdealityConfig":
        unknown = set(doc) - set(_CONFIG_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "NonIdealityConfig":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_dict(doc)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    def replace(self, **kw) -> "NonIdealityConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class DeviceState:
    """Conductance and stuck flag of a single cell."""

    g: float
    stuck: int  # FREE / STUCK_ON / STUCK_OFF


@dataclass
class CrossbarTile:
    """Programmed device grid; treated as immutable once returned."""

    g: np.ndarray                 # (rows, cols) conductances, siemens
    stuck: np.ndarray             # (rows, cols) int8 FREE/STUCK_ON/STUCK_OFF
    window: tuple[float, float]   # effective (g_off, g_on) after window scale
    scale: float = 1.0            # siemens per unit weight (readout gain)
    device: DeviceParams = field(default_factory=DeviceParams)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g.shape

    def device_state(self, row: int, col: int) -> DeviceState:
        return DeviceState(g=float(self.g[row, col]),
                           stuck=int(self.stuck[row, col]))


@dataclass(frozen=True)
class ReadoutResult:
    """One pass worth of column readout."""

    currents: np.ndarray          # raw column currents, amperes
    codes: np.ndarray             # ADC codes (float currents when ADC off)
    recovered: np.ndarray         # weight-domain differential outputs


class SolverError(RuntimeError):
    """Nodal system singular or residual above tolerance."""


def vmm_ideal(g: np.ndarray | CrossbarTile, v: np.ndarray,
              v_max: float | None = 0.3) -> np.ndarray:
    """Column currents I_j = sum_i g_ij * v_i with perfect wires."""
    if isinstance(g, CrossbarTile):
        g = g.g
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != g.shape[0]:
        raise ValueError(f"voltage vector length {v.shape[0]} != rows {g.shape[0]}")
    if v_max is not None and np.any(np.abs(v) > v_max * (1 + 1e-9)):
        raise ValueError(
            f"voltage bound exceeded: max |v| = {np.max(np.abs(v)):.6g} > {v_max} "
            "(DAC misconfiguration)"
        )
    return g.T @ v


class NodalSolver:
    """Sparse nodal analysis of one tile's resistive mesh.

    Unknowns are the row-wire and column-wire node voltages at every cell.
    Rows are driven through r_source at column 0; column wires are sensed
    by ideal virtual grounds at the last row, whose nodes are eliminated as
    fixed potentials.  With r_line = 0 the wire chains collapse and closed
    forms are used instead of a factorization.
    """

    _REFINE_TRIGGER = 1e-10
    _FAIL_TOL = 1e-9

    def __init__(self, g: np.ndarray | CrossbarTile, r_line: float, r_source: float,
                 drive_both_ends: bool = False):
        if isinstance(g, CrossbarTile):
            g = g.g
        self.g = np.asarray(g, dtype=np.float64)
        if np.any(self.g < 0) or not np.all(np.isfinite(self.g)):
            raise ValueError("conductances must be finite and non-negative")
        self.r_line = float(r_line)
        self.r_source = float(r_source)
        if self.r_line < 0 or self.r_source < 0:
            raise ValueError("resistances must be >= 0")
        # Driving each row from both wire ends halves the worst-case IR
        # drop; off by default, which models a single driver per row.
        self.drive_both_ends = bool(drive_both_ends)
        self.n_rows, self.n_cols = self.g.shape
        self._mode = "ideal"
        if self.r_line == 0 and self.r_source > 0:
            self._mode = "row_lumped"
        elif self.r_line > 0:
            self._mode = "mesh"
            self._build_mesh()

    def _build_mesh(self):
        n, m = self.n_rows, self.n_cols
        g = self.g
        row_id = lambda i, j: i * m + j
        col_id = lambda i, j: n * m + i * m + j
        n_nodes = 2 * n * m

        ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        branches_a = [row_id(ii, jj).ravel()]
        branches_b = [col_id(ii, jj).ravel()]
        branches_w = [g.ravel()]

        g_line = 1.0 / self.r_line
        if m > 1:
            a = row_id(ii[:, :-1], jj[:, :-1]).ravel()
            b = row_id(ii[:, :-1], jj[:, :-1] + 1).ravel()
            branches_a.append(a)
            branches_b.append(b)
            branches_w.append(np.full(a.size, g_line))
        if n > 1:
            a = col_id(ii[:-1, :], jj[:-1, :]).ravel()
            b = col_id(ii[:-1, :] + 1, jj[:-1, :]).ravel()
            branches_a.append(a)
            branches_b.append(b)
            branches_w.append(np.full(a.size, g_line))

        a = np.concatenate(branches_a)
        b = np.concatenate(branches_b)
        w = np.concatenate(branches_w)

        lap_rows = np.concatenate([a, b, a, b])
        lap_cols = np.concatenate([a, b, b, a])
        lap_vals = np.concatenate([w, w, -w, -w])
        lap = sp.coo_matrix((lap_vals, (lap_rows, lap_cols)),
                            shape=(n_nodes, n_nodes)).tocsr()

        fixed = np.zeros(n_nodes, dtype=bool)
        ground_nodes = np.array([col_id(n - 1, j) for j in range(m)])
        fixed[ground_nodes] = True
        entry_cols = [0] if (m == 1 or not self.drive_both_ends) else [0, m - 1]
        source_entry = np.array([row_id(i, j) for i in range(n)
                                 for j in entry_cols])
        source_rows = np.array([i for i in range(n) for _ in entry_cols])
        if self.r_source == 0:
            fixed[source_entry] = True
        self._fixed = fixed
        self._unknown = np.where(~fixed)[0]
        self._uindex = -np.ones(n_nodes, dtype=np.int64)
        self._uindex[self._unknown] = np.arange(self._unknown.size)

        K = lap[self._unknown][:, self._unknown].tocsc()
        if self.r_source > 0:
            g_src = 1.0 / self.r_source
            diag = sp.coo_matrix(
                (np.full(source_entry.size, g_src),
                 (self._uindex[source_entry], self._uindex[source_entry])),
                shape=K.shape)
            K = (K + diag).tocsc()
            # rhs = P @ v, current injected through the source resistors
            self._rhs_map = sp.coo_matrix(
                (np.full(source_entry.size, g_src),
                 (self._uindex[source_entry], source_rows)),
                shape=(self._unknown.size, n)).tocsr()
        else:
            # fixed entry nodes at v_i: rhs = -K_uf @ v_f, column grounds are 0
            K_uf = lap[self._unknown][:, source_entry]
            row_pick = sp.coo_matrix(
                (np.ones(source_entry.size),
                 (np.arange(source_entry.size), source_rows)),
                shape=(source_entry.size, n))
            self._rhs_map = (-K_uf @ row_pick).tocsr()
        self._K = K
        self._k_norm = spla.norm(K)
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise SolverError(f"singular nodal system: {exc}") from exc
        self._source_entry = source_entry
        self._source_rows = source_rows
        self._row_flat = row_id(ii, jj).ravel()
        self._col_flat = col_id(ii, jj).ravel()
        self._g_flat = g.ravel()

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Sense currents per column.

        v may be a single drive vector (rows,) or a batch (rows, k); the
        result matches ((cols,) or (cols, k)).
        """
        v = np.asarray(v, dtype=np.float64)
        single = v.ndim == 1
        vb = v[:, None] if single else v
        if vb.shape[0] != self.n_rows:
            raise ValueError(f"drive vector length {vb.shape[0]} != rows {self.n_rows}")
        out = self._solve_batch(vb)
        return out[:, 0] if single else out

    def _solve_batch(self, vb: np.ndarray) -> np.ndarray:
        if self._mode == "ideal":
            return self.g.T @ vb
        if self._mode == "row_lumped":
            r_eff = self.r_source / (2.0 if self.drive_both_ends else 1.0)
            row_sum = self.g.sum(axis=1)
            u = vb / (1.0 + r_eff * row_sum)[:, None]
            return self.g.T @ u

        rhs = self._rhs_map @ vb
        x = self._lu.solve(rhs)
        # Backward error checked on the first column; the factorization
        # quality does not vary across right-hand sides.
        x0, r0 = x[:, :1], rhs[:, :1]
        ref = max(self._k_norm * np.linalg.norm(x0) + np.linalg.norm(r0), 1e-30)
        residual = np.linalg.norm(self._K @ x0 - r0)
        if residual / ref > self._REFINE_TRIGGER:
            x = x + self._lu.solve(rhs - self._K @ x)
            x0, r0 = x[:, :1], rhs[:, :1]
            ref = max(self._k_norm * np.linalg.norm(x0) + np.linalg.norm(r0), 1e-30)
            residual = np.linalg.norm(self._K @ x0 - r0)
            if residual / ref > self._FAIL_TOL:
                raise SolverError(
                    f"nodal solve residual {residual / ref:.3e} above tolerance")

        n_nodes = 2 * self.n_rows * self.n_cols
        volt = np.zeros((n_nodes, vb.shape[1]))
        volt[self._unknown] = x
        if self.r_source == 0:
            volt[self._source_entry] = vb[self._source_rows]
        v_row = volt[self._row_flat]
        v_col = volt[self._col_flat]
        return ((v_row - v_col) * self._g_flat[:, None]) \
            .reshape(self.n_rows, self.n_cols, -1).sum(axis=0)


def vmm_nonideal(g: np.ndarray | CrossbarTile, v: np.ndarray,
                 r_line: float, r_source: float,
                 drive_both_ends: bool = False) -> np.ndarray:
    """One-shot nodal VMM; reduces to vmm_ideal when both resistances are 0."""
    return NodalSolver(g, r_line, r_source, drive_both_ends).solve(v)


def dac_convert(x: np.ndarray, bits: int | None, v_max: float = 0.3) -> np.ndarray:
    """Normalized inputs (full scale = 1) to row voltages.

    Signed mid-tread transfer: 2**bits codes, zero included, voltage step
    v_max / 2**(bits-1).  bits None gives the ideal linear transfer.
    """
    x = np.asarray(x, dtype=np.float64)
    if bits is None:
        # Ideal transfer still saturates: the drive amplifier cannot exceed
        # the read-voltage bound.
        return np.clip(x, -1.0, 1.0) * v_max
    if bits < 1:
        raise ConfigError("dac bits must be >= 1")
    half = 2 ** (bits - 1)
    codes = np.clip(np.round(x * half), -half, half - 1)
    return codes * (v_max / half)


def adc_convert(currents: np.ndarray, bits: int | None,
                full_scale: float) -> np.ndarray:
    """Column currents to signed integer codes (mid code 0 at zero current)."""
    currents = np.asarray(currents, dtype=np.float64)
    if bits is None:
        return currents
    if bits < 1:
        raise ConfigError("adc bits must be >= 1")
    if full_scale <= 0:
        raise ConfigError("adc full scale must be positive")
    half = 2 ** (bits - 1)
    return np.clip(np.round(currents / full_scale * half), -half, half - 1)


def adc_reconstruct(codes: np.ndarray, bits: int | None, full_scale: float) -> np.ndarray:
    """Current-domain values represented by ADC codes."""
    if bits is None:
        return np.asarray(codes, dtype=np.float64)
    half = 2 ** (bits - 1)
    return np.asarray(codes, dtype=np.float64) * (full_scale / half)


@dataclass
class ProgramImage:
    """Target conductances per tile, before device non-idealities."""

    targets: list[np.ndarray]          # per tile (rows, cols) conductance
    diff_weights: list[np.ndarray]     # per tile signed weight-domain values
    scales: list[float]                # per tile siemens per unit weight
    device: DeviceParams


def calibrate_input_scales(spec: nn.NetworkSpec, params: nn.NetworkParams,
                           samples: np.ndarray) -> dict[str, float]:
    """Per-layer input full-scale from the float reference on sample data.

    The returned scales make every DAC drive reach at most v_max.  Biases
    are encoded relative to these scales, so calibrate before building the
    program image.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    peaks: dict[str, float] = {}
    for row in samples:
        trace = nn.forward_trace(spec, params, row)
        for layer in spec.weighted_layers:
            peak = float(np.max(np.abs(trace[layer.name])))
            peaks[layer.name] = max(peaks.get(layer.name, 0.0), peak)
    return {name: (peak if peak > 0 else 1.0) for name, peak in peaks.items()}


def build_program_image(plan: MappingPlan, params: nn.NetworkParams,
                        device: DeviceParams | None = None) -> ProgramImage:
    """Resolve placements against parameters into conductance targets.

    Unused cells rest at g_off on both columns so they cancel
    differentially on the ideal path but still load the wires in the mesh
    model.  Conv and FC biases are stored scaled by the layer input scale,
    since their row is driven at full scale.  The per-tile weight-to-
    conductance scale spans the full window over the largest magnitude on
    that tile.
    """
    device = device or DeviceParams()
    g_off, g_on = device.window
    diff = np.zeros((plan.n_tiles, TILE_ROWS, TILE_COLS))

    for name in plan.layer_order():
        lp = plan.layers[name]
        w, b = params[name]
        x_fs = plan.input_scales[name]
        tiles_, rows_, cps_, cms_, flats_, kinds_ = _placement_arrays(lp, w.shape)
        values = np.empty(len(lp.placements))
        values[kinds_] = np.asarray(w, dtype=np.float64).reshape(-1)[flats_[kinds_]]
        values[~kinds_] = np.asarray(b, dtype=np.float64)[flats_[~kinds_]] / x_fs
        diff[tiles_, rows_, cps_] = np.maximum(values, 0.0)
        diff[tiles_, rows_, cms_] = np.maximum(-values, 0.0)

    peaks = np.max(np.abs(diff), axis=(1, 2))
    scales = np.where(peaks > 0, (g_on - g_off) / np.where(peaks > 0, peaks, 1.0), 1.0)
    targets = g_off + diff * scales[:, None, None]
    return ProgramImage(targets=list(targets), diff_weights=list(diff),
                        scales=[float(s) for s in scales], device=device)


def _placement_arrays(lp, w_shape):
    """Index arrays resolving a layer's placements; cached on the plan object."""
    cached = getattr(lp, "_placement_arrays", None)
    if cached is not None:
        return cached
    n = len(lp.placements)
    tiles_ = np.empty(n, dtype=np.int64)
    rows_ = np.empty(n, dtype=np.int64)
    cps_ = np.empty(n, dtype=np.int64)
    cms_ = np.empty(n, dtype=np.int64)
    flats_ = np.empty(n, dtype=np.int64)
    kinds_ = np.empty(n, dtype=bool)
    for i, p in enumerate(lp.placements):
        tiles_[i], rows_[i], cps_[i], cms_[i] = p.tile, p.row, p.col_plus, p.col_minus
        if p.index[0] == "w":
            kinds_[i] = True
            flats_[i] = np.ravel_multi_index(p.index[1:], w_shape)
        else:
            kinds_[i] = False
            flats_[i] = p.index[1]
    arrays = (tiles_, rows_, cps_, cms_, flats_, kinds_)
    object.__setattr__(lp, "_placement_arrays", arrays)
    return arrays


def _stuck_rng(cfg: NonIdealityConfig, tile_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(cfg.rng_seed, spawn_key=(tile_index, 0)))


def _noise_rng(cfg: NonIdealityConfig, tile_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(cfg.rng_seed, spawn_key=(tile_index, 1)))


def _sample_stuck(cfg: NonIdealityConfig, tile_index: int,
                  shape: tuple[int, int]) -> np.ndarray:
    u = _stuck_rng(cfg, tile_index).random(shape)
    m = np.zeros(shape, dtype=np.int8)
    m[u < cfg.p_stuck_on] = STUCK_ON
    m[(u >= cfg.p_stuck_on) & (u < cfg.p_stuck_on + cfg.p_stuck_off)] = STUCK_OFF
    return m


def sample_stuck_maps(n_tiles: int, cfg: NonIdealityConfig,
                      shape: tuple[int, int] = (TILE_ROWS, TILE_COLS)) -> list[np.ndarray]:
    """Per-device stuck states, reproducible from (rng_seed, tile index).

    Sampling is independent of the write path so the same maps can be fed
    to both a mitigated and an unmitigated programming run.
    """
    return [_sample_stuck(cfg, t, shape) for t in range(n_tiles)]


def program_tile(targets: np.ndarray, cfg: NonIdealityConfig,
                 tile_index: int = 0, stuck: np.ndarray | None = None,
                 device: DeviceParams | None = None,
                 scale: float = 1.0) -> CrossbarTile:
    """Write one tile: quantize, perturb, clamp, then apply stuck overrides.

    The realizable window is the nominal one scaled by g_window_scale;
    programming clamps into it (range variation shows up as clipping of
    extreme targets), and stuck devices land on its endpoints.
    """
    device = device or DeviceParams()
    targets = np.asarray(targets, dtype=np.float64)
    g_off, g_on = device.window
    lo, hi = g_off * cfg.g_window_scale, g_on * cfg.g_window_scale
    if (np.any(targets < min(g_off, lo) * (1 - 1e-9))
            or np.any(targets > max(g_on, hi) * (1 + 1e-9))):
        raise ValueError("target conductance outside the device window")

    g = targets.copy()
    if cfg.write_bits is not None:
        g = nn.quantize_fixed(g, cfg.write_bits, lo, hi)
    if cfg.write_sigma > 0:
        g = g * (1.0 + _noise_rng(cfg, tile_index).normal(0.0, cfg.write_sigma,
                                                          g.shape))
    g = np.clip(g, lo, hi)

    if stuck is None:
        stuck = _sample_stuck(cfg, tile_index, targets.shape)
    g = np.where(stuck == STUCK_ON, hi, g)
    g = np.where(stuck == STUCK_OFF, lo, g)
    return CrossbarTile(g=g, stuck=stuck.copy(), window=(lo, hi), scale=scale,
                        device=device)


def program_network(plan: MappingPlan, image: ProgramImage,
                    cfg: NonIdealityConfig,
                    stuck_maps: list[np.ndarray] | None = None) -> list[CrossbarTile]:
    """Program every tile of a plan from its image, single write pass."""
    if stuck_maps is None:
        stuck_maps = sample_stuck_maps(plan.n_tiles, cfg)
    if len(stuck_maps) != plan.n_tiles:
        raise ValueError(f"expected {plan.n_tiles} stuck maps, got {len(stuck_maps)}")
    return [
        program_tile(image.targets[t], cfg, tile_index=t, stuck=stuck_maps[t],
                     device=image.device, scale=image.scales[t])
        for t in range(plan.n_tiles)
    ]


def decompile_network(plan: MappingPlan, tiles: list[CrossbarTile]) -> nn.NetworkParams:
    """Read programmed pairs back into parameter arrays.

    Exact for ideal programming; replicated placements (staggered copies)
    are read from their first copy.
    """
    shapes = nn.trace_shapes(plan.spec)
    params: nn.NetworkParams = {}
    for layer in plan.spec.weighted_layers:
        lp = plan.layers[layer.name]
        sh = shapes[layer.name]
        if lp.kind is nn.LayerKind.CONV1D:
            w = np.zeros((sh.out_channels, sh.in_channels, layer.kernel_size))
            b = np.zeros(sh.out_channels)
        else:
            w = np.zeros((layer.in_features, layer.out_features))
            b = np.zeros(layer.out_features)
        seen = set()
        x_fs = plan.input_scales[layer.name]
        for p in lp.placements:
            if p.index in seen:
                continue
            seen.add(p.index)
            tile = tiles[p.tile]
            value = (tile.g[p.row, p.col_plus] - tile.g[p.row, p.col_minus]) / tile.scale
            if p.index[0] == "w":
                w[p.index[1:]] = value
            else:
                b[p.index[1]] = value * x_fs
        params[layer.name] = (w, b)
    return params


@dataclass(frozen=True)
class ExecutionOptions:
    """Knobs that belong to the readout datapath, not the device model.

    adc_full_scale selects the ADC range convention: "worst_case" uses the
    documented per-tile default of rows * g_on * v_max; "column_sum" uses
    the largest actual column conductance sum, which quantizes usefully at
    low bit counts; a float fixes the range explicitly.

    differential_adc converts the analog pair difference instead of each
    raw column current (subtract-then-convert sensing).  Per-column
    conversion followed by digital subtraction spends most of a low-bit
    ADC's range on the common-mode current, so resolution sweeps that
    should stay usable at 6 bits are run with differential sensing; the
    full-scale conventions then bound the pair difference instead.
    """

    adc_full_scale: str | float | tuple = "worst_case"
    differential_adc: bool = False

    def tile_full_scale(self, tile: CrossbarTile, v_max: float,
                        tile_index: int = 0) -> float:
        if isinstance(self.adc_full_scale, (int, float)):
            return float(self.adc_full_scale)
        if isinstance(self.adc_full_scale, (tuple, list, np.ndarray)):
            return float(self.adc_full_scale[tile_index])
        if self.adc_full_scale == "worst_case":
            if self.differential_adc:
                diff = np.abs(tile.g[:, 0::2] - tile.g[:, 1::2])
                return max(float(np.max(diff.sum(axis=0))), 1e-30) * v_max
            return tile.shape[0] * tile.window[1] * v_max
        if self.adc_full_scale == "column_sum":
            if self.differential_adc:
                diff = np.abs(tile.g[:, 0::2] - tile.g[:, 1::2])
                return max(float(np.max(diff.sum(axis=0))), 1e-30) * v_max
            return float(np.max(tile.g.sum(axis=0))) * v_max
        raise ConfigError(f"unknown adc_full_scale mode {self.adc_full_scale!r}")


def read_tile(tile: CrossbarTile, v: np.ndarray, cfg: NonIdealityConfig,
              pairs: list[tuple[int, int]],
              solver: NodalSolver | None = None,
              options: ExecutionOptions | None = None,
              v_scale: float = 1.0) -> ReadoutResult:
    """Drive one pass and recover weight-domain differential outputs."""
    options = options or ExecutionOptions()
    if solver is None:
        solver = NodalSolver(tile.g, cfg.r_line, cfg.r_source)
    if cfg.r_line == 0 and cfg.r_source == 0:
        currents = vmm_ideal(tile.g, v, cfg.v_max)
    else:
        if np.any(np.abs(v) > cfg.v_max * (1 + 1e-9)):
            raise ValueError("voltage bound exceeded (DAC misconfiguration)")
        currents = solver.solve(v)
    cp = np.array([p[0] for p in pairs], dtype=int)
    cm = np.array([p[1] for p in pairs], dtype=int)
    full_scale = options.tile_full_scale(tile, cfg.v_max)
    codes, i_diff = _digitize_pairs(currents, cp, cm, cfg, full_scale, options)
    return ReadoutResult(currents=currents, codes=codes,
                         recovered=i_diff / (tile.scale * v_scale))


def _digitize_pairs(currents, cp, cm, cfg, full_scale, options):
    """ADC conversion, either per column or on the analog pair difference.

    Returns (codes, reconstructed differential currents); codes are per
    column in the first mode and per pair in the second.
    """
    if options.differential_adc:
        codes = adc_convert(currents[cp] - currents[cm], cfg.adc_bits, full_scale)
        return codes, adc_reconstruct(codes, cfg.adc_bits, full_scale)
    codes = adc_convert(currents, cfg.adc_bits, full_scale)
    i_hat = adc_reconstruct(codes, cfg.adc_bits, full_scale)
    return codes, i_hat[cp] - i_hat[cm]


def _layer_crossbar_forward(lp, tiles, solvers, x, x_fs, cfg, options,
                            recorder=None) -> np.ndarray:
    """Run one layer's pass schedule for a batch.

    x is (k, C, L) for conv layers or (k, features) for FC; the result is
    (k, n_outputs), accumulated over every (pass, read).
    """
    k = x.shape[0]
    if lp.kind is nn.LayerKind.CONV1D:
        xp = np.pad(x, ((0, 0), (0, 0), (lp.pad_left, lp.pad_right)))
        xflat = xp.reshape(k, -1)
    else:
        xflat = x.reshape(k, -1)
    xn = xflat / x_fs
    v_scale = cfg.v_max / x_fs
    y = np.zeros((k, lp.n_outputs))
    for ps in lp.passes:
        tile = tiles[ps.tile]
        v = np.zeros((tile.shape[0], k))
        rows = np.array([r for r, s in ps.drive if s != BIAS_DRIVE], dtype=int)
        srcs = np.array([s for r, s in ps.drive if s != BIAS_DRIVE], dtype=int)
        bias_rows = [r for r, s in ps.drive if s == BIAS_DRIVE]
        if rows.size:
            v[rows] = dac_convert(xn[:, srcs].T, cfg.dac_bits, cfg.v_max)
        for r in bias_rows:
            v[r] = cfg.v_max
        if cfg.r_line == 0 and cfg.r_source == 0:
            currents = vmm_ideal(tile.g, v, cfg.v_max)
        else:
            if np.any(np.abs(v) > cfg.v_max * (1 + 1e-9)):
                raise ValueError("voltage bound exceeded (DAC misconfiguration)")
            currents = solvers[ps.tile].solve(v)
        cp = np.array([c for c, _, _ in ps.reads], dtype=int)
        cm = np.array([c for _, c, _ in ps.reads], dtype=int)
        outs = np.array([o for _, _, o in ps.reads], dtype=int)
        if recorder is not None:
            recorder(ps.tile, currents[cp] - currents[cm])
        full_scale = options.tile_full_scale(tile, cfg.v_max, ps.tile)
        _, i_diff = _digitize_pairs(currents, cp, cm, cfg, full_scale, options)
        recovered = i_diff / (tile.scale * v_scale)
        np.add.at(y, (slice(None), outs), recovered.T)
    return y


def execute_batch(plan: MappingPlan, tiles: list[CrossbarTile],
                  samples: np.ndarray, cfg: NonIdealityConfig,
                  options: ExecutionOptions | None = None,
                  recorder=None) -> np.ndarray:
    """Full crossbar inference over the plan's pass schedule, batched.

    Conv outputs come back position by position (weight-stationary) or in
    a single presentation (staggered); pooling, ReLU, branch concatenation
    and the final logits mirror the reference dataflow, computed digitally.
    Readout variants (TDM vs parallelized) only change the cost model, not
    these numerics.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] != plan.spec.input_length:
        raise ValueError(f"inputs must have length {plan.spec.input_length}")
    if len(tiles) != plan.n_tiles:
        raise ValueError(f"expected {plan.n_tiles} programmed tiles, got {len(tiles)}")
    options = options or ExecutionOptions()
    solvers = [NodalSolver(t.g, cfg.r_line, cfg.r_source) for t in tiles]

    spec = plan.spec
    k = samples.shape[0]
    current = samples[:, None, :]  # (k, channels, length)
    for bi, block in enumerate(spec.blocks):
        pieces = []
        for branch in block.branches:
            lp = plan.layers[branch.name]
            flat = _layer_crossbar_forward(lp, tiles, solvers, current,
                                           plan.input_scales[branch.name],
                                           cfg, options, recorder)
            conv = flat.reshape(k, *lp.output_shape)
            pooled = _avgpool_batch(conv, block.pool.kernel_size, block.pool.stride)
            pieces.append(pooled)
        if bi < len(spec.blocks) - 1:
            shortest = min(p.shape[2] for p in pieces)
            current = np.concatenate([p[:, :, :shortest] for p in pieces], axis=1)
        else:
            current = np.concatenate([p.reshape(k, -1) for p in pieces], axis=1)

    vec = current.reshape(k, -1)
    for i, layer in enumerate(spec.fc):
        lp = plan.layers[layer.name]
        vec = _layer_crossbar_forward(lp, tiles, solvers, vec,
                                      plan.input_scales[layer.name], cfg, options,
                                      recorder)
        if i < len(spec.fc) - 1:
            vec = nn.relu(vec)
    return vec


def calibrate_adc_ranges(plan: MappingPlan, tiles: list[CrossbarTile],
                         samples: np.ndarray, cfg: NonIdealityConfig) -> np.ndarray:
    """Per-tile ADC full scale from the largest pair difference observed.

    Runs the sample set with conversion disabled, recording the raw
    differential currents every pass; the returned per-tile maxima can be
    passed as ExecutionOptions.adc_full_scale so a low-resolution ADC
    spends its levels on the range the workload actually produces.
    """
    peaks = np.zeros(plan.n_tiles)

    def record(tile_index, diff):
        peaks[tile_index] = max(peaks[tile_index], float(np.max(np.abs(diff))))

    probe_cfg = cfg.replace(adc_bits=None)
    execute_batch(plan, tiles, samples, probe_cfg, recorder=record)
    return np.where(peaks > 0, peaks, 1e-30)


def _avgpool_batch(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    n_out = (x.shape[2] - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)
    return windows[:, :, ::stride, :][:, :, :n_out, :].mean(axis=3)


def execute_network(plan: MappingPlan, tiles: list[CrossbarTile],
                    x: np.ndarray | nn.Signal, cfg: NonIdealityConfig,
                    options: ExecutionOptions | None = None) -> np.ndarray:
    """Single-sample crossbar inference; returns the logits vector."""
    if isinstance(x, nn.Signal):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("execute_network takes a single input vector")
    return execute_batch(plan, tiles, x[None, :], cfg, options)[0]
