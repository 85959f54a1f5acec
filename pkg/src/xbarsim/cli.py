"""Command-line surface: infer, sweep, cost, plan, mitigate.

All data goes to files under --out; diagnostics go to stderr.  Every
command is deterministic given its config and seed, so reruns produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import crossbar as xb
from . import costmodel as cm
from . import formats
from . import mapping as mp
from . import metrics as mx
from . import mitigation as mit
from . import network as nn

_SCHEMES = {
    "staggered": mp.MappingScheme.STAGGERED,
    "stationary": mp.MappingScheme.WEIGHT_STATIONARY,
}
_VARIANTS = {"tdm": cm.Variant.TDM, "parallel": cm.Variant.PARALLELIZED}
_SCENARIOS = {"on": cm.Scenario.ALL_ON, "mid": cm.Scenario.MIDPOINT}

_INT_KNOBS = {"dac_bits", "adc_bits", "write_bits", "rng_seed"}


class CliError(Exception):
    pass


def _spec_from_weights(params: nn.NetworkParams, order: list[str]) -> nn.NetworkSpec:
    """Reconstruct the architecture-family member a weight file describes."""
    conv_names = [n for n in order if n.startswith("conv")]
    fc_names = [n for n in order if n.startswith("fc")]
    if len(conv_names) != 2 or not fc_names:
        raise CliError(
            f"expected two conv layers and at least one fc layer, "
            f"found conv={conv_names} fc={fc_names}"
        )
    k1 = params[conv_names[0]][0].shape[2]
    k2 = params[conv_names[1]][0].shape[2]
    filters = params[conv_names[0]][0].shape[0]
    m = k1 + k2 + 2
    beta = [params[n][0].shape[1] for n in fc_names[:-1]]
    try:
        spec = nn.build_network_architecture(m, 2 * filters, 1, len(fc_names),
                                             [k1], beta, parallel=True)
    except ValueError as exc:
        raise CliError(f"weight shapes do not describe a valid network: {exc}")
    for layer in spec.weighted_layers:
        if layer.name not in params:
            raise CliError(f"weight file missing layer {layer.name}")
        w, b = params[layer.name]
        if layer.kind is nn.LayerKind.CONV1D:
            want = (layer.out_channels, layer.in_channels, layer.kernel_size)
        else:
            want = (layer.in_features, layer.out_features)
        if tuple(w.shape) != want:
            raise CliError(
                f"layer {layer.name}: weight shape {tuple(w.shape)} does not "
                f"match expected {want}"
            )
        n_bias = (layer.out_channels if layer.kind is nn.LayerKind.CONV1D
                  else layer.out_features)
        if b.shape != (n_bias,):
            raise CliError(f"layer {layer.name}: bias length {b.shape[0]} != {n_bias}")
    return spec


def _load_config(path: str | None, seed: int | None) -> xb.NonIdealityConfig:
    if path is None:
        cfg = xb.NonIdealityConfig()
    else:
        cfg = xb.NonIdealityConfig.from_json(Path(path).read_text())
    if seed is not None:
        cfg = cfg.replace(rng_seed=seed)
    return cfg


def _prepare(args, cfg):
    """Shared load-compile path for commands that run the simulator."""
    params, order = formats.read_weights(args.weights)
    spec = _spec_from_weights(params, order)
    samples, labels = formats.read_inputs(args.inputs)
    if samples.shape[1] != spec.input_length:
        raise CliError(
            f"input length {samples.shape[1]} does not match network input "
            f"{spec.input_length}"
        )
    if not np.all(np.isfinite(samples)):
        raise CliError("input samples contain non-finite values")
    scales = xb.calibrate_input_scales(spec, params, samples)
    plan = mp.compile_network(spec, _SCHEMES[args.scheme], input_scales=scales)
    image = xb.build_program_image(plan, params)
    return spec, params, samples, labels, plan, image


def _readout_options(args, plan, image, samples, cfg) -> xb.ExecutionOptions:
    """Readout datapath options from the CLI flags.

    The calibrated range mode measures per-tile differential peaks on a
    nominally programmed (fault- and noise-free) array, the reference a
    deployment would calibrate against; the measured ranges are then
    reused for every trial, keeping runs deterministic.
    """
    differential = args.adc_mode == "differential"
    if args.adc_range == "calibrated":
        nominal_cfg = cfg.replace(write_bits=None, write_sigma=0.0,
                                  p_stuck_on=0.0, p_stuck_off=0.0)
        nominal = xb.program_network(plan, image, nominal_cfg)
        ranges = xb.calibrate_adc_ranges(plan, nominal, samples, nominal_cfg)
        return xb.ExecutionOptions(adc_full_scale=tuple(ranges),
                                   differential_adc=differential)
    return xb.ExecutionOptions(adc_full_scale=args.adc_range,
                               differential_adc=differential)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}", file=sys.stderr)


def _json_dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_infer(args) -> int:
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    cfg = _load_config(args.config, args.seed)
    spec, params, samples, labels, plan, image = _prepare(args, cfg)
    options = _readout_options(args, plan, image, samples, cfg)
    out = Path(args.out)

    per_trial = []
    logits = None
    for trial in range(args.trials):
        trial_cfg = cfg.replace(rng_seed=cfg.rng_seed + trial)
        tiles = xb.program_network(plan, image, trial_cfg)
        trial_logits = xb.execute_batch(plan, tiles, samples, trial_cfg, options)
        if logits is None:
            logits = trial_logits
        if labels is not None:
            per_trial.append(mx.classification_metrics(trial_logits, labels,
                                                       hours=args.hours))

    rows = ["sample,logit0,logit1,predicted"]
    preds = np.argmax(logits, axis=1)
    for i, (row, p) in enumerate(zip(logits, preds)):
        rows.append(f"{i},{row[0]:.9e},{row[1]:.9e},{int(p)}")
    _write(out / "predictions.csv", "\n".join(rows) + "\n")

    if labels is not None:
        doc = {"trials": args.trials, "first_trial": per_trial[0]}
        if args.trials > 1:
            keys = [k for k, v in per_trial[0].items() if isinstance(v, float)]
            doc["mean"] = {k: float(np.mean([t[k] for t in per_trial])) for k in keys}
            doc["std"] = {k: float(np.std([t[k] for t in per_trial])) for k in keys}
        _write(out / "metrics.json", _json_dumps(doc))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if args.knob not in [f.name for f in xb.NonIdealityConfig.__dataclass_fields__.values()]:
        raise CliError(f"unknown knob {args.knob!r}; valid: "
                       f"{', '.join(xb.NonIdealityConfig.__dataclass_fields__)}")
    if args.knob == "rng_seed":
        raise CliError("rng_seed is swept via --seeds, not as a knob")
    spec, params, samples, labels, plan, image = _prepare(args, cfg)
    if labels is None:
        raise CliError("sweep requires labeled inputs")
    options = _readout_options(args, plan, image, samples, cfg)
    seeds = [int(s) for s in args.seeds.split(",")]

    values = []
    for raw in args.values.split(","):
        raw = raw.strip().lower()
        if raw in ("none", "null", "inf"):
            values.append(None)
        elif args.knob in _INT_KNOBS:
            values.append(int(raw))
        else:
            values.append(float(raw))

    rows = [("knob", "value", "mean_accuracy", "std_accuracy", "n_seeds")]
    for value in values:
        accs = []
        for seed in seeds:
            run_cfg = cfg.replace(**{args.knob: value}, rng_seed=seed)
            tiles = xb.program_network(plan, image, run_cfg)
            logits = xb.execute_batch(plan, tiles, samples, run_cfg, options)
            accs.append(float(np.mean(np.argmax(logits, axis=1) == labels)))
        rows.append((args.knob, "" if value is None else value,
                     f"{np.mean(accs):.6f}", f"{np.std(accs):.6f}", len(seeds)))
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    _write(Path(args.out) / "sweep.csv", text)
    return 0


def cmd_cost(args) -> int:
    params, order = formats.read_weights(args.weights)
    spec = _spec_from_weights(params, order)
    plan = mp.compile_network(spec, _SCHEMES[args.scheme])
    table = None
    if args.components:
        rows = json.loads(Path(args.components).read_text())
        table = [cm.ComponentSpec(
            name=r["name"], spec_label=r.get("spec", ""), count=r["count"],
            unit_area_mm2=r["unit_area_mm2"], unit_power_mw=r["unit_power_mw"],
            unit_latency_us=r["unit_latency_us"]) for r in rows]
    report = cm.total_cost(plan, _VARIANTS[args.variant],
                           _SCENARIOS[args.scenario], table=table)
    out = Path(args.out)
    _write(out / "cost.json", report.to_json() + "\n")
    _write(out / "cost.txt", report.to_text())
    return 0


def cmd_plan(args) -> int:
    params, order = formats.read_weights(args.weights)
    spec = _spec_from_weights(params, order)
    plan = mp.compile_network(spec, _SCHEMES[args.scheme])
    out = Path(args.out)
    _write(out / "plan.json", plan.to_json() + "\n")

    shapes = nn.trace_shapes(spec)
    lines = [f"{'Layer':<8} {'Scheme(a)':>12} {'Scheme(b)':>12} "
             f"{'AreaReduction':>14} {'ComputeIncrease':>16}"]
    for block in spec.blocks:
        for branch in block.branches:
            sh = shapes[branch.name]
            comp = mp.compare_schemes(branch.out_channels, branch.kernel_size,
                                      sh.in_length, bias=True)
            ratio = comp.staggered.cells_used / comp.weight_stationary.cells_used
            lines.append(
                f"{branch.name:<8} {comp.staggered.cells_used:>12,} "
                f"{comp.weight_stationary.cells_used:>12,} "
                f"{ratio:>13.0f}x {comp.weight_stationary.pass_count:>15d}x"
            )
    for fc in spec.fc:
        cells = plan.budgets[fc.name].cells_used
        lines.append(f"{fc.name:<8} {cells:>12,} {cells:>12,} "
                     f"{'None':>14} {'None':>16}")
    lines.append(f"{'total':<8} tiles={plan.n_tiles} "
                 f"cells_used={plan.total_cells_used:,} (scheme {plan.scheme.value})")
    _write(out / "budgets.txt", "\n".join(lines) + "\n")
    return 0


def cmd_mitigate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    spec, params, samples, labels, plan, image = _prepare(args, cfg)
    if labels is None:
        raise CliError("mitigate requires labeled inputs")
    options = _readout_options(args, plan, image, samples, cfg)
    rates = [float(r) for r in args.rates.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]

    rows = mit.evaluate_mitigation(spec, params, plan, samples, labels,
                                   rates, seeds, base_cfg=cfg, options=options)
    out = Path(args.out)
    _write(out / "mitigation.csv", mit.sweep_rows_to_csv(rows))

    reports = []
    for rate in rates:
        for seed in seeds:
            run_cfg = cfg.replace(p_stuck_on=rate / 2, p_stuck_off=rate / 2,
                                  rng_seed=seed)
            stuck = xb.sample_stuck_maps(plan.n_tiles, run_cfg)
            _, report = mit.offset_stuck_weights(plan, image, stuck)
            reports.append({"stuck_rate": rate, "seed": seed,
                            **report.to_dict()})
    _write(out / "repair_reports.json", _json_dumps(reports))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbarsim",
        description="Crossbar simulator for the parallel 1D-CNN accelerator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, inputs=True, config=True):
        p.add_argument("--weights", required=True, help="MXW1 weight file")
        if inputs:
            p.add_argument("--inputs", required=True, help="MXI1 sample file")
        if config:
            p.add_argument("--config", help="NonIdealityConfig JSON file")
            p.add_argument("--seed", type=int, help="override config rng_seed")
            p.add_argument("--adc-mode", choices=["column", "differential"],
                           default="column",
                           help="per-column conversion with digital subtraction "
                                "(default) or analog subtract-then-convert")
            p.add_argument("--adc-range",
                           choices=["worst_case", "column_sum", "calibrated"],
                           default="worst_case",
                           help="ADC full-scale convention")
        p.add_argument("--scheme", choices=sorted(_SCHEMES), default="stationary")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("infer", help="run inference and write predictions/metrics")
    add_common(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--hours", type=float, help="recording hours, enables FP/hour")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="sweep one non-ideality knob across seeds")
    add_common(p)
    p.add_argument("--knob", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="5,6,7,8,9")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", help="emit the power/area/latency/energy report")
    add_common(p, inputs=False, config=False)
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="tdm")
    p.add_argument("--scenario", choices=sorted(_SCENARIOS), default="on")
    p.add_argument("--components", help="JSON component table override")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("plan", help="compile and export the mapping plan")
    add_common(p, inputs=False, config=False)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("mitigate", help="stuck-device sweep with/without repair")
    add_common(p)
    p.add_argument("--rates", default="0.01,0.05,0.10")
    p.add_argument("--seeds", default="5,6,7,8,9")
    p.set_defaults(func=cmd_mitigate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, formats.FormatError, mp.MappingError, xb.ConfigError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
