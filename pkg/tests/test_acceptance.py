"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each criterion reports a PASS/FAIL line in the terminal summary; the
tolerances here are contractual, not tunable.
"""

import collections
import json

import numpy as np
import pytest

import oracles
import teacher
from xbarsim import cli
from xbarsim import costmodel as cm
from xbarsim import crossbar as xb
from xbarsim import formats
from xbarsim import mapping as mp
from xbarsim import mitigation as mit
from xbarsim import network as nn

RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None:
        return
    reporter.ensure_newline()
    reporter.section("acceptance criteria", sep="=")
    for name, ok, detail in RESULTS:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        reporter.write_line(line, green=ok, red=not ok)


def check(name: str, ok: bool, detail: str):
    RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def spec():
    return nn.canonical_network()


def test_parameter_count(spec):
    count = nn.count_parameters(spec)
    check("parameter count", count == 10_778, f"count_parameters = {count}")


def test_mapping_budgets():
    _, c1a = mp.plan_conv_staggered(32, 32, 64, bias=True)
    _, c1b = mp.plan_conv_weight_stationary(32, 32, 64, bias=True)
    _, c2a = mp.plan_conv_staggered(32, 30, 64, bias=True)
    _, c2b = mp.plan_conv_weight_stationary(32, 30, 64, bias=True)
    _, f1 = mp.plan_fc(1088, 8, bias=True)
    _, f2 = mp.plan_fc(8, 2, bias=True)
    got = (c1a.cells_used, c1b.cells_used, c1a.cells_used // c1b.cells_used,
           c2a.cells_used, c2b.cells_used, c2a.cells_used // c2b.cells_used,
           f1.cells_used, f2.cells_used)
    want = (69_696, 2_112, 33, 69_440, 1_984, 35, 17_424, 36)
    check("mapping budgets", got == want, f"(a, b, ratio)x2 + fc = {got}")


def test_ideal_path_equivalence(spec):
    cfg = xb.NonIdealityConfig.ideal()
    plans = {s: mp.compile_network(spec, s) for s in mp.MappingScheme}
    rng = np.random.default_rng(777)
    worst = 0.0
    n_instances = 100
    for i in range(n_instances):
        params = nn.random_params(spec, rng, scale=0.25)
        x = rng.normal(size=64)
        want = nn.forward(spec, params, x)
        scales = xb.calibrate_input_scales(spec, params, x[None, :])
        denom = max(np.max(np.abs(want)), 1e-12)
        for scheme, base_plan in plans.items():
            plan = base_plan.with_input_scales(scales)
            image = xb.build_program_image(plan, params)
            tiles = xb.program_network(plan, image, cfg)
            got = xb.execute_network(plan, tiles, x, cfg)
            worst = max(worst, float(np.max(np.abs(got - want)) / denom))
    check("ideal-path equivalence", worst < 1e-6,
          f"max rel err over {n_instances} instances x 2 schemes = {worst:.3e}")


def test_nodal_solver_oracle():
    rng = np.random.default_rng(4242)
    worst = 0.0
    for _ in range(200):
        n, m = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        g = rng.uniform(1e-5, 1e-4, (n, m))
        v = rng.uniform(-0.3, 0.3, n)
        r_line = float(rng.uniform(0.1, 20.0))
        r_source = float(rng.uniform(0.1, 100.0))
        got = xb.vmm_nonideal(g, v, r_line, r_source)
        want = oracles.dense_kirchhoff(g, v, r_line, r_source)
        worst = max(worst, float(np.max(np.abs(got - want))
                                 / max(np.max(np.abs(want)), 1e-12)))
    g = rng.uniform(1e-5, 1e-4, (64, 64))
    v = rng.uniform(-0.3, 0.3, 64)
    zero = float(np.max(np.abs(xb.vmm_nonideal(g, v, 0.0, 0.0) - xb.vmm_ideal(g, v)))
                 / np.max(np.abs(xb.vmm_ideal(g, v))))
    check("nodal-solver oracle", worst < 1e-8 and zero < 1e-9,
          f"200 meshes vs dense Kirchhoff: {worst:.3e}; r=0 reduction: {zero:.3e}")


def test_quantizer_properties():
    bits, lo, hi = 6, -1.0, 1.0
    step = (hi - lo) / (2 ** bits - 1)
    xs = np.linspace(lo - 0.5, hi + 0.5, 120_001)
    q = nn.quantize_fixed(xs, bits, lo, hi)
    idempotent = np.array_equal(nn.quantize_fixed(q, bits, lo, hi), q)
    monotone = bool(np.all(np.diff(q) >= 0))
    in_range = (xs >= lo) & (xs <= hi)
    max_err = float(np.max(np.abs(xs[in_range] - q[in_range])))
    n_levels = int(np.unique(q).size)
    ok = idempotent and monotone and max_err <= step / 2 + 1e-15 and n_levels == 64
    check("quantizer properties", ok,
          f"idempotent={idempotent} monotone={monotone} "
          f"max_err={max_err:.3e} (half-step {step / 2:.3e}) levels={n_levels}")


def test_stuck_weight_offsetting(spec):
    # 100 seeded trials on random 64x64 weight matrices at 5% stuck
    fc = nn.LayerSpec(kind=nn.LayerKind.FULLY_CONNECTED, name="fc1",
                      in_features=64, out_features=64)
    mat_spec = nn.NetworkSpec(input_length=64, blocks=(), fc=(fc,),
                              alpha=(), beta=())
    plan = mp.compile_network(mat_spec, mp.MappingScheme.STAGGERED, max_tiles=None)
    wins = 0
    residual_ok = True
    for trial in range(100):
        rng = np.random.default_rng(9000 + trial)
        params = {"fc1": (rng.normal(size=(64, 64)), rng.normal(size=64))}
        image = xb.build_program_image(plan, params)
        cfg = xb.NonIdealityConfig.ideal(rng_seed=trial).replace(
            p_stuck_on=0.025, p_stuck_off=0.025)
        maps = xb.sample_stuck_maps(plan.n_tiles, cfg)
        adjusted, report = mit.offset_stuck_weights(plan, image, maps)
        tiles_m = xb.program_network(plan, adjusted, cfg, stuck_maps=maps)
        tiles_u = xb.program_network(plan, image, cfg, stuck_maps=maps)
        if mit.mean_weight_error(plan, image, tiles_m) < \
                mit.mean_weight_error(plan, image, tiles_u):
            wins += 1
        if trial < 5:  # per-placement non-degradation, spot checked
            for lp in plan.layers.values():
                for p in lp.placements:
                    target = (image.targets[p.tile][p.row, p.col_plus]
                              - image.targets[p.tile][p.row, p.col_minus])
                    after = (tiles_m[p.tile].g[p.row, p.col_plus]
                             - tiles_m[p.tile].g[p.row, p.col_minus])
                    before = (tiles_u[p.tile].g[p.row, p.col_plus]
                              - tiles_u[p.tile].g[p.row, p.col_minus])
                    if abs(after - target) > abs(before - target) + 1e-18:
                        residual_ok = False
    _, rep_offset = mit.offset_stuck_weights(plan, image, maps)
    _, rep_base = mit.inner_fault_tolerance_baseline(plan, image, maps)
    passes_ok = rep_offset.write_passes == 1 and rep_base.write_passes == 2

    # qualitative accuracy recovery on the synthetic separable task
    tspec, tparams, X, labels = teacher.make_teacher(seed=21, n_samples=40,
                                                     margin=1.0)
    scales = xb.calibrate_input_scales(tspec, tparams, X)
    net_plan = mp.compile_network(tspec, mp.MappingScheme.WEIGHT_STATIONARY,
                                  input_scales=scales)
    rows = mit.evaluate_mitigation(tspec, tparams, net_plan, X, labels,
                                   stuck_rates=[0.01, 0.05, 0.10],
                                   seeds=[5, 6, 7, 8, 9])
    acc = collections.defaultdict(list)
    for r in rows:
        acc[(r["stuck_rate"], r["mitigated"])].append(r["accuracy"])
    recovery_ok = all(np.mean(acc[(rate, 1)]) >= np.mean(acc[(rate, 0)])
                      for rate in (0.01, 0.05, 0.10))
    deltas = {rate: np.mean(acc[(rate, 1)]) - np.mean(acc[(rate, 0)])
              for rate in (0.01, 0.05, 0.10)}
    check("stuck-weight offsetting",
          wins >= 95 and residual_ok and passes_ok and recovery_ok,
          f"error wins {wins}/100; residual non-degrading={residual_ok}; "
          f"write passes 1 vs 2={passes_ok}; recovery deltas="
          + ", ".join(f"{k:.0%}: {v:+.3f}" for k, v in deltas.items()))


def test_cost_model_reproduction(spec):
    plan = mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY)
    tdm_on = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.ALL_ON)
    tdm_mid = cm.total_cost(plan, cm.Variant.TDM, cm.Scenario.MIDPOINT)
    par_on = cm.total_cost(plan, cm.Variant.PARALLELIZED, cm.Scenario.ALL_ON)
    par_mid = cm.total_cost(plan, cm.Variant.PARALLELIZED, cm.Scenario.MIDPOINT)

    def within(got, want, tol):
        return abs(got - want) <= tol * want

    ok = all([
        within(tdm_on.total_area_mm2, 31.3, 0.01),
        within(tdm_on.total_power_mw, 2790.0, 0.01),
        within(par_on.total_area_mm2, 322.0, 0.01),
        within(par_on.total_power_mw, 7210.0, 0.01),
        abs(cm.crossbar_pass_latency(cm.Scenario.ALL_ON) - 2.03e-3) < 1e-12,
        abs(cm.crossbar_pass_latency(cm.Scenario.MIDPOINT) - 6.07e-3) < 1e-12,
        within(tdm_mid.total_latency_us, 445.0, 0.10),
        within(tdm_mid.total_energy_uj, 1240.0, 0.10),
        within(par_mid.total_latency_us, 1.13, 0.10),
        within(par_mid.total_energy_uj, 8.12, 0.10),
        tdm_mid.total_latency_us / par_mid.total_latency_us > 100,
    ])
    check("cost-model reproduction", ok,
          f"TDM {tdm_on.total_area_mm2:.2f} mm2 / {tdm_on.total_power_mw:.0f} mW, "
          f"Par {par_on.total_area_mm2:.1f} mm2 / {par_on.total_power_mw:.0f} mW, "
          f"Mid latency {tdm_mid.total_latency_us:.1f} / "
          f"{par_mid.total_latency_us:.3f} us "
          f"(ratio {tdm_mid.total_latency_us / par_mid.total_latency_us:.0f}), "
          f"Mid energy {tdm_mid.total_energy_uj:.0f} / {par_mid.total_energy_uj:.2f} uJ")


def test_cli_determinism(tmp_path):
    tspec, params, X, labels = teacher.make_teacher(seed=8, n_samples=16,
                                                    margin=1.0)
    weights = tmp_path / "net.mxw1"
    inputs = tmp_path / "eval.mxi1"
    formats.write_weights(weights, params,
                          order=[l.name for l in tspec.weighted_layers])
    formats.write_inputs(inputs, X, labels)
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"r_line": 0.0, "r_source": 0.0,
                                  "write_sigma": 0.02, "p_stuck_on": 0.01}))

    commands = {
        "infer": ["infer", "--weights", weights, "--inputs", inputs,
                  "--config", config, "--seed", "11", "--trials", "2"],
        "sweep": ["sweep", "--weights", weights, "--inputs", inputs,
                  "--config", config, "--knob", "write_sigma",
                  "--values", "0,0.05", "--seeds", "5,6"],
        "cost": ["cost", "--weights", weights, "--variant", "tdm",
                 "--scenario", "mid"],
        "plan": ["plan", "--weights", weights, "--scheme", "stationary"],
        "mitigate": ["mitigate", "--weights", weights, "--inputs", inputs,
                     "--config", config, "--rates", "0.02", "--seeds", "5,6"],
    }
    identical = True
    details = []
    for name, argv in commands.items():
        blobs = []
        for attempt in ("a", "b"):
            out = tmp_path / name / attempt
            code = cli.main([str(a) for a in argv] + ["--out", str(out)])
            assert code == 0
            blob = b"".join(p.read_bytes()
                            for p in sorted(out.rglob("*")) if p.is_file())
            blobs.append(blob)
        same = blobs[0] == blobs[1]
        identical &= same
        details.append(f"{name}={'ok' if same else 'DIFFERS'}")
    check("CLI determinism", identical, ", ".join(details))
