import numpy as np
import pytest

from xbarsim import crossbar as xb
from xbarsim import mapping as mp
from xbarsim import network as nn

WINDOW = (1e-5, 1e-4)


class TestDifferentialPair:
    def test_zero_weight(self):
        pair = mp.map_weight_to_pair(0.0, 1e-5, WINDOW)
        assert pair == mp.DifferentialPair(1e-5, 1e-5)
        assert mp.pair_to_weight(pair, 1e-5) == 0.0

    def test_full_scale_positive(self):
        scale = (WINDOW[1] - WINDOW[0]) / 2.0
        pair = mp.map_weight_to_pair(2.0, scale, WINDOW)
        assert pair.g_plus == pytest.approx(WINDOW[1])
        assert pair.g_minus == WINDOW[0]

    def test_roundtrip_1000_random(self, rng):
        w = rng.uniform(-3, 3, 1000)
        scale = (WINDOW[1] - WINDOW[0]) / 3.0
        for wi in w:
            pair = mp.map_weight_to_pair(wi, scale, WINDOW)
            assert abs(mp.pair_to_weight(pair, scale) - wi) < 1e-12

    def test_window_overflow_raises(self):
        with pytest.raises(mp.MappingError):
            mp.map_weight_to_pair(2.0, 1e-4, WINDOW)


class TestConvBudgets:
    def test_staggered_conv1(self):
        _, b = mp.plan_conv_staggered(32, 32, 64, bias=True)
        assert b.cells_used == 69_696
        assert b.pass_count == 1

    def test_staggered_conv2(self):
        _, b = mp.plan_conv_staggered(32, 30, 64, bias=True)
        assert b.cells_used == 69_440

    def test_staggered_degenerate(self):
        _, b = mp.plan_conv_staggered(1, 1, 1, bias=True)
        assert b.cells_used == 4
        assert b.pass_count == 1

    def test_stationary_conv1(self):
        _, b = mp.plan_conv_weight_stationary(32, 32, 64, bias=True)
        assert b.cells_used == 2_112
        assert b.pass_count == 33

    def test_stationary_conv2(self):
        _, b = mp.plan_conv_weight_stationary(32, 30, 64, bias=True)
        assert b.cells_used == 1_984
        assert b.pass_count == 35

    def test_stationary_degenerate(self):
        _, b = mp.plan_conv_weight_stationary(1, 1, 4, bias=False)
        assert b.cells_used == 2
        assert b.pass_count == 4

    def test_stationary_tile_overflow(self):
        with pytest.raises(mp.MappingError, match="exceeds one"):
            mp.plan_conv_weight_stationary(33, 32, 64)
        with pytest.raises(mp.MappingError, match="exceeds one"):
            mp.plan_conv_weight_stationary(4, 63, 64, bias=True)

    def test_staggered_equals_positions_times_stationary(self):
        # bias-free area identity behind the published 33x/35x ratios
        for k in (32, 30, 7):
            _, stag = mp.plan_conv_staggered(8, k, 64, bias=False)
            _, stat = mp.plan_conv_weight_stationary(8, k, 64, bias=False)
            assert stag.cells_used == stat.pass_count * stat.cells_used


class TestFcBudgets:
    def test_fc1(self):
        lp, b = mp.plan_fc(1088, 8)
        assert b.cells_used == 17_424
        assert len(lp.tiles_used) == 5
        assert b.pass_count == 4
        # 17 sections of 64x16
        weight_rows = {(p.tile, p.col_plus // 16) for p in lp.placements
                       if p.index[0] == "w"}
        assert len(weight_rows) == 17

    def test_fc2(self):
        lp, b = mp.plan_fc(8, 2)
        assert b.cells_used == 36
        assert len(lp.tiles_used) == 1
        assert b.pass_count == 1

    def test_tiny_fc(self):
        _, b = mp.plan_fc(1, 1)
        assert b.cells_used == 4

    def test_wide_fc_splits_outputs(self):
        lp, b = mp.plan_fc(64, 64, bias=False)
        assert b.cells_used == 64 * 64 * 2
        assert len(lp.tiles_used) == 2


class TestCompareSchemes:
    def test_conv1_tradeoff(self):
        comp = mp.compare_schemes(32, 32, 64)
        assert comp.staggered.cells_used // comp.weight_stationary.cells_used == 33
        assert comp.weight_stationary.pass_count == 33
        assert comp.recommendation is mp.MappingScheme.WEIGHT_STATIONARY

    def test_conv2_tradeoff(self):
        comp = mp.compare_schemes(32, 30, 64)
        assert comp.staggered.cells_used // comp.weight_stationary.cells_used == 35
        assert comp.weight_stationary.pass_count == 35

    def test_single_position_identical(self):
        comp = mp.compare_schemes(4, 8, 8)
        assert comp.staggered.cells_used == comp.weight_stationary.cells_used
        assert comp.weight_stationary.pass_count == 1
        assert comp.recommendation is mp.MappingScheme.STAGGERED


class TestCompileNetwork:
    def test_canonical_seven_tiles(self, canonical_spec):
        plan = mp.compile_network(canonical_spec, mp.MappingScheme.WEIGHT_STATIONARY)
        assert plan.n_tiles == 7
        # conv1 + fc2 share tile 0, conv2 on tile 1, fc1 on tiles 2-6
        assert plan.layers["conv1"].tiles_used == (0,)
        assert plan.layers["fc2"].tiles_used == (0,)
        assert plan.layers["conv2"].tiles_used == (1,)
        assert plan.layers["fc1"].tiles_used == (2, 3, 4, 5, 6)

    def test_total_cells(self, canonical_spec):
        plan = mp.compile_network(canonical_spec, mp.MappingScheme.WEIGHT_STATIONARY)
        assert plan.total_cells_used == 2_112 + 1_984 + 17_424 + 36

    def test_no_placement_collisions(self, canonical_spec):
        for scheme in mp.MappingScheme:
            plan = mp.compile_network(canonical_spec, scheme)
            seen = set()
            for lp in plan.layers.values():
                for p in lp.placements:
                    for col in (p.col_plus, p.col_minus):
                        key = (p.tile, p.row, col)
                        assert key not in seen
                        seen.add(key)
                        assert 0 <= p.row < 64 and 0 <= col < 64

    def test_every_parameter_placed(self, canonical_spec):
        plan = mp.compile_network(canonical_spec, mp.MappingScheme.WEIGHT_STATIONARY)
        shapes = nn.trace_shapes(canonical_spec)
        for layer in canonical_spec.weighted_layers:
            sh = shapes[layer.name]
            if layer.kind is nn.LayerKind.CONV1D:
                n_params = sh.out_channels * (sh.in_channels * layer.kernel_size + 1)
            else:
                n_params = layer.out_features * (layer.in_features + 1)
            indices = {p.index for p in plan.layers[layer.name].placements}
            assert len(indices) == n_params

    def test_tile_budget_enforced(self):
        spec = nn.build_network_architecture(64, 64, 1, 2, [32], [32])
        # fc1 1088x32 sections are a full tile wide: 17 tiles + bias host,
        # far past the 8-tile budget of the weight-stationary layout
        with pytest.raises(mp.MappingError, match="budget"):
            mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY)
        plan = mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY,
                                  max_tiles=32)
        assert plan.n_tiles > 8

    def test_stride_guard(self):
        conv = nn.LayerSpec(kind=nn.LayerKind.CONV1D, name="conv1",
                            in_channels=1, out_channels=2, kernel_size=3,
                            stride=2)
        block = nn.ConvBlockSpec(branches=(conv,), pool=nn.LayerSpec(
            kind=nn.LayerKind.AVGPOOL1D, name="pool1", kernel_size=2, stride=2))
        spec = nn.NetworkSpec(input_length=16, blocks=(block,), fc=(
            nn.LayerSpec(kind=nn.LayerKind.FULLY_CONNECTED, name="fc1",
                         in_features=6, out_features=2),), alpha=(3,), beta=())
        with pytest.raises(mp.MappingError, match="stride"):
            mp.compile_network(spec, mp.MappingScheme.WEIGHT_STATIONARY)

    def test_plan_json_roundtrip(self, canonical_spec, canonical_params, rng):
        plan = mp.compile_network(canonical_spec, mp.MappingScheme.WEIGHT_STATIONARY)
        back = mp.plan_from_json(plan.to_json())
        assert back.scheme is mp.MappingScheme.WEIGHT_STATIONARY
        assert back.n_tiles == 7
        assert back.budgets["conv1"].cells_used == 2_112
        assert back.budgets["fc1"].pass_count == 4
        assert back.layers["conv1"].placements == plan.layers["conv1"].placements
        assert back.layers["fc1"].passes == plan.layers["fc1"].passes
        # a reconstructed plan programs and executes identically
        x = rng.normal(size=64)
        cfg = xb.NonIdealityConfig.ideal()
        a = xb.execute_network(plan, xb.program_network(
            plan, xb.build_program_image(plan, canonical_params), cfg), x, cfg)
        b = xb.execute_network(back, xb.program_network(
            back, xb.build_program_image(back, canonical_params), cfg), x, cfg)
        np.testing.assert_array_equal(a, b)


class TestDecompile:
    @pytest.mark.parametrize("scheme", list(mp.MappingScheme))
    def test_roundtrip_exact(self, canonical_spec, canonical_params, scheme):
        plan = mp.compile_network(canonical_spec, scheme)
        image = xb.build_program_image(plan, canonical_params)
        tiles = xb.program_network(plan, image, xb.NonIdealityConfig.ideal())
        back = xb.decompile_network(plan, tiles)
        for name, (w, b) in canonical_params.items():
            np.testing.assert_allclose(back[name][0], w, atol=1e-12)
            np.testing.assert_allclose(back[name][1], b, atol=1e-12)

    def test_scheme_equivalence_on_ideal_crossbar(self, canonical_spec,
                                                  canonical_params, rng):
        cfg = xb.NonIdealityConfig.ideal()
        x = rng.normal(size=64)
        scales = xb.calibrate_input_scales(canonical_spec, canonical_params,
                                           x[None, :])
        outs = {}
        for scheme in mp.MappingScheme:
            plan = mp.compile_network(canonical_spec, scheme, input_scales=scales)
            image = xb.build_program_image(plan, canonical_params)
            tiles = xb.program_network(plan, image, cfg)
            outs[scheme] = xb.execute_network(plan, tiles, x, cfg)
        a, b = outs[mp.MappingScheme.STAGGERED], outs[mp.MappingScheme.WEIGHT_STATIONARY]
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
