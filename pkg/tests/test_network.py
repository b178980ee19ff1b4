"""Network assembly: encoder, unit stages, routing, full forward contracts."""

import numpy as np
import pytest

from mvenhance import network
from mvenhance.engine import tensor as T
from mvenhance.errors import ContractError, DataError, DimensionError
from mvenhance.losses import l_rec, l_total

from conftest import make_scene_views

TOY = dict(channels=4, units=2, top_k=2, patch=7, radius=1,
           se_reduction=4, encoder_depth=2)


def toy_params(seed=0, dtype=np.float32, **overrides):
    cfg = network.ModelConfig(**{**TOY, **overrides})
    return network.ModelParams.initialize(cfg, seed=seed, dtype=dtype)


def toy_views(seed=0, view=28):
    return make_scene_views(np.random.default_rng(seed), view=view)


class TestConfig:
    def test_validation(self):
        with pytest.raises(DataError):
            network.ModelConfig(units=0).validate()
        with pytest.raises(DataError):
            network.ModelConfig(channels=6, se_reduction=4).validate()
        with pytest.raises(DataError):
            network.ModelConfig.from_dict({"bogus": 1})

    def test_spatial_input_widths(self):
        cfg = network.ModelConfig(**TOY)
        assert cfg.spatial_in(0) == cfg.channels
        assert cfg.spatial_in(1) == 4 * cfg.channels
        assert network.ModelConfig(**{**TOY, "use_a2e": False}).spatial_in(1) == cfg.channels


class TestParams:
    def test_per_unit_parameters_not_shared(self):
        params = toy_params()
        assert not np.array_equal(params["u0.e2a.w"].data, params["u1.e2a.w"].data)

    def test_ablations_change_parameter_set(self):
        full = set(toy_params().names())
        no_inter = set(toy_params(use_inter=False).names())
        no_e2a = set(toy_params(use_e2a=False).names())
        no_intra = set(toy_params(use_intra=False).names())
        assert any(n.startswith("u0.fuse") for n in full)
        assert not any(n.startswith("u0.fuse") for n in no_inter)
        assert not any(n.startswith("u0.cof") for n in no_e2a)
        assert not any(n.startswith("u0.spatial") for n in no_intra)

    def test_aux_view_blocks_mirrored_at_init(self):
        params = toy_params()
        c = params.config.channels
        w = params["u0.wt.c1.w"].data
        np.testing.assert_array_equal(w[:, :c], w[:, 2 * c:3 * c])
        block = (params.config.top_k + 1) * c
        fr = params["u0.fuse.reduce.w"].data
        np.testing.assert_array_equal(fr[:, :block], fr[:, 2 * block:3 * block])

    def test_snapshot_roundtrip_via_arrays(self):
        params = toy_params(seed=3)
        rebuilt = network.ModelParams.from_arrays(params.config, params.as_arrays())
        for name in params.names():
            np.testing.assert_array_equal(rebuilt[name].data, params[name].data)

    def test_from_arrays_rejects_mismatch(self):
        params = toy_params()
        arrays = params.as_arrays()
        arrays.pop("head.w")
        with pytest.raises(DataError):
            network.ModelParams.from_arrays(params.config, arrays)


class TestEncoder:
    def test_identical_views_share_weights(self):
        params = toy_params()
        v = toy_views()[0]
        a = network.encode(params, network._image_to_tensor(v, np.float32))
        b = network.encode(params, network._image_to_tensor(v, np.float32))
        np.testing.assert_array_equal(a.data, b.data)

    def test_output_shape(self):
        params = toy_params()
        v = toy_views()[0]
        f = network.encode(params, network._image_to_tensor(v, np.float32))
        assert f.data.shape == (1, params.config.channels, 28, 28)

    def test_zero_input_zero_bias_gives_zero_features(self):
        params = toy_params()
        zero = T.Tensor(np.zeros((1, 3, 28, 28), dtype=np.float32))
        f = network.encode(params, zero)
        np.testing.assert_array_equal(f.data, np.zeros_like(f.data))


class TestIntraEn:
    def test_saturated_attention_doubles_features(self):
        params = toy_params()
        # drive both attention branches to ~1 via huge positive biases
        params["u0.spatial.c2.b"].data[:] = 40.0
        params["u0.se.fc2.b"].data[:] = 40.0
        f = T.Tensor(np.random.default_rng(0).standard_normal((1, 4, 14, 14)),
                     dtype=np.float32)
        out = network.intra_view_en(params, 0, f, None)
        np.testing.assert_allclose(out.data, 2.0 * f.data, rtol=1e-4, atol=1e-5)

    def test_zero_attention_is_residual_identity(self):
        params = toy_params()
        params["u0.spatial.c2.b"].data[:] = -40.0
        f = T.Tensor(np.random.default_rng(1).standard_normal((1, 4, 14, 14)),
                     dtype=np.float32)
        out = network.intra_view_en(params, 0, f, None)
        np.testing.assert_allclose(out.data, f.data, rtol=1e-4, atol=1e-5)

    def test_top1_contract(self):
        params = toy_params()
        f = T.Tensor(np.zeros((1, 4, 14, 14), dtype=np.float32))
        with pytest.raises(ContractError):
            network.intra_view_en(params, 1, f, None)  # unit 1 requires routed top-1
        with pytest.raises(ContractError):
            network.intra_view_en(params, 0, f, f)     # unit 0 takes none


class TestE2aConfidence:
    def test_zero_params_zero_prediction(self):
        params = toy_params()
        params["u0.e2a.w"].data[:] = 0.0
        params["u0.e2a.b"].data[:] = 0.0
        f = T.Tensor(np.random.default_rng(2).standard_normal((1, 4, 14, 14)),
                     dtype=np.float32)
        out = network.e2a_predict(params, 0, f)
        assert out.data.shape == (1, 3, 14, 14)
        np.testing.assert_array_equal(out.data, np.zeros_like(out.data))

    def test_confidence_in_open_unit_interval(self):
        params = toy_params()
        img = T.Tensor(np.random.default_rng(3).standard_normal((1, 3, 14, 14)),
                       dtype=np.float32)
        c = network.confidence_eval(params, 0, img)
        assert c.data.shape == (1, 1, 14, 14)
        assert np.all(c.data > 0.0) and np.all(c.data < 1.0)

    def test_confidence_constant_on_constant_input_interior(self):
        params = toy_params()
        img = T.Tensor(np.full((1, 3, 14, 14), 0.4, dtype=np.float32))
        c = network.confidence_eval(params, 0, img).data[0, 0]
        interior = c[2:-2, 2:-2]
        assert np.ptp(interior) <= 1e-6


class TestA2eRoute:
    def test_channel_count_and_slicing(self):
        rng = np.random.default_rng(4)
        tops = [T.Tensor(rng.standard_normal((1, 4, 14, 14)), dtype=np.float32)
                for _ in range(3)]
        routed = network.a2e_route(tops)
        assert routed.data.shape[1] == 12
        for i in range(3):
            np.testing.assert_array_equal(routed.data[:, 4 * i:4 * (i + 1)],
                                          tops[i].data)

    def test_needs_three_views(self):
        with pytest.raises(DimensionError):
            network.a2e_route([T.Tensor(np.zeros((1, 4, 8, 8)))] * 2)


class TestForward:
    def test_output_shape_matches_input(self):
        params = toy_params()
        views = toy_views()
        res = network.forward(params, views, primary=1)
        assert res.restored.data.shape == (1, 3, 28, 28)
        assert len(res.intermediates) == params.config.units
        for inter in res.intermediates:
            assert inter.data.shape == (1, 3, 28, 28)

    def test_deterministic(self):
        params = toy_params()
        views = toy_views()
        a = network.forward(params, views, primary=0).restored.data
        b = network.forward(params, views, primary=0).restored.data
        np.testing.assert_array_equal(a, b)

    def test_finite_on_random_init(self):
        for seed in (0, 1, 2):
            params = toy_params(seed=seed)
            res = network.forward(params, toy_views(seed), primary=1)
            assert np.all(np.isfinite(res.restored.data))
            for inter in res.intermediates:
                assert np.all(np.isfinite(inter.data))

    def test_single_unit_never_routes_top1(self):
        params = toy_params(units=1)
        res = network.forward(params, toy_views(), primary=1, collect_align=True)
        assert len(res.intermediates) == 1
        # a2e routing only exists between units; with one unit the spatial
        # branch of the only unit consumes plain features
        assert params.config.spatial_in(0) == params.config.channels

    def test_identical_views_fuse_to_finite_output(self):
        # degenerate input: all three views equal; self-matches dominate and
        # the fused result stays defined and finite
        params = toy_params(seed=6)
        v = toy_views(seed=6)[0]
        res = network.forward(params, [v, v.copy(), v.copy()], primary=1,
                              collect_align=True)
        assert np.all(np.isfinite(res.restored.data))
        matches = res.align_records[0][1]  # unit 0, self view
        rows, cols = matches.indices.shape[:2]
        for r in range(rows):
            for c in range(cols):
                assert tuple(matches.indices[r, c, 0]) == (r, c)

    def test_aux_swap_invariance_at_init(self):
        params = toy_params(seed=5)
        views = toy_views(seed=5)
        base = network.forward(params, views, primary=1).restored.data
        swapped = network.forward(params, [views[2], views[1], views[0]],
                                  primary=1).restored.data
        np.testing.assert_allclose(swapped, base, rtol=1e-4, atol=1e-5)

    def test_view_shape_mismatch(self):
        params = toy_params()
        views = toy_views()
        bad = [views[0], views[1], views[2][:20]]
        with pytest.raises(DimensionError):
            network.forward(params, bad, primary=1)

    def test_minimum_side(self):
        params = toy_params()
        tiny = [np.zeros((8, 8, 3), dtype=np.float32)] * 3
        with pytest.raises(DimensionError):
            network.forward(params, tiny, primary=1)

    def test_invalid_primary(self):
        params = toy_params()
        with pytest.raises(DataError):
            network.forward(params, toy_views(), primary=3)


class TestGradientFlow:
    def _loss(self, params, views, primary=1):
        res = network.forward(params, views, primary=primary)
        gt = T.Tensor(np.asarray(views[primary]).transpose(2, 0, 1)[None],
                      dtype=np.float32)
        return l_total(res.intermediates, res.restored, gt)

    def test_gradient_completeness(self):
        # every parameter must receive a nonzero gradient on at least one
        # random batch; run at full channel width (the toy 1-unit SE
        # bottleneck can start relu-dead, which is a width artifact)
        params = toy_params(seed=7, channels=16)
        alive = {name: False for name in params.names()}
        for seed in (7, 8, 9):
            T.backward(self._loss(params, toy_views(seed=seed)))
            for name, t in params.tensors.items():
                if t.grad is not None and np.any(t.grad != 0.0):
                    alive[name] = True
            T.zero_grads(params.tensors.values())
        dead = [name for name, ok in alive.items() if not ok]
        assert not dead, f"dead gradients across batches: {dead}"

    def test_auxiliary_views_reach_the_loss(self):
        params = toy_params(seed=8)
        views = toy_views(seed=8)
        base = float(self._loss(params, views).data)
        bumped = [views[0] + 0.05, views[1], views[2]]
        bumped[0] = np.clip(bumped[0], 0, 1)
        assert float(self._loss(params, bumped).data) != base

    def test_all_view_features_receive_gradient(self):
        # end to end, the loss must propagate into every view's features,
        # auxiliary ones included
        params = toy_params(seed=12)
        rng = np.random.default_rng(12)
        feats = [T.Tensor(rng.standard_normal((1, 4, 28, 28)),
                          requires_grad=True, dtype=np.float32) for _ in range(3)]
        gt = T.Tensor(rng.uniform(0, 1, (1, 3, 28, 28)), dtype=np.float32)
        restored, inters, _ = network.run_units(params, feats)
        T.backward(l_total(inters, restored, gt))
        for i, f in enumerate(feats):
            assert f.grad is not None and np.any(f.grad != 0.0), f"view {i} feature"

    def test_stage_supervision_cascade(self):
        # perturbing a unit-0 parameter must change every later intermediate
        params = toy_params(seed=9)
        views = toy_views(seed=9)
        before = [i.data.copy() for i in network.forward(params, views).intermediates]
        params["u0.e2a.w"].data[0, 0, 1, 1] += 0.05
        after = [i.data for i in network.forward(params, views).intermediates]
        assert not np.array_equal(before[0], after[0])
        assert not np.array_equal(before[1], after[1])

    def test_dropping_stage_term_changes_total(self):
        params = toy_params(seed=10)
        views = toy_views(seed=10)
        res = network.forward(params, views, primary=1)
        gt = T.Tensor(np.asarray(views[1]).transpose(2, 0, 1)[None], dtype=np.float32)
        full = float(l_total(res.intermediates, res.restored, gt).data)
        reduced = float(l_total(res.intermediates[:-1], res.restored, gt).data)
        assert full != reduced


class TestAblations:
    @pytest.mark.parametrize("toggles", [
        {"use_intra": False, "use_inter": False},
        {"use_intra": True, "use_inter": False},
        {"use_intra": False, "use_inter": True},
        {"use_e2a": False},
        {"use_a2e": False},
        {"use_e2a": False, "use_a2e": False},
    ])
    def test_ablated_configs_run_and_train(self, toggles):
        params = toy_params(seed=11, **toggles)
        views = toy_views(seed=11)
        res = network.forward(params, views, primary=2)
        assert np.all(np.isfinite(res.restored.data))
        gt = T.Tensor(np.asarray(views[2]).transpose(2, 0, 1)[None], dtype=np.float32)
        loss = l_total(res.intermediates, res.restored, gt)
        T.backward(loss)
        for name, t in params.tensors.items():
            assert t.grad is not None, f"no gradient for {name} under {toggles}"
