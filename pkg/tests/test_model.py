import numpy as np
import pytest

from weightedgcl import (ConfigError, GranularitySchedule, ModelParams, aggregate_mean,
                         compute_layer_views, excite, forward, granularity_dims,
                         init_params, load_checkpoint, perturb, recalibrate,
                         save_checkpoint, squeeze)
from weightedgcl.graph import BipartiteGraph, build_adjacency

import reference


class TestGranularityDims:
    @pytest.mark.parametrize("levels,expected", [
        (1, [1, 64]),
        (2, [1, 8, 64]),
        (3, [1, 4, 16, 64]),
        (4, [1, 3, 8, 23, 64]),
    ])
    def test_d64_ladders(self, levels, expected):
        assert granularity_dims(64, levels) == expected

    def test_small_dims(self):
        assert granularity_dims(8, 2) == [1, 3, 8]
        assert granularity_dims(8, 3) == [1, 2, 4, 8]

    def test_clamping_keeps_strict_increase(self):
        for d in range(5, 80):
            for levels in range(1, 5):
                dims = granularity_dims(d, levels)
                assert dims[0] == 1 and dims[-1] == d
                assert all(b > a for a, b in zip(dims, dims[1:]))

    def test_too_small_dim_rejected(self):
        with pytest.raises(ConfigError):
            granularity_dims(3, 4)

    def test_levels_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            granularity_dims(64, 5)

    def test_schedule_consistency_check(self):
        with pytest.raises(ConfigError):
            GranularitySchedule(64, 2, [1, 9, 64])


class TestInitParams:
    def test_shapes_bounds_and_zero_biases(self):
        schedule = GranularitySchedule(64, 4)
        params = init_params(30, 64, schedule, seed=0)
        assert params.embeddings.shape == (64, 30)
        bound = np.sqrt(6.0 / (30 + 64))
        assert np.abs(params.embeddings).max() <= bound
        assert params.dims == [1, 3, 8, 23, 64]
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            fan_in, fan_out = schedule.dims[k], schedule.dims[k + 1]
            assert w.shape == (fan_out, fan_in)
            assert np.abs(w).max() <= np.sqrt(6.0 / (fan_in + fan_out))
            assert not b.any()

    def test_deterministic_per_seed(self):
        schedule = GranularitySchedule(8, 2)
        a = init_params(12, 8, schedule, seed=5)
        b = init_params(12, 8, schedule, seed=5)
        c = init_params(12, 8, schedule, seed=6)
        np.testing.assert_array_equal(a.embeddings, b.embeddings)
        assert not np.array_equal(a.embeddings, c.embeddings)


def single_edge_adj():
    return build_adjacency(BipartiteGraph(1, 1, [(0, 0)]))


class TestLayerViews:
    def test_two_swaps_recover_base(self):
        params = init_params(2, 3, GranularitySchedule(3, 1), seed=1)
        views = compute_layer_views(single_edge_adj(), params, 2)
        np.testing.assert_allclose(views[2], views[0], atol=1e-15)

    def test_zero_embeddings_stay_zero(self):
        params = init_params(2, 3, GranularitySchedule(3, 1), seed=1)
        params.embeddings[:] = 0.0
        views = compute_layer_views(single_edge_adj(), params, 3)
        assert not any(v.any() for v in views)

    def test_matches_repeated_dense_application(self, tiny_instance):
        t = tiny_instance
        views = compute_layer_views(t["adj"], t["params"], 3)
        dense = reference.dense_normalized_adjacency(t["num_users"], t["num_items"], t["edges"])
        expected = t["params"].embeddings
        for view in views[1:]:
            expected = reference.dense_propagate(dense, expected)
            np.testing.assert_allclose(view, expected, atol=1e-10)

    def test_zero_layers_rejected(self, tiny_instance):
        with pytest.raises(ConfigError):
            compute_layer_views(tiny_instance["adj"], tiny_instance["params"], 0)


class TestAggregateMean:
    def test_identical_views_unchanged(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(aggregate_mean([x, x.copy(), x.copy()]), x)

    def test_opposite_views_cancel(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        assert not aggregate_mean([x, -x]).any()

    def test_constant_views_average(self):
        views = [np.full((2, 2), c) for c in (1.0, 2.0, 3.0)]
        np.testing.assert_array_equal(aggregate_mean(views), np.full((2, 2), 2.0))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            aggregate_mean([np.zeros((2, 2)), np.zeros((2, 3))])


class TestPerturb:
    def views(self, rng, n_layers=2, d=4, n=6):
        return [rng.normal(size=(d, n)) for _ in range(n_layers + 1)]

    def test_none_mode_is_exact_identity(self):
        rng = np.random.default_rng(0)
        views = self.views(rng)
        f_bar, f_tilde, record = perturb(views, "none", rng)
        f = aggregate_mean(views)
        np.testing.assert_array_equal(f_bar, f)
        np.testing.assert_array_equal(f_tilde, f)
        assert record.bar == [] and record.tilde == []

    def test_final_mode_shifts_only_by_scaled_noise(self):
        rng = np.random.default_rng(1)
        views = self.views(rng, n_layers=2)
        f = aggregate_mean(views)
        f_bar, f_tilde, record = perturb(views, "final", rng)
        # (f + x) - f re-rounds, so the comparison is tight but not bitwise
        np.testing.assert_allclose(f_bar - f, record.bar[0] / 3.0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(f_tilde - f, record.tilde[0] / 3.0, rtol=0, atol=1e-15)
        for delta in record.bar + record.tilde:
            assert delta.min() >= 0.0 and delta.max() < 1.0
        assert ((f_bar - f) >= 0.0).all() and ((f_bar - f) < 1.0 / 3.0).all()

    def test_branches_draw_independent_noise(self):
        rng = np.random.default_rng(2)
        _, _, record = perturb(self.views(rng), "final", rng)
        assert not np.array_equal(record.bar[0], record.tilde[0])

    def test_replay_and_seed_determinism(self):
        views = self.views(np.random.default_rng(3))
        a = perturb(views, "final", np.random.default_rng(9))
        b = perturb(views, "final", np.random.default_rng(9))
        np.testing.assert_array_equal(a[0], b[0])
        replayed = perturb(views, "final", None, noise=a[2])
        np.testing.assert_array_equal(replayed[0], a[0])
        np.testing.assert_array_equal(replayed[1], a[1])

    def test_all_mode_noises_every_layer(self):
        rng = np.random.default_rng(4)
        views = self.views(rng, n_layers=2)
        f = aggregate_mean(views)
        f_bar, _, record = perturb(views, "all", rng)
        assert len(record.bar) == len(record.tilde) == 3
        np.testing.assert_allclose(f_bar - f, sum(record.bar) / 3.0, atol=1e-15)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            perturb(self.views(np.random.default_rng(5)), "sometimes", np.random.default_rng(0))


class TestSqueezeExciteRecalibrate:
    def test_squeeze_column_mean(self):
        view = np.array([[1.0], [2.0], [3.0], [4.0]])
        np.testing.assert_array_equal(squeeze(view), [[2.5]])
        assert squeeze(np.zeros((3, 2))).tolist() == [[0.0, 0.0]]
        np.testing.assert_array_equal(squeeze(np.full((5, 3), 7.0)), np.full((1, 3), 7.0))

    def test_zero_network_outputs_half(self):
        params = init_params(4, 6, GranularitySchedule(6, 2), seed=0)
        for w in params.weights:
            w[:] = 0.0
        t = excite(np.array([[0.3, -1.0, 2.0]]), params)
        np.testing.assert_array_equal(t, np.full((6, 3), 0.5))

    def test_single_layer_hand_case(self):
        params = ModelParams(
            embeddings=np.zeros((2, 1)),
            weights=[np.array([[0.5], [0.5]])],
            biases=[np.array([-1.0, -1.0])],
        )
        t = excite(np.array([[2.0]]), params)
        np.testing.assert_allclose(t, np.full((2, 1), 0.5), atol=1e-15)

    def test_matches_node_by_node_oracle(self):
        params = init_params(5, 8, GranularitySchedule(8, 2), seed=3)
        s = np.random.default_rng(4).normal(size=(1, 5))
        expected = reference.mlp_gate(s, params.weights, params.biases)
        np.testing.assert_allclose(excite(s, params), expected, atol=1e-12)

    def test_node_permutation_equivariance(self):
        params = init_params(6, 8, GranularitySchedule(8, 3), seed=5)
        s = np.random.default_rng(6).normal(size=(1, 6))
        perm = np.random.default_rng(7).permutation(6)
        np.testing.assert_array_equal(excite(s[:, perm], params), excite(s, params)[:, perm])

    def test_recalibrate_cases(self):
        t = np.array([[0.2, 0.4], [0.6, 0.8]])
        f = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(recalibrate(t, f), [[0.2, 0.8], [1.8, 3.2]], atol=1e-15)
        assert not recalibrate(t, np.zeros((2, 2))).any()
        np.testing.assert_array_equal(recalibrate(np.full((2, 2), 0.5), f), f / 2.0)
        with pytest.raises(ValueError):
            recalibrate(t, np.zeros((3, 2)))


class TestForward:
    def test_zero_gate_params_halve_clean_aggregate(self, tiny_instance):
        t = tiny_instance
        params = t["params"].copy()
        for w in params.weights:
            w[:] = 0.0
        state = forward(t["adj"], params, t["n_layers"], "none")
        np.testing.assert_array_equal(state.r_bar, 0.5 * state.aggregated)
        np.testing.assert_array_equal(state.r_tilde, 0.5 * state.aggregated)

    def test_matches_monolithic_dense_pipeline(self, tiny_instance):
        t = tiny_instance
        state = forward(t["adj"], t["params"], t["n_layers"], "final", np.random.default_rng(8))
        expected = reference.dense_pipeline(
            t["params"].embeddings, t["params"].weights, t["params"].biases,
            t["edges"], t["num_users"], t["num_items"], t["n_layers"],
            state.noise.bar, state.noise.tilde, "final")
        for key in ("f", "f_bar", "f_tilde", "s_bar", "s_tilde", "t_bar", "t_tilde",
                    "r_bar", "r_tilde"):
            attr = "aggregated" if key == "f" else key
            np.testing.assert_allclose(getattr(state, attr), expected[key], atol=1e-10,
                                       err_msg=key)

    def test_deterministic_per_seed(self, tiny_instance):
        t = tiny_instance
        a = forward(t["adj"], t["params"], 2, "final", np.random.default_rng(11))
        b = forward(t["adj"], t["params"], 2, "final", np.random.default_rng(11))
        np.testing.assert_array_equal(a.r_bar, b.r_bar)
        np.testing.assert_array_equal(a.r_tilde, b.r_tilde)

    def test_branch_stability_and_gate_range(self, tiny_instance):
        t = tiny_instance
        state = forward(t["adj"], t["params"], 2, "final", np.random.default_rng(12))
        # only the final-layer term moves either branch away from the mean
        np.testing.assert_allclose(state.f_bar - state.aggregated,
                                   state.noise.bar[0] / 3.0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(state.f_tilde - state.aggregated,
                                   state.noise.tilde[0] / 3.0, rtol=0, atol=1e-15)
        for gate in (state.t_bar, state.t_tilde):
            assert gate.min() > 0.0 and gate.max() < 1.0
        np.testing.assert_array_equal(np.sign(state.r_bar), np.sign(state.f_bar))

    def test_missing_rng_rejected(self, tiny_instance):
        t = tiny_instance
        with pytest.raises(ConfigError):
            forward(t["adj"], t["params"], 2, "final")


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tiny_instance, tmp_path):
        params = tiny_instance["params"]
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, 3, path)
        loaded, header = load_checkpoint(path)
        assert header == {"num_nodes": params.num_nodes, "d": params.d,
                          "K": params.levels, "dims": params.dims, "L": 3}
        np.testing.assert_array_equal(loaded.embeddings, params.embeddings)
        for a, b in zip(loaded.weights, params.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(loaded.biases, params.biases):
            np.testing.assert_array_equal(a, b)
