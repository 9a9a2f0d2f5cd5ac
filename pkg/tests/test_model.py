import numpy as np
import pytest

import sparsegnn as sg
from sparsegnn.errors import InputError, NumericalError
from sparsegnn.model import _layer_forward, loss_and_grads

from conftest import er_diffusion, rand_features


def dense_gcn_forward(T, X, weights):
    """Reference forward: H <- relu(T H W) per layer, linear last layer."""
    Td = T.to_dense()
    H = X
    for i, W in enumerate(weights):
        Z = (Td @ H) @ W
        H = np.maximum(Z, 0.0) if i < len(weights) - 1 else Z
    return H


def toy_two_cluster():
    """Two 4-cliques joined by one edge; features separate the clusters."""
    src, dst = [], []
    for base in (0, 4):
        for i in range(4):
            for j in range(4):
                if i != j:
                    src.append(base + i)
                    dst.append(base + j)
    src += [3, 4]
    dst += [4, 3]
    g = sg.add_self_loops(sg.from_edges(8, src, dst))
    T = sg.normalize_adjacency(g, 0.5)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((8, 4)) * 0.05
    X[:4, 0] += 1.0
    X[4:, 1] += 1.0
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    splits = {"train": [0, 1, 4, 5], "val": [2, 6], "test": [3, 7]}
    return T, X, labels, splits


class TestForward:
    def test_dense_oracle_zero_thresholds(self):
        for seed, n in [(0, 8), (1, 24), (2, 64)]:
            T = er_diffusion(n, seed)
            X = rand_features(n, 6, seed + 30)
            model = sg.GcnModel.init([6, 5, 3], seed)
            trace = sg.forward_sparsified(model, T, X, sg.ThresholdPolicy(), skip=False)
            want = dense_gcn_forward(T, X, [l.W for l in model.layers])
            err = np.linalg.norm(trace.logits - want) / np.linalg.norm(want)
            assert err < 1e-6

    def test_huge_delta_w_gives_constant_logits(self):
        T = er_diffusion(10, 3)
        X = rand_features(10, 4, 4)
        model = sg.GcnModel.init([4, 4, 3], 0)
        trace = sg.forward_sparsified(model, T, X,
                                      sg.ThresholdPolicy(delta_w=1e12))
        np.testing.assert_array_equal(trace.logits, 0.0)
        assert all(l.kept_weights == 0 for l in trace.layers)

    def test_single_layer_identity_weight(self):
        T = er_diffusion(6, 5)
        X = rand_features(6, 3, 6)
        model = sg.GcnModel([sg.LayerSpec(3, 3, np.eye(3))])
        policy = sg.ThresholdPolicy(delta_a=0.1)
        trace = sg.forward_sparsified(model, T, X, policy, skip=True)
        mask, _ = sg.sparsify_edges_nodewise(T, X, 0.1, sg.full_mask(T))
        want = sg.masked_spmm(T, mask, X, skip_connection=True)
        np.testing.assert_array_equal(trace.logits, want)

    def test_trans_flops_invariant(self):
        T = er_diffusion(12, 7)
        X = rand_features(12, 5, 8)
        model = sg.GcnModel.init([5, 4, 2], 1)
        trace = sg.forward_sparsified(model, T, X,
                                      sg.ThresholdPolicy(delta_a=0.05, delta_w=0.2))
        for lt, layer in zip(trace.layers, model.layers):
            total = layer.in_dim * layer.out_dim
            assert lt.kept_weights == round(total * (1.0 - lt.eta_w))
            assert lt.trans_flops == 2 * T.n * lt.kept_weights
            assert lt.prop_flops == 2 * lt.kept_edges * layer.in_dim + T.n * layer.in_dim


class TestMlpForward:
    def test_dense_oracle(self):
        H0 = rand_features(9, 4, 9)
        model = sg.GcnModel.init([4, 6, 3], 2)
        trace = sg.mlp_forward(model, H0, 0.0)
        Z = np.maximum(H0 @ model.layers[0].W, 0.0) @ model.layers[1].W
        err = np.linalg.norm(trace.logits - Z) / np.linalg.norm(Z)
        assert err < 1e-12

    def test_zero_input_zero_logits(self):
        model = sg.GcnModel.init([4, 3], 3)
        trace = sg.mlp_forward(model, np.zeros((5, 4)), 0.0)
        np.testing.assert_array_equal(trace.logits, 0.0)

    def test_one_hot_columns_gather(self):
        H0 = rand_features(7, 3, 10)
        W = np.zeros((3, 2))
        W[2, 0] = 1.0
        W[0, 1] = 1.0
        model = sg.GcnModel([sg.LayerSpec(3, 2, W)])
        trace = sg.mlp_forward(model, H0, 0.0)
        np.testing.assert_array_equal(trace.logits, H0[:, [2, 0]])


class TestGradients:
    def _fixture(self):
        T = er_diffusion(6, 11)
        X = rand_features(6, 5, 12)
        labels = np.array([0, 1, 0, 1, 1, 0])
        ids = np.arange(6)
        model = sg.GcnModel.init([5, 4, 2], 4)
        return T, X, labels, ids, model

    def test_backprop_matches_finite_differences(self):
        """Central differences (eps=1e-4) against the fixed-mask gradient on
        every weight of a 2-layer model, pruned entries included."""
        T, X, labels, ids, model = self._fixture()
        policy = sg.ThresholdPolicy(delta_a=0.05, delta_w=0.1)
        wd = 0.01
        state = _layer_forward(model, T, X, policy.delta_a, policy.delta_w,
                               True, False)
        e_masks, w_keeps = state.edge_masks, state.weight_keeps
        T_pair = sg.transpose(T)
        loss, dWs, _ = loss_and_grads(model, state, labels, ids, wd, T_pair, True)

        def loss_at(pert_model):
            st = _layer_forward(pert_model, T, X, 0.0, 0.0, True, False,
                                edge_masks=e_masks, weight_keeps=w_keeps)
            l, _, _ = loss_and_grads(pert_model, st, labels, ids, wd, T_pair, True)
            return l

        eps = 1e-4
        for li, layer in enumerate(model.layers):
            for j in range(layer.in_dim):
                for i in range(layer.out_dim):
                    pert = model.copy()
                    pert.layers[li].W[j, i] += eps
                    up = loss_at(pert)
                    pert.layers[li].W[j, i] -= 2 * eps
                    down = loss_at(pert)
                    fd = (up - down) / (2 * eps)
                    got = dWs[li][j, i]
                    if not w_keeps[li][j, i]:
                        assert got == 0.0
                        assert abs(fd) < 1e-10
                    else:
                        denom = max(abs(fd), abs(got), 1e-8)
                        assert abs(fd - got) / denom < 1e-4, (li, j, i)

    def test_pruned_weights_zero_gradient(self):
        T, X, labels, ids, model = self._fixture()
        state = _layer_forward(model, T, X, 0.0, 0.5, True, False)
        _, dWs, _ = loss_and_grads(model, state, labels, ids, 0.0,
                                   sg.transpose(T), True)
        for keep, dW in zip(state.weight_keeps, dWs):
            assert np.array_equal(dW[~keep], np.zeros(int((~keep).sum())))


class TestTrain:
    def test_toy_reaches_full_train_accuracy(self):
        T, X, labels, splits = toy_two_cluster()
        model = sg.GcnModel.init([4, 8, 2], 0)
        cfg = sg.TrainConfig(epochs=200, learning_rate=0.5, seed=0,
                             hidden_width=8, layer_depth=2)
        best, report = sg.train(model, T, X, labels, splits, cfg,
                                sg.ThresholdPolicy())
        assert report.accuracy["train"] == 1.0

    def test_zero_learning_rate_keeps_weights(self):
        T, X, labels, splits = toy_two_cluster()
        model = sg.GcnModel.init([4, 8, 2], 0)
        cfg = sg.TrainConfig(epochs=5, learning_rate=0.0, seed=0,
                             hidden_width=8, layer_depth=2)
        best, _ = sg.train(model, T, X, labels, splits, cfg, sg.ThresholdPolicy())
        for before, after in zip(model.layers, best.layers):
            np.testing.assert_array_equal(before.W, after.W)

    def test_deterministic_given_seed(self):
        T, X, labels, splits = toy_two_cluster()
        runs = []
        for _ in range(2):
            model = sg.GcnModel.init([4, 8, 2], 7)
            cfg = sg.TrainConfig(epochs=30, learning_rate=0.3, seed=7,
                                 hidden_width=8, layer_depth=2)
            _, report = sg.train(model, T, X, labels, splits, cfg,
                                 sg.ThresholdPolicy(delta_a=0.02, delta_w=0.01))
            runs.append(report)
        assert runs[0].epochs == runs[1].epochs
        assert runs[0].accuracy == runs[1].accuracy

    def test_divergence_aborts_with_epoch(self):
        T, X, labels, splits = toy_two_cluster()
        model = sg.GcnModel.init([4, 8, 2], 0)
        cfg = sg.TrainConfig(epochs=50, learning_rate=1e12, seed=0,
                             hidden_width=8, layer_depth=2)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalError):
                sg.train(model, T, X, labels, splits, cfg, sg.ThresholdPolicy())

    def test_weight_prune_schedule(self):
        T, X, labels, splits = toy_two_cluster()
        model = sg.GcnModel.init([4, 8, 2], 1)
        cfg = sg.TrainConfig(epochs=10, learning_rate=0.2, seed=1,
                             hidden_width=8, layer_depth=2,
                             weight_prune=sg.WeightPruneSchedule(delta_w=0.5,
                                                                 start_epoch=5))
        _, report = sg.train(model, T, X, labels, splits, cfg, sg.ThresholdPolicy())
        # before start_epoch only exact-zero products count as pruned
        # (ReLU-dead embedding columns); the threshold kicks in at epoch 5
        early = report.epochs[4]["eta_w"]
        late = report.epochs[5]["eta_w"]
        assert sum(late) > sum(early)
        assert report.epochs[0]["eta_w"] == early


class TestJointErrorTrend:
    def test_deviation_monotone_in_thresholds(self):
        """Output deviation from the unpruned forward never decreases when
        either threshold grows (5-point grids, ties allowed)."""
        T = er_diffusion(16, 21)
        X = rand_features(16, 6, 22)
        model = sg.GcnModel.init([6, 5, 3], 5)
        base = sg.forward_sparsified(model, T, X, sg.ThresholdPolicy()).logits

        def dev(da, dw):
            t = sg.forward_sparsified(model, T, X,
                                      sg.ThresholdPolicy(delta_a=da, delta_w=dw))
            return np.linalg.norm(t.logits - base)

        grid = [0.0, 0.02, 0.05, 0.1, 0.2]
        for fixed_dw in (0.0, 0.05):
            seq = [dev(da, fixed_dw) for da in grid]
            assert all(a <= b + 1e-9 for a, b in zip(seq, seq[1:]))
        for fixed_da in (0.0, 0.05):
            seq = [dev(fixed_da, dw) for dw in grid]
            assert all(a <= b + 1e-9 for a, b in zip(seq, seq[1:]))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        model = sg.GcnModel.init([5, 4, 2], 9)
        path = tmp_path / "model.bin"
        sg.save_checkpoint(model, path)
        back = sg.load_checkpoint(path)
        assert [(l.in_dim, l.out_dim) for l in back.layers] == [(5, 4), (4, 2)]
        for a, b in zip(model.layers, back.layers):
            np.testing.assert_allclose(a.W, b.W, atol=1e-6)

    def test_truncated_rejected(self, tmp_path):
        model = sg.GcnModel.init([3, 2], 0)
        path = tmp_path / "model.bin"
        sg.save_checkpoint(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(InputError):
            sg.load_checkpoint(path)
