"""Cells, encoders, head, losses, full forward/backward."""

import math

import numpy as np
import pytest

from fbrnn.candidates import BranchSplit
from fbrnn.corpus import LabelSet
from fbrnn.embeddings import Branch
from fbrnn.errors import ConfigurationError
from fbrnn.model import (
    BranchEncoder,
    ModelConfig,
    build_model,
    gru_step,
    lstm_step,
    sigmoid_bce,
    softmax_nll,
    tiny_gradcheck,
)
from fbrnn.numerics import Mode, ParamStore, Rng


def make_gru_layer(store, d_in, h, rng, prefix="cell"):
    from fbrnn.model import _build_layer

    return _build_layer(store, prefix, "gru", d_in, h, rng)


def make_lstm_layer(store, d_in, h, rng, prefix="cell"):
    from fbrnn.model import _build_layer

    return _build_layer(store, prefix, "lstm", d_in, h, rng)


def zero_layer(layer):
    for name in vars(layer):
        getattr(layer, name).values.fill(0.0)


# -- independent scalar re-implementations (the oracle) ----------------------


def scalar_sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_affine(W, U, b, x, h):
    out = []
    for i in range(len(b)):
        acc = b[i]
        for j in range(len(x)):
            acc += W[i][j] * x[j]
        for j in range(len(h)):
            acc += U[i][j] * h[j]
        out.append(acc)
    return out


def scalar_gru(x, h_prev, p):
    z = [scalar_sigmoid(v) for v in scalar_affine(p.W_z.values, p.U_z.values, p.b_z.values, x, h_prev)]
    r = [scalar_sigmoid(v) for v in scalar_affine(p.W_r.values, p.U_r.values, p.b_r.values, x, h_prev)]
    rh = [r[i] * h_prev[i] for i in range(len(h_prev))]
    hc = [math.tanh(v) for v in scalar_affine(p.W_c.values, p.U_c.values, p.b_c.values, x, rh)]
    return [(1 - z[i]) * h_prev[i] + z[i] * hc[i] for i in range(len(h_prev))]


def scalar_lstm(x, h_prev, c_prev, p):
    i = [scalar_sigmoid(v) for v in scalar_affine(p.W_i.values, p.U_i.values, p.b_i.values, x, h_prev)]
    f = [scalar_sigmoid(v) for v in scalar_affine(p.W_f.values, p.U_f.values, p.b_f.values, x, h_prev)]
    o = [scalar_sigmoid(v) for v in scalar_affine(p.W_o.values, p.U_o.values, p.b_o.values, x, h_prev)]
    g = [math.tanh(v) for v in scalar_affine(p.W_g.values, p.U_g.values, p.b_g.values, x, h_prev)]
    c = [f[k] * c_prev[k] + i[k] * g[k] for k in range(len(c_prev))]
    h = [o[k] * math.tanh(c[k]) for k in range(len(c_prev))]
    return h, c


class TestGruStep:
    def test_zero_weights_halve_hidden_state(self):
        store = ParamStore()
        layer = make_gru_layer(store, 3, 4, Rng(0))
        zero_layer(layer)
        h_prev = np.array([1.0, -2.0, 0.5, 4.0])
        h_new, _ = gru_step(np.zeros(3), h_prev, layer)
        assert np.max(np.abs(h_new - 0.5 * h_prev)) < 1e-12

    def test_zero_state_zero_weights(self):
        store = ParamStore()
        layer = make_gru_layer(store, 3, 4, Rng(0))
        zero_layer(layer)
        h_new, _ = gru_step(np.ones(3), np.zeros(4), layer)
        assert np.array_equal(h_new, np.zeros(4))

    def test_matches_scalar_oracle(self):
        store = ParamStore()
        rng = Rng(31)
        layer = make_gru_layer(store, 3, 4, rng)
        x = np.asarray(rng.uniform(-1, 1, 3))
        h_prev = np.asarray(rng.uniform(-1, 1, 4))
        h_new, _ = gru_step(x, h_prev, layer)
        oracle = scalar_gru(list(x), list(h_prev), layer)
        assert np.allclose(h_new, oracle, atol=1e-12)

    def test_shape_mismatch_fatal(self):
        store = ParamStore()
        layer = make_gru_layer(store, 3, 4, Rng(0))
        with pytest.raises(ConfigurationError):
            gru_step(np.zeros(5), np.zeros(4), layer)


class TestLstmStep:
    def test_zero_weight_closed_form(self):
        store = ParamStore()
        layer = make_lstm_layer(store, 3, 4, Rng(0))
        zero_layer(layer)
        c_prev = np.array([1.0, -2.0, 0.5, 4.0])
        h_new, c_new, _ = lstm_step(np.zeros(3), np.zeros(4), c_prev, layer)
        assert np.max(np.abs(c_new - 0.5 * c_prev)) < 1e-12
        assert np.max(np.abs(h_new - 0.5 * np.tanh(0.5 * c_prev))) < 1e-12

    def test_zero_cell_zero_weights(self):
        store = ParamStore()
        layer = make_lstm_layer(store, 3, 4, Rng(0))
        zero_layer(layer)
        h_new, c_new, _ = lstm_step(np.ones(3), np.zeros(4), np.zeros(4), layer)
        assert np.array_equal(h_new, np.zeros(4))

    def test_matches_scalar_oracle(self):
        store = ParamStore()
        rng = Rng(47)
        layer = make_lstm_layer(store, 3, 4, rng)
        x = np.asarray(rng.uniform(-1, 1, 3))
        h_prev = np.asarray(rng.uniform(-1, 1, 4))
        c_prev = np.asarray(rng.uniform(-1, 1, 4))
        h_new, c_new, _ = lstm_step(x, h_prev, c_prev, layer)
        oracle_h, oracle_c = scalar_lstm(list(x), list(h_prev), list(c_prev), layer)
        assert np.allclose(h_new, oracle_h, atol=1e-12)
        assert np.allclose(c_new, oracle_c, atol=1e-12)


class TestBranchEncoder:
    def build(self, kind, backward=False, layers=1, seed=3):
        store = ParamStore()
        rng = Rng(seed)
        enc = BranchEncoder.build(
            Branch.RIGHT if backward else Branch.NUGGET, kind, 3, 4, layers, store, rng
        )
        return enc, store, rng

    def test_empty_branch_is_zero_vector(self):
        enc, _, _ = self.build("gru")
        rep, _ = enc.encode([])
        assert np.array_equal(rep, np.zeros(4))

    def test_single_token_is_one_step_from_zero(self):
        enc, _, rng = self.build("gru")
        x = np.asarray(rng.uniform(-1, 1, 3))
        rep, _ = enc.encode([x])
        expected, _ = gru_step(x, np.zeros(4), enc.layers[0])
        assert np.array_equal(rep, expected)

    @pytest.mark.parametrize("kind", ["gru", "lstm"])
    def test_backward_equals_forward_on_reversed(self, kind):
        enc, _, rng = self.build(kind, backward=True)
        forward_twin = BranchEncoder(Branch.NUGGET, kind, 4, enc.layers, backward=False)
        for _ in range(20):
            seq = [np.asarray(rng.uniform(-1, 1, 3)) for _ in range(1 + rng.randint(6))]
            rep_b, _ = enc.encode(seq)
            rep_f, _ = forward_twin.encode(list(reversed(seq)))
            assert np.max(np.abs(rep_b - rep_f)) < 1e-12

    @pytest.mark.parametrize("kind", ["gru", "lstm"])
    def test_stacked_layers_gradcheck(self, kind):
        from fbrnn.numerics import grad_check

        enc, store, rng = self.build(kind, layers=2, seed=11)
        xs = [np.asarray(rng.uniform(-1, 1, 3)) for _ in range(4)]
        readout = np.asarray(rng.uniform(-1, 1, 4))

        def loss_fn():
            rep, cache = enc.encode(xs)
            enc.backprop(readout.copy(), cache)
            return float(rep @ readout)

        report = grad_check(loss_fn, store, eps=2e-4)
        assert report.max_rel_error < 1e-4


class TestHeadAndLosses:
    def test_zero_weights_give_uniform_softmax(self):
        labels = LabelSet([f"T{i}" for i in range(33)])  # 34 classes
        cfg = ModelConfig(hidden_size=4, word_dim=5, branch_dim=2, dropout=0.0)
        model = build_model(cfg, ["alpha", "beta"], labels, Rng(0))
        for name in model.store.names():
            if name.startswith("head."):
                model.store[name].values.fill(0.0)
        probs = model.predict_proba(BranchSplit(("alpha",), ("beta",), ()))
        assert probs.shape == (34,)
        assert np.allclose(probs, 1 / 34, atol=1e-12)

    def test_eval_mode_deterministic(self):
        labels = LabelSet(["A", "B"])
        cfg = ModelConfig(hidden_size=4, word_dim=5, branch_dim=2, dropout=0.5)
        model = build_model(cfg, ["x", "y", "z"], labels, Rng(1))
        split = BranchSplit(("x",), ("y",), ("z",))
        assert np.array_equal(model.predict_proba(split), model.predict_proba(split))

    def test_loss_uniform_34_classes(self):
        probs = np.full(34, 1 / 34)
        loss, _ = softmax_nll(probs, 7)
        assert loss == pytest.approx(math.log(34.0), abs=1e-12)

    def test_loss_confident_is_zero(self):
        probs = np.zeros(5)
        probs[2] = 1.0
        loss, _ = softmax_nll(probs, 2)
        assert loss == 0.0

    def test_loss_clamped_at_zero_probability(self):
        probs = np.zeros(3)
        probs[0] = 1.0
        loss, _ = softmax_nll(probs, 2)
        assert loss == pytest.approx(-math.log(1e-12))

    def test_sigmoid_bce_all_half(self):
        probs = np.full(38, 0.5)
        loss, _ = sigmoid_bce(probs, np.zeros(38))
        assert loss == pytest.approx(38 * math.log(2.0), rel=1e-12)

    def test_softmax_probs_sum_to_one(self):
        labels = LabelSet(["A", "B", "C"])
        cfg = ModelConfig(hidden_size=3, word_dim=4, branch_dim=2)
        model = build_model(cfg, ["u", "v", "w"], labels, Rng(5))
        for words in ((("u",), ("v",), ("w",)), ((), ("u", "v"), ()), ((), ("w",), ())):
            probs = model.predict_proba(BranchSplit(*words))
            assert abs(probs.sum() - 1.0) <= 1e-12


class TestPredict:
    def make_sigmoid_model(self):
        labels = LabelSet(["A", "B", "C"])
        cfg = ModelConfig(
            hidden_size=3, word_dim=4, branch_dim=2, head_mode="sigmoid", dropout=0.0
        )
        return build_model(cfg, ["u", "v"], labels, Rng(2)), labels

    def test_uniform_softmax_tie_breaks_to_lowest_index(self):
        labels = LabelSet(["A", "B"])
        cfg = ModelConfig(hidden_size=3, word_dim=4, branch_dim=2, dropout=0.0)
        model = build_model(cfg, ["u"], labels, Rng(3))
        for name in model.store.names():
            if name.startswith("head."):
                model.store[name].values.fill(0.0)
        # all classes tie at 1/3; lowest index is the non-event class
        assert model.predict(BranchSplit((), ("u",), ())) == ()

    def test_sigmoid_all_below_threshold_is_non_event(self):
        model, _ = self.make_sigmoid_model()
        for name in model.store.names():
            if name.startswith("head."):
                model.store[name].values.fill(0.0)
        model.store["head.out.b"].values[:] = -10.0
        assert model.predict(BranchSplit((), ("u",), ())) == ()

    def test_sigmoid_two_types_above_threshold(self):
        model, _ = self.make_sigmoid_model()
        for name in model.store.names():
            if name.startswith("head."):
                model.store[name].values.fill(0.0)
        model.store["head.out.b"].values[:] = [10.0, 10.0, -10.0]
        assert model.predict(BranchSplit((), ("u",), ())) == ("A", "B")


class TestForwardBackward:
    def build(self, **over):
        labels = LabelSet(["A", "B", "C"])
        cfg = ModelConfig(
            hidden_size=4, word_dim=5, branch_dim=2, dropout=0.0, **over
        )
        words = ["w0", "w1", "w2", "w3", "w4", "w5"]
        model = build_model(cfg, words, labels, Rng(9))
        return model, words

    def test_empty_side_branches_leave_their_params_untouched(self):
        model, words = self.build()
        split = BranchSplit((), tuple(words[:3]), ())
        model.store.zero_grads()
        model.forward_backward(split, ("B",), Mode.EVAL)
        for name in model.store.names():
            grad = model.store[name].grad
            if name.startswith(("left.", "right.")):
                assert not grad.any(), name
        assert model.store["nugget.l0.W_z.".rstrip(".")].grad.any()

    def test_accumulation_is_additive(self):
        model, words = self.build()
        ex1 = (BranchSplit((words[0],), (words[1],), (words[2],)), ("A",))
        ex2 = (BranchSplit((), (words[3], words[4]), (words[5],)), ())
        model.store.zero_grads()
        model.forward_backward(*ex1, Mode.EVAL)
        g1 = {n: model.store[n].grad.copy() for n in model.store.names()}
        model.store.zero_grads()
        model.forward_backward(*ex2, Mode.EVAL)
        g2 = {n: model.store[n].grad.copy() for n in model.store.names()}
        model.store.zero_grads()
        model.forward_backward(*ex1, Mode.EVAL)
        model.forward_backward(*ex2, Mode.EVAL)
        # additive up to float addition order (rows touched more than once)
        for n in model.store.names():
            assert np.allclose(
                model.store[n].grad, g1[n] + g2[n], rtol=1e-9, atol=1e-12
            ), n

    def test_embedding_gradients_flow_only_into_used_rows(self):
        model, words = self.build()
        split = BranchSplit((words[0],), (words[1],), (words[2],))
        model.store.zero_grads()
        model.forward_backward(split, ("A",), Mode.EVAL)
        word_grad = model.store["word_emb"].grad
        used = {model.embedder.word.row(w) for w in (words[0], words[1], words[2])}
        for row in range(word_grad.shape[0]):
            if row in used:
                assert word_grad[row].any(), row
            else:
                assert not word_grad[row].any(), row
        assert model.store["branch_emb"].grad.all() is not None
        branch_grad = model.store["branch_emb"].grad
        for b in range(3):
            assert branch_grad[b].any()

    def test_multi_label_softmax_uses_first_listed_type(self):
        model, _ = self.build()
        assert model.target_class(("B", "C")) == model.labels.class_index("B")

    def test_eval_loss_matches_predicted_probability(self):
        import math

        model, words = self.build()
        split = BranchSplit((words[0],), (words[1], words[2]), (words[3],))
        probs = model.predict_proba(split)
        gold = model.labels.class_index("B")
        assert model.loss(split, ("B",)) == pytest.approx(-math.log(probs[gold]))

    def test_train_mode_requires_rng_for_dropout(self):
        labels = LabelSet(["A"])
        cfg = ModelConfig(hidden_size=3, word_dim=4, branch_dim=2, dropout=0.5)
        model = build_model(cfg, ["u"], labels, Rng(0))
        with pytest.raises(ConfigurationError):
            model.forward_backward(BranchSplit((), ("u",), ()), (), Mode.TRAIN, None)


class TestFullGradCheck:
    # the exhaustive sweep lives in the acceptance suite; spot-check here
    @pytest.mark.parametrize(
        "cell,head", [("gru", "softmax"), ("lstm", "sigmoid")]
    )
    def test_tiny_model(self, cell, head):
        report = tiny_gradcheck(cell, head)
        assert report.max_rel_error < 1e-4, report.per_tensor

    def test_without_branch_embeddings(self):
        report = tiny_gradcheck("gru", "softmax", use_branch=False)
        assert report.max_rel_error < 1e-4
