"""Splits, weights, windows, network gradients, Adam, training loop, CLIP."""

import math

import numpy as np
import pytest
from sklearn.base import clone

from herdpipe.embed import build_store
from herdpipe.errors import (
    DivergenceError,
    EmptySequenceError,
    InvalidClassError,
    InvalidConfigError,
    StratificationError,
    UndefinedCosineError,
)
from herdpipe.learn.checkpoint import load_checkpoint, save_checkpoint
from herdpipe.learn.classify import classification_report
from herdpipe.learn.clip import clip_loss, clip_zero_shot, prompt_text
from herdpipe.learn.data import (
    WindowExample,
    _largest_remainder,
    class_weights,
    examples_from_store,
    sliding_windows,
    stratified_split,
    windows_by_identity,
)
from herdpipe.learn.estimators import BiLstmClassifier, MlpClassifier
from herdpipe.learn.nn import (
    bilstm_backward,
    bilstm_forward,
    dropout_mask,
    init_bilstm,
    init_mlp,
    mlp_backward,
    mlp_forward,
    softmax,
    weighted_cross_entropy,
)
from herdpipe.learn.optim import AdamState, adam_step
from herdpipe.learn.train import (
    TrainConfig,
    encode_labels,
    predict_classes,
    predict_proba,
    train_model,
)
from herdpipe.errors import FormatError

from oracles import largest_remainder_reference, numerical_gradient, relative_error


class TestClassWeights:
    def test_hand_fixture(self):
        assert np.allclose(class_weights([1, 1, 2]), [0.4, 0.4, 0.2], atol=1e-12)

    def test_drinking_vs_sleeping_counts(self):
        w = class_weights([638, 15256])
        assert w[0] == pytest.approx(0.9599, abs=1e-4)
        assert w[1] == pytest.approx(0.0401, abs=1e-4)

    def test_equal_counts_uniform(self):
        assert np.allclose(class_weights([7, 7, 7, 7]), 0.25, atol=1e-12)

    def test_normalized_and_inverse_ordered(self, rng):
        counts = rng.integers(1, 500, size=6)
        w = class_weights(counts)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        order = np.argsort(counts)
        assert np.all(np.diff(w[order]) <= 1e-15)

    def test_zero_count_rejected(self):
        with pytest.raises(InvalidClassError, match=r"\[1\]"):
            class_weights([3, 0, 2])
        with pytest.raises(InvalidConfigError):
            class_weights([])


class TestStratifiedSplit:
    def test_largest_remainder_matches_reference(self):
        for ratios in [(0.70, 0.15, 0.15), (0.5, 0.25, 0.25), (0.6, 0.2, 0.2)]:
            for n in range(3, 200):
                assert _largest_remainder(n, ratios) == largest_remainder_reference(n, ratios)

    def test_ten_examples_split_7_1_2(self):
        # remainder tie between val and test goes to the later split
        train, val, test = stratified_split(["x"] * 10)
        assert (len(train), len(val), len(test)) == (7, 1, 2)

    def test_partition_properties(self, rng):
        labels = rng.choice(["a", "b", "c"], size=80, p=[0.5, 0.3, 0.2])
        train, val, test = stratified_split(labels, seed=5)
        combined = np.concatenate([train, val, test])
        assert sorted(combined.tolist()) == list(range(80))
        for split in (train, val, test):
            assert np.all(np.diff(split) > 0)  # sorted, no duplicates
        for cls in "abc":
            n = int(np.sum(labels == cls))
            want = _largest_remainder(n, (0.70, 0.15, 0.15))
            got = [int(np.sum(labels[s] == cls)) for s in (train, val, test)]
            assert got == want

    def test_seed_changes_membership_not_counts(self, rng):
        labels = rng.choice(["a", "b"], size=40)
        s1 = stratified_split(labels, seed=1)
        s2 = stratified_split(labels, seed=2)
        assert [len(s) for s in s1] == [len(s) for s in s2]
        assert any(not np.array_equal(a, b) for a, b in zip(s1, s2))
        s1b = stratified_split(labels, seed=1)
        assert all(np.array_equal(a, b) for a, b in zip(s1, s1b))

    def test_corpus_scale_split_supports(self):
        # a 28,698-example nine-class mix; the per-class largest-remainder
        # rule lands exactly on these test supports
        totals = {"standing": 3166, "lying": 3186, "eating": 5473, "drinking": 640,
                  "sitting": 327, "sleeping": 15259, "running": 93,
                  "playing": 127, "nose": 427}
        supports = {"standing": 475, "lying": 478, "eating": 821, "drinking": 96,
                    "sitting": 49, "sleeping": 2289, "running": 14,
                    "playing": 19, "nose": 64}
        labels = np.concatenate([np.full(n, name) for name, n in totals.items()])
        assert labels.size == 28698
        train, val, test = stratified_split(labels, seed=0)
        per_class = {name: int(np.sum(labels[test] == name)) for name in totals}
        assert per_class == supports
        assert len(test) == 4305

    def test_small_class_rejected(self):
        with pytest.raises(StratificationError, match="rare"):
            stratified_split(["a"] * 10 + ["rare"] * 2)

    def test_bad_ratios_rejected(self):
        with pytest.raises(InvalidConfigError):
            stratified_split(["a"] * 10, ratios=(0.5, 0.5, 0.5))
        with pytest.raises(InvalidConfigError):
            stratified_split([])


def per_identity_fixture(labels, first_frame=1):
    vecs = [(first_frame + i, np.full(3, float(i)), lab)
            for i, lab in enumerate(labels)]
    return {"pig": vecs}


class TestSlidingWindows:
    def test_window_count_and_starts(self):
        wins = sliding_windows(per_identity_fixture(["a"] * 10), window=4, stride=2)
        assert len(wins) == (10 - 4) // 2 + 1 == 4
        assert [w.start_frame for w in wins] == [1, 3, 5, 7]
        assert all(w.sequence.shape == (4, 3) for w in wins)

    def test_exact_tie_discarded_at_default_floor(self):
        wins = sliding_windows(per_identity_fixture(["a", "a", "b", "b"]),
                               window=4, stride=1)
        assert wins == []

    def test_majority_kept(self):
        wins = sliding_windows(per_identity_fixture(["a", "a", "a", "b"]),
                               window=4, stride=1)
        assert len(wins) == 1 and wins[0].label == "a"

    def test_tie_above_floor_breaks_to_first_label(self):
        wins = sliding_windows(per_identity_fixture(["b", "a", "b", "a"]),
                               window=4, stride=1, majority_floor=0.4)
        assert len(wins) == 1 and wins[0].label == "b"

    def test_frame_gap_splits_runs(self):
        per = {"pig": [(f, np.zeros(2), "a") for f in [1, 2, 3, 7, 8, 9]]}
        wins = sliding_windows(per, window=3, stride=1)
        assert [w.start_frame for w in wins] == [1, 7]

    def test_identities_do_not_mix(self):
        per = {"q": [(i, np.zeros(2), "a") for i in range(1, 4)],
               "p": [(i, np.zeros(2), "b") for i in range(1, 4)]}
        wins = sliding_windows(per, window=3, stride=1)
        assert [(w.identity, w.label) for w in wins] == [("p", "b"), ("q", "a")]

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            sliding_windows({}, window=0, stride=1)
        with pytest.raises(InvalidConfigError):
            WindowExample(sequence=np.zeros(3), label="a", identity="p", start_frame=1)


class TestStoreAdapters:
    def test_examples_skip_unlabeled(self, tmp_path, rng):
        entries = [("a.jpg", rng.standard_normal(4), {"label": "walk", "identity": "p",
                                                      "frame_global_index": 1}),
                   ("b.jpg", rng.standard_normal(4), {"label": None, "identity": "p",
                                                      "frame_global_index": 2}),
                   ("c.jpg", rng.standard_normal(4), {"label": "rest", "identity": "q",
                                                      "frame_global_index": 1})]
        store = build_store(tmp_path / "s", entries)
        X, labels, identities, frames = examples_from_store(store)
        assert X.shape == (2, 4)
        assert labels == ["walk", "rest"]
        assert identities == ["p", "q"]
        assert frames == [1, 1]
        per = windows_by_identity(store)
        assert sorted(per) == ["p", "q"]
        assert [f for f, _, _ in per["p"]] == [1]


class TestGradientChecks:
    def test_weighted_cross_entropy_fixture(self):
        loss, grad = weighted_cross_entropy(np.zeros((1, 2)), [0], np.array([0.4, 0.6]))
        assert loss == pytest.approx(0.4 * math.log(2), abs=1e-12)
        assert np.allclose(grad, [[-0.2, 0.2]], atol=1e-12)

    def test_weighted_cross_entropy_gradient(self, rng):
        logits = rng.standard_normal((5, 4))
        targets = rng.integers(0, 4, size=5)
        weights = rng.uniform(0.1, 1.0, size=4)
        _, grad = weighted_cross_entropy(logits, targets, weights)
        num = numerical_gradient(
            lambda L: weighted_cross_entropy(L, targets, weights)[0], logits)
        assert relative_error(num, grad) <= 1e-6

    def test_mlp_gradients_with_dropout(self, rng):
        params = init_mlp(6, 3, seed=1, hidden1=5, hidden2=4)
        x = rng.standard_normal((3, 6))
        y = np.array([0, 2, 1])
        w = np.array([0.5, 0.3, 0.2])
        mask_rng = np.random.default_rng(99)
        masks = (dropout_mask(mask_rng, (3, 5), 0.5), dropout_mask(mask_rng, (3, 4), 0.5))

        def loss():
            logits, _ = mlp_forward(params, x, train=True, masks=masks)
            return weighted_cross_entropy(logits, y, w)[0]

        logits, cache = mlp_forward(params, x, train=True, masks=masks)
        _, dlogits = weighted_cross_entropy(logits, y, w)
        grads = mlp_backward(params, cache, dlogits)
        for name in params:
            num = numerical_gradient(lambda _: loss(), params[name])
            assert relative_error(num, grads[name]) <= 1e-4, name

    def test_bilstm_gradients_full_bptt(self, rng):
        params = init_bilstm(4, 3, seed=2, hidden=3, head_hidden=4)
        x = rng.standard_normal((2, 3, 4))
        y = np.array([1, 0])
        w = np.full(3, 1 / 3)
        mask = dropout_mask(np.random.default_rng(7), (2, 4), 0.3)

        def loss():
            logits, _ = bilstm_forward(params, x, train=True, mask=mask)
            return weighted_cross_entropy(logits, y, w)[0]

        logits, cache = bilstm_forward(params, x, train=True, mask=mask)
        _, dlogits = weighted_cross_entropy(logits, y, w)
        grads = bilstm_backward(params, cache, dlogits)
        for name in params:
            num = numerical_gradient(lambda _: loss(), params[name])
            assert relative_error(num, grads[name]) <= 1e-4, name
        # backward cell runs one step from a zero state: its recurrent weight is inert
        assert np.array_equal(grads["wh_b"], np.zeros_like(params["wh_b"]))

    def test_clip_gradients(self, rng):
        I = rng.standard_normal((4, 5))
        T = rng.standard_normal((4, 5))
        _, dI, dT = clip_loss(I, T, tau=2.0)
        num_i = numerical_gradient(lambda A: clip_loss(A, T, tau=2.0)[0], I)
        num_t = numerical_gradient(lambda A: clip_loss(I, A, tau=2.0)[0], T)
        assert relative_error(num_i, dI) <= 1e-5
        assert relative_error(num_t, dT) <= 1e-5


class TestDropoutAndSoftmax:
    def test_zero_rate_identity(self):
        assert np.array_equal(dropout_mask(np.random.default_rng(0), (4, 4), 0.0),
                              np.ones((4, 4)))

    def test_inverted_scaling_values_and_mean(self):
        mask = dropout_mask(np.random.default_rng(3), 20000, 0.3)
        assert set(np.unique(mask)) <= {0.0, 1.0 / 0.7}
        assert mask.mean() == pytest.approx(1.0, abs=0.02)

    def test_rate_validated(self):
        with pytest.raises(InvalidConfigError):
            dropout_mask(np.random.default_rng(0), 3, 1.0)
        with pytest.raises(InvalidConfigError):
            dropout_mask(np.random.default_rng(0), 3, -0.1)

    def test_softmax_rows_and_stability(self):
        p = softmax(np.array([[1000.0, 1000.0, 990.0], [0.0, 0.0, 0.0]]))
        assert np.all(np.isfinite(p))
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(p[1], 1 / 3, atol=1e-12)


class TestAdam:
    def test_single_step_fixture(self):
        params = {"p": np.array([1.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"p": np.array([1.0])}, state, lr=1e-3, weight_decay=0.0)
        assert params["p"][0] == pytest.approx(0.999, abs=1e-6)

    def test_coupled_decay_moves_zero_gradient_weight(self):
        params = {"p": np.array([2.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"p": np.array([0.0])}, state, lr=1e-3, weight_decay=0.1)
        # decay folds into the gradient, so m_hat/sqrt(v_hat) is 1 and the step is lr
        assert params["p"][0] == pytest.approx(2.0 - 1e-3, abs=1e-9)

    def test_constant_gradient_unit_steps(self):
        params = {"p": np.array([1.0])}
        state = AdamState.for_params(params)
        for _ in range(5):
            adam_step(params, {"p": np.array([0.7])}, state, lr=1e-3, weight_decay=0.0)
        assert params["p"][0] == pytest.approx(1.0 - 5e-3, abs=1e-6)

    def test_non_finite_gradient_raises(self):
        params = {"p": np.array([1.0])}
        state = AdamState.for_params(params)
        with pytest.raises(DivergenceError, match="'p'"):
            adam_step(params, {"p": np.array([np.nan])}, state)


def separable_blobs(rng, n_per=30, d=8, gap=3.0):
    a = rng.standard_normal((n_per, d)) + gap
    b = rng.standard_normal((n_per, d)) - gap
    X = np.vstack([a, b])
    y = np.array(["up"] * n_per + ["down"] * n_per)
    return X, y


class TestTrainLoop:
    def test_encode_labels_sorted(self):
        y, names = encode_labels(["walk", "rest", "walk"])
        assert names == ("rest", "walk")
        assert y.tolist() == [1, 0, 1]

    def test_learns_separable_data(self, rng):
        X, y = separable_blobs(rng)
        y_idx, names = encode_labels(y)
        cfg = TrainConfig(max_epochs=8, patience=4, seed=3)
        result = train_model("mlp", X, y_idx, cfg, names)
        assert result.report is not None
        assert result.report.accuracy >= 0.8
        proba = predict_proba("mlp", result.params, X)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        preds = predict_classes("mlp", result.params, X)
        assert np.array_equal(preds, np.argmax(proba, axis=1))

    def test_training_is_seed_deterministic(self, rng):
        X, y = separable_blobs(rng, n_per=15)
        y_idx, names = encode_labels(y)
        cfg = TrainConfig(max_epochs=3, patience=2, seed=11)
        r1 = train_model("mlp", X, y_idx, cfg, names)
        r2 = train_model("mlp", X, y_idx, cfg, names)
        assert all(np.array_equal(r1.params[k], r2.params[k]) for k in r1.params)
        assert r1.history == r2.history
        r3 = train_model("mlp", X, y_idx, TrainConfig(max_epochs=3, patience=2, seed=12), names)
        assert any(not np.array_equal(r1.params[k], r3.params[k]) for k in r1.params)

    def test_early_stopping_keeps_best_epoch_params(self, rng):
        # validation labels are the inversion of training labels on the same
        # inputs, so every training improvement worsens validation monotonically
        X0 = np.vstack([rng.standard_normal((10, 4)) + 2,
                        rng.standard_normal((10, 4)) - 2])
        y0 = np.array([0] * 10 + [1] * 10)
        X = np.vstack([X0, X0])
        y = np.concatenate([y0, 1 - y0])
        splits = (np.arange(20), np.arange(20, 40), np.array([], dtype=int))
        cfg = TrainConfig(learning_rate=1e-2, weight_decay=0.0,
                          max_epochs=50, patience=3, seed=0)
        result = train_model("mlp", X, y, cfg, ("a", "b"), splits=splits)
        assert result.best_epoch == 1
        assert len(result.history) == 4  # 1 best + patience worse epochs
        assert all(h["val_loss"] > result.history[0]["val_loss"]
                   for h in result.history[1:])
        assert result.report is None  # empty test split

        one = train_model("mlp", X, y, TrainConfig(learning_rate=1e-2, weight_decay=0.0,
                                                   max_epochs=1, patience=3, seed=0),
                          ("a", "b"), splits=splits)
        assert all(np.array_equal(result.params[k], one.params[k]) for k in result.params)

    def test_bad_kind_rejected(self):
        with pytest.raises(InvalidConfigError):
            train_model("cnn", np.zeros((4, 2)), np.zeros(4, dtype=int),
                        TrainConfig(), ("a",))

    def test_config_validation(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(patience=0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(split=(0.8, 0.1, 0.2))

    def test_empty_sequence_rejected(self):
        params = init_bilstm(3, 2, hidden=2, head_hidden=2)
        with pytest.raises(EmptySequenceError):
            bilstm_forward(params, np.zeros((1, 0, 3)))


class TestClip:
    def test_two_pair_orthonormal_loss(self):
        I = np.eye(2)
        T = np.eye(2)
        loss, _, _ = clip_loss(I, T, tau=1.0)
        assert loss == pytest.approx(0.3133, abs=1e-4)
        assert loss == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)

    def test_sharper_temperature_reduces_aligned_loss(self):
        I = np.eye(3)
        loss_soft, _, _ = clip_loss(I, I, tau=1.0)
        loss_sharp, _, _ = clip_loss(I, I, tau=10.0)
        assert loss_sharp < loss_soft

    def test_zero_shot_tie_breaks_low_and_scale_invariant(self):
        classes = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        assert clip_zero_shot(np.array([3.0, 0.0]), classes) == 0
        assert clip_zero_shot(np.array([0.3, 0.0]), classes) == 0
        assert clip_zero_shot(np.array([0.0, 5.0]), classes) == 2

    def test_zero_norm_rejected(self):
        with pytest.raises(UndefinedCosineError):
            clip_zero_shot(np.zeros(2), np.eye(2))
        with pytest.raises(UndefinedCosineError):
            clip_loss(np.array([[0.0, 0.0], [1.0, 0.0]]), np.eye(2))

    def test_shape_and_temperature_validated(self):
        with pytest.raises(InvalidConfigError):
            clip_loss(np.eye(2), np.eye(3))
        with pytest.raises(InvalidConfigError):
            clip_loss(np.eye(2), np.eye(2), tau=0.0)

    def test_prompt_template(self):
        assert prompt_text("sleeping pig") == "a photo of a sleeping pig"


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = init_mlp(5, 3, seed=4, hidden1=4, hidden2=3)
        cfg = TrainConfig(seed=9, max_epochs=12)
        save_checkpoint(tmp_path / "m.mdl", "mlp", params, ("a", "b", "c"), cfg,
                        extra={"window": 8})
        kind, loaded, names, cfg2, extra = load_checkpoint(tmp_path / "m.mdl")
        assert kind == "mlp" and names == ("a", "b", "c")
        assert cfg2 == cfg
        assert extra == {"window": 8}
        assert sorted(loaded) == sorted(params)
        for k in params:
            assert loaded[k].dtype == np.float64
            assert np.array_equal(loaded[k], params[k])

    def test_save_is_deterministic(self, tmp_path):
        params = init_mlp(4, 2, seed=0, hidden1=3, hidden2=2)
        save_checkpoint(tmp_path / "a.mdl", "mlp", params, ("x", "y"), TrainConfig())
        save_checkpoint(tmp_path / "b.mdl", "mlp", params, ("x", "y"), TrainConfig())
        assert (tmp_path / "a.mdl").read_bytes() == (tmp_path / "b.mdl").read_bytes()

    def test_corruption_detected(self, tmp_path):
        params = {"w": np.ones((2, 2))}
        save_checkpoint(tmp_path / "m.mdl", "mlp", params, ("a",), TrainConfig())
        blob = (tmp_path / "m.mdl").read_bytes()
        (tmp_path / "bad_magic.mdl").write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(tmp_path / "bad_magic.mdl")
        (tmp_path / "short.mdl").write_bytes(blob[:-8])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(tmp_path / "short.mdl")
        (tmp_path / "long.mdl").write_bytes(blob + b"\x00" * 4)
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(tmp_path / "long.mdl")


class TestClassificationReport:
    def test_hand_confusion(self):
        # truth: a a a b b ; predictions: a a b b a
        rep = classification_report([0, 0, 0, 1, 1], [0, 0, 1, 1, 0], ("a", "b"))
        assert rep.confusion == ((2, 1), (1, 1))
        assert rep.support == (3, 2)
        assert rep.accuracy == pytest.approx(0.6)
        assert rep.precision == (pytest.approx(2 / 3), pytest.approx(0.5))
        assert rep.recall == (pytest.approx(2 / 3), pytest.approx(0.5))
        assert rep.weighted_f1 == pytest.approx((3 * (2 / 3) + 2 * 0.5) / 5)

    def test_absent_class_listed_and_zero_safe(self):
        rep = classification_report([0, 0, 0], [0, 0, 0], ("a", "b"))
        assert rep.absent_classes == ("b",)
        assert rep.precision[1] == 0.0 and rep.recall[1] == 0.0 and rep.f1[1] == 0.0

    def test_shape_and_range_validated(self):
        with pytest.raises(InvalidConfigError):
            classification_report([0, 1], [0], ("a", "b"))
        with pytest.raises(InvalidConfigError):
            classification_report([0, 2], [0, 1], ("a", "b"))


class TestEstimators:
    def test_sklearn_protocol(self):
        est = MlpClassifier(seed=3, max_epochs=7)
        assert est.get_params()["seed"] == 3
        dup = clone(est)
        assert dup.get_params() == est.get_params()

    def test_mlp_fit_predict_labels(self, rng):
        X, y = separable_blobs(rng, n_per=20)
        est = MlpClassifier(max_epochs=6, patience=3, seed=1).fit(X, y)
        assert est.classes_.tolist() == ["down", "up"]
        preds = est.predict(X)
        assert set(preds) <= {"down", "up"}
        assert np.mean(preds == y) >= 0.8
        assert est.report_ is not None and est.best_epoch_ >= 1

    def test_bilstm_fit_on_windows(self, rng):
        # class is decided by the sign of the window mean
        n, t, d = 30, 4, 3
        X = np.concatenate([rng.standard_normal((n, t, d)) + 1.5,
                            rng.standard_normal((n, t, d)) - 1.5])
        y = np.array(["pos"] * n + ["neg"] * n)
        est = BiLstmClassifier(max_epochs=4, patience=2, seed=2).fit(X, y)
        preds = est.predict(X)
        assert preds.shape == (2 * n,)
        assert np.mean(preds == y) >= 0.8
