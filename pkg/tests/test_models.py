import numpy as np
import pytest

from intent_bench.errors import (
    EmptyTrainingSet,
    NotEnoughNeighbors,
    SequenceTooShort,
    ShapeMismatch,
)
from intent_bench.dataset import TaskShape
from intent_bench.features import SetupId
from intent_bench.models import (
    BaselineKind,
    LstmConfig,
    MlpConfig,
    MlpModel,
    SequenceData,
    load_model,
    make_windows,
    mlp_init,
    predict_lstm,
    predict_mlp,
    random_guess_accuracy,
    save_model,
    train_baseline,
    train_lstm,
    train_mlp,
)
from intent_bench.pipeline import TrainParams, _lstm_config, _prepare_shape, _setup_matrix, sequences_from_matrix


def four_blobs(seed=0, rows=500, dims=24):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 4.0, size=(4, dims))
    y = rng.integers(0, 4, size=rows)
    x = centers[y] + rng.normal(0, 0.5, size=(rows, dims))
    return x, y


class TestMlp:
    def test_separable_blobs(self):
        x, y = four_blobs()
        model = train_mlp(x[:400], y[:400], MlpConfig(input_width=24, seed=0))
        acc = np.mean(model.predict(x[400:]) == y[400:])
        assert acc >= 0.95

    def test_parameter_count(self):
        x, y = four_blobs(rows=64)
        model = train_mlp(x, y, MlpConfig(input_width=24, epochs=1, seed=0))
        assert model.parameter_count() == 3812  # 24*64+64 + 64*32+32 + 32*4+4

    def test_probabilities_are_simplex(self):
        x, y = four_blobs(rows=64)
        model = train_mlp(x, y, MlpConfig(input_width=24, epochs=2, seed=1))
        probs = predict_mlp(model, x)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_fresh_init_zero_input_is_uniform(self):
        cfg = MlpConfig(input_width=24, seed=3)
        model = MlpModel(params=mlp_init(np.random.default_rng(3), cfg), cfg=cfg)
        probs = model.predict_proba(np.zeros(24))
        np.testing.assert_allclose(probs, 0.25, atol=0.1)

    def test_training_point_argmax(self):
        x, y = four_blobs(rows=200)
        model = train_mlp(x, y, MlpConfig(input_width=24, seed=0))
        assert model.predict(x[0]) == y[0]

    def test_determinism(self):
        x, y = four_blobs(rows=96)
        m1 = train_mlp(x, y, MlpConfig(input_width=24, epochs=3, seed=9))
        m2 = train_mlp(x, y, MlpConfig(input_width=24, epochs=3, seed=9))
        for name in m1.params:
            np.testing.assert_array_equal(m1.params[name], m2.params[name])

    def test_shape_errors(self):
        x, y = four_blobs(rows=64)
        model = train_mlp(x, y, MlpConfig(input_width=24, epochs=1, seed=0))
        with pytest.raises(ShapeMismatch):
            model.predict(np.zeros(7))
        with pytest.raises(EmptyTrainingSet):
            train_mlp(np.empty((0, 24)), np.empty(0, dtype=int), MlpConfig(input_width=24))


@pytest.fixture(scope="module")
def diamond_state(cohort8):
    return _prepare_shape(cohort8, TaskShape.DIAMOND, 11, 0.8, "none", False, TrainParams())


def _setup_sequences(state, setup):
    dm = _setup_matrix(state, setup)
    train_idx = state["raw_train"] if setup is SetupId.D1 else state["train_idx"]
    return dm, sequences_from_matrix(dm, train_idx)


class TestLstm:
    def test_window_arithmetic(self):
        seq = SequenceData(
            x=np.zeros((39, 3)), labels=np.zeros(39, dtype=int), train_mask=np.ones(39, dtype=bool)
        )
        wx, wy, wtrain = make_windows([seq], 5)
        assert wx.shape == (35, 5, 3)

    def test_sequence_too_short(self):
        seq = SequenceData(
            x=np.zeros((3, 2)), labels=np.zeros(3, dtype=int), train_mask=np.ones(3, dtype=bool)
        )
        with pytest.raises(SequenceTooShort):
            make_windows([seq], 5)

    def test_direction_separable_d6(self, diamond_state):
        dm, seqs = _setup_sequences(diamond_state, SetupId.D6)
        assert dm.values.shape[1] == 15
        cfg = _lstm_config(15, TrainParams(), 99)
        model = train_lstm(seqs, cfg)
        wx, wy, wtrain = make_windows(seqs, cfg.window_len)
        acc = np.mean(model.predict(wx[~wtrain]) == wy[~wtrain])
        assert acc >= 0.90

    def test_reversal_flips_argmax(self, diamond_state):
        _dm, seqs = _setup_sequences(diamond_state, SetupId.D2)
        cfg = _lstm_config(11, TrainParams(), 99)
        model = train_lstm(seqs, cfg)
        wx, wy, wtrain = make_windows(seqs, cfg.window_len)
        held = wx[~wtrain]
        forward = model.predict(held)
        reversed_ = model.predict(held[:, ::-1, :])
        assert np.mean(forward != reversed_) >= 0.80

    def test_probabilities_are_simplex(self, diamond_state):
        _dm, seqs = _setup_sequences(diamond_state, SetupId.D2)
        cfg = LstmConfig(input_width=11, hidden_size=8, epochs=1, seed=0)
        model = train_lstm(seqs, cfg)
        probs = predict_lstm(model, seqs[0].x[:5])
        assert probs.shape == (2,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_width_mismatch(self, diamond_state):
        _dm, seqs = _setup_sequences(diamond_state, SetupId.D2)
        model = train_lstm(seqs, LstmConfig(input_width=11, hidden_size=8, epochs=1, seed=0))
        with pytest.raises(ShapeMismatch):
            model.predict_proba(np.zeros((5, 7)))

    def test_determinism(self, diamond_state):
        _dm, seqs = _setup_sequences(diamond_state, SetupId.D2)
        cfg = LstmConfig(input_width=11, hidden_size=8, epochs=2, seed=4)
        m1, m2 = train_lstm(seqs, cfg), train_lstm(seqs, cfg)
        for name in m1.params:
            np.testing.assert_array_equal(m1.params[name], m2.params[name])

    def test_full_sequence_mode(self, diamond_state):
        _dm, seqs = _setup_sequences(diamond_state, SetupId.D6)
        cfg = LstmConfig(input_width=15, hidden_size=16, epochs=30, mode="full", seed=2)
        model = train_lstm(seqs, cfg)
        probs = model.predict_sequence_proba(seqs[0].x)
        assert probs.shape == (39, 2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        preds, labels = [], []
        for seq in seqs:
            p = model.predict_sequence_proba(seq.x)
            holdout = ~seq.train_mask
            preds.append(np.argmax(p[holdout], axis=1))
            labels.append(seq.labels[holdout])
        acc = np.mean(np.concatenate(preds) == np.concatenate(labels))
        assert acc >= 0.80


def two_blobs(seed=0, rows=200):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=rows)
    x = np.where(y[:, None] == 0, -2.0, 2.0) + rng.normal(0, 0.5, size=(rows, 2))
    return x, y


class TestBaselines:
    def test_knn_self_accuracy(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 4))
        y = rng.integers(0, 3, size=30)
        model = train_baseline(BaselineKind("knn", k=1), x, y, 3)
        assert np.all(model.predict(x) == y)

    def test_knn_permutation_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 3))
        y = rng.integers(0, 4, size=40)
        queries = rng.normal(size=(15, 3))
        base = train_baseline(BaselineKind("knn", k=5), x, y, 4).predict(queries)
        perm = rng.permutation(40)
        shuffled = train_baseline(BaselineKind("knn", k=5), x[perm], y[perm], 4).predict(queries)
        np.testing.assert_array_equal(base, shuffled)

    def test_knn_not_enough_neighbors(self):
        with pytest.raises(NotEnoughNeighbors):
            train_baseline(BaselineKind("knn", k=5), np.ones((3, 2)), np.zeros(3, dtype=int), 2)

    def test_svm_separable(self):
        x, y = two_blobs()
        model = train_baseline(BaselineKind("svm"), x[:160], y[:160], 2, seed=0)
        assert np.mean(model.predict(x[160:]) == y[160:]) >= 0.95

    def test_logreg_separable_and_simplex(self):
        x, y = two_blobs(seed=3)
        model = train_baseline(BaselineKind("logreg"), x[:160], y[:160], 2, seed=0)
        assert np.mean(model.predict(x[160:]) == y[160:]) >= 0.95
        probs = model.predict_proba(x[160:])
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_random_guess_calibration(self):
        labels = np.tile(np.arange(4), 250)
        acc = random_guess_accuracy(labels, 4, seed=0)
        assert abs(acc - 25.0) <= 1.0

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            train_baseline(BaselineKind("svm"), np.empty((0, 2)), np.empty(0, dtype=int), 2)


class TestSerialization:
    def test_mlp_round_trip(self, tmp_path):
        x, y = four_blobs(rows=64)
        model = train_mlp(x, y, MlpConfig(input_width=24, epochs=2, seed=0))
        path = tmp_path / "mlp.json"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.predict(x), model.predict(x))

    def test_knn_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20, 3))
        y = rng.integers(0, 2, size=20)
        model = train_baseline(BaselineKind("knn", k=3), x, y, 2)
        path = tmp_path / "knn.json"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.predict(x), model.predict(x))

    def test_svm_round_trip(self, tmp_path):
        x, y = two_blobs(seed=5, rows=60)
        model = train_baseline(BaselineKind("svm", epochs=20), x, y, 2, seed=1)
        path = tmp_path / "svm.json"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.predict(x), model.predict(x))
        np.testing.assert_array_equal(loaded.weights, model.weights)

    def test_lstm_round_trip(self, tmp_path, cohort8):
        state = _prepare_shape(cohort8, TaskShape.DIAMOND, 11, 0.8, "none", False, TrainParams())
        _dm, seqs = _setup_sequences(state, SetupId.D2)
        model = train_lstm(seqs, LstmConfig(input_width=11, hidden_size=8, epochs=1, seed=0))
        path = tmp_path / "lstm.json"
        save_model(model, path)
        loaded = load_model(path)
        window = seqs[0].x[:5]
        np.testing.assert_array_equal(loaded.predict_proba(window), model.predict_proba(window))
