import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intent_bench.dataset import TaskShape
from intent_bench.errors import IncompleteTable, InvalidConfig, LengthMismatch, TooFewRows
from intent_bench.features import SetupId
from intent_bench.pipeline import (
    CellResult,
    GridConfig,
    GridReport,
    Metrics,
    SplitSpec,
    TrainParams,
    TwoStepConfig,
    evaluate,
    format_cell,
    parse_report_csv,
    raw_table,
    records_for_shape,
    reference_ordering_notes,
    render_csv,
    render_report,
    render_text,
    run_grid,
    run_two_step,
    split_indices,
    window_tables,
    write_run_outputs,
)

FAST = TrainParams(mlp_epochs=3, lstm_epochs=3, baseline_epochs=20, lstm_hidden=8)


class TestSplit:
    def test_sizes(self):
        train, test = split_indices(624, SplitSpec(seed=1))
        assert train.size == 499 and test.size == 125

    def test_partition(self):
        train, test = split_indices(100, SplitSpec(seed=2))
        merged = np.sort(np.concatenate([train, test]))
        np.testing.assert_array_equal(merged, np.arange(100))

    def test_same_seed_identical(self):
        a = split_indices(200, SplitSpec(seed=7))
        b = split_indices(200, SplitSpec(seed=7))
        np.testing.assert_array_equal(a[0], b[0])

    def test_stratified_balance(self):
        labels = np.repeat([0, 1], 312)
        train, test = split_indices(624, SplitSpec(seed=3, stratify_by="direction"), labels)
        assert train.size == 499
        counts = np.bincount(labels[test])
        assert abs(counts[0] - counts[1]) <= 1

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            split_indices(4, SplitSpec(seed=0))

    def test_bad_spec(self):
        with pytest.raises(InvalidConfig):
            split_indices(100, SplitSpec(train_fraction=1.5, seed=0))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=5, max_value=500), st.integers(min_value=0, max_value=2**31))
    def test_partition_property(self, n, seed):
        train, test = split_indices(n, SplitSpec(seed=seed))
        assert train.size == int(0.8 * n)
        merged = np.sort(np.concatenate([train, test]))
        np.testing.assert_array_equal(merged, np.arange(n))


class TestEvaluate:
    def test_perfect(self):
        m = evaluate([0, 1, 2, 3], [0, 1, 2, 3], 4)
        assert m.accuracy == 100.0 and m.macro_f1 == 1.0

    def test_constant_on_balanced_binary(self):
        labels = [0] * 10 + [1] * 10
        m = evaluate([0] * 20, labels, 2)
        assert m.accuracy == 50.0
        assert m.macro_f1 == pytest.approx(1 / 3, rel=1e-12)

    def test_trace_identity(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 3, size=50)
        preds = rng.integers(0, 3, size=50)
        m = evaluate(preds, labels, 3)
        assert m.accuracy == pytest.approx(100.0 * np.trace(m.confusion) / m.confusion.sum(), abs=1e-12)
        np.testing.assert_array_equal(m.confusion.sum(axis=1), np.bincount(labels, minlength=3))

    def test_order_independence(self):
        labels = np.array([0, 0, 1, 1, 2, 2])
        preds = np.array([0, 1, 1, 0, 2, 2])
        m1 = evaluate(preds, labels, 3)
        perm = np.array([3, 2, 1, 0, 5, 4])
        m2 = evaluate(preds[perm], labels[perm], 3)
        assert m1.accuracy == m2.accuracy and m1.macro_f1 == m2.macro_f1

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate([0, 1], [0], 2)


class TestTables:
    def test_window_table_shapes(self, cohort4):
        subset = records_for_shape(cohort4, TaskShape.DIAMOND)
        feats, gaze = window_tables(subset)
        assert feats.values.shape == (156, 11)  # 39 x 4
        assert gaze.values.shape == (156, 24)
        counts = np.bincount(feats.segment)
        assert counts.tolist() == [9 * 4, 10 * 4, 10 * 4, 10 * 4]

    def test_raw_table_shapes(self, cohort4):
        subset = records_for_shape(cohort4, TaskShape.DIAMOND)
        raw = raw_table(subset)
        assert raw.values.shape == (160, 1)
        assert np.bincount(raw.segment).tolist() == [40, 40, 40, 40]

    def test_too_few_participants(self, cohort4):
        with pytest.raises(TooFewRows):
            records_for_shape(cohort4[:1], TaskShape.DIAMOND)


class TestTwoStep:
    def test_deterministic(self, cohort4):
        cfg = TwoStepConfig(seed=5, train=FAST)
        r1 = run_two_step(cohort4, TaskShape.DIAMOND, cfg)
        r2 = run_two_step(cohort4, TaskShape.DIAMOND, cfg)
        assert r1.step1.accuracy == r2.step1.accuracy
        assert r1.step2.accuracy == r2.step2.accuracy
        assert r1.config_hash == r2.config_hash
        np.testing.assert_array_equal(r1.step1.confusion, r2.step1.confusion)

    def test_probs_are_simplex(self, cohort4):
        from intent_bench.pipeline import _prepare_shape

        state = _prepare_shape(cohort4, TaskShape.CIRCLE, 5, 0.8, "none", False, FAST)
        probs = state["probs"]
        assert probs.shape == (156, 4)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_alternate_setup(self, cohort4):
        res = run_two_step(cohort4, TaskShape.DIAMOND, TwoStepConfig(seed=5, train=FAST, direction_setup=SetupId.D8))
        assert res.direction_setup is SetupId.D8


@pytest.fixture(scope="module")
def segment_report(cohort4):
    cfg = GridConfig(seed=3, steps="segment", shapes=(TaskShape.DIAMOND,), train=FAST)
    return run_grid(cohort4, cfg)


class TestGrid:
    def test_segment_cell_count(self, segment_report):
        assert len(segment_report.cells) == 16  # 4 models x 4 setups x 1 shape
        assert ("segment", "diamond") in segment_report.random_guess

    def test_cells_have_unique_seeds(self, segment_report):
        seeds = [c.seed for c in segment_report.cells]
        assert len(set(seeds)) == len(seeds)

    def test_grid_determinism(self, cohort4, segment_report):
        again = run_grid(cohort4, GridConfig(seed=3, steps="segment", shapes=(TaskShape.DIAMOND,), train=FAST))
        assert render_csv(again) == render_csv(segment_report)

    def test_direction_grid_cells(self, cohort4):
        cfg = GridConfig(seed=3, steps="direction", shapes=(TaskShape.CIRCLE,), train=FAST)
        report = run_grid(cohort4, cfg)
        assert len(report.cells) == 32  # 4 models x 8 setups
        lstm_cells = [c for c in report.cells if c.model == "LSTM"]
        assert {c.setup for c in lstm_cells} == {s.value for s in SetupId}


class TestRendering:
    def test_format_cell(self):
        assert format_cell(Metrics(accuracy=96.7213, macro_f1=0.9456)) == "96.72 [0.946]"

    def _tiny_report(self):
        cells = [
            CellResult("segment", "diamond", m, s, Metrics(50.0 + i, 0.5, np.eye(4, dtype=int)), i, 0.0)
            for i, (m, s) in enumerate(
                (m, s) for m in ("NN", "KNN", "SVM", "LR") for s in ("D1", "D2", "D3", "D5")
            )
        ]
        return GridReport(cells=cells, random_guess={("segment", "diamond"): 25.4}, root_seed=1, config_hash="x")

    def test_text_flags_best(self):
        text = render_text(self._tiny_report())
        assert "**65.00 [0.500]**" in text  # the last cell has the highest accuracy

    def test_incomplete_table(self):
        report = self._tiny_report()
        report.cells.pop(3)
        with pytest.raises(IncompleteTable):
            render_text(report)

    def test_csv_schema_and_round_trip(self, tmp_path):
        report = self._tiny_report()
        csv_text = render_csv(report)
        header = csv_text.splitlines()[0].split(",")
        assert header == ["step", "shape", "model", "setup", "accuracy", "f1", "best"]
        path = tmp_path / "report.csv"
        path.write_text(csv_text)
        parsed = parse_report_csv(path)
        assert render_csv(parsed) == csv_text

    def test_render_report_dispatch(self):
        report = self._tiny_report()
        assert render_report(report, "text") == render_text(report)
        with pytest.raises(InvalidConfig):
            render_report(report, "yaml")


class TestReferenceNotes:
    def test_notes_are_informational(self, cohort4):
        cfg = GridConfig(seed=3, steps="all", shapes=(TaskShape.DIAMOND,), train=FAST)
        report = run_grid(cohort4, cfg)
        notes = reference_ordering_notes(report)
        assert notes, "expected ordering notes for a full grid"
        assert all(note.startswith(("ok:", "deviation:")) for note in notes)

    def test_write_outputs(self, cohort4, tmp_path):
        cfg = GridConfig(seed=3, steps="segment", shapes=(TaskShape.DIAMOND,), train=FAST)
        report = run_grid(cohort4, cfg)
        result = run_two_step(cohort4, TaskShape.DIAMOND, TwoStepConfig(seed=3, train=FAST))
        write_run_outputs(tmp_path, report, [result], {"root_seed": 3}, ["ok: something"])
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "run.json").exists()
        assert (tmp_path / "reference_checks.txt").exists()
        confusions = list((tmp_path / "confusions").glob("*.csv"))
        assert len(confusions) == len(report.cells)
