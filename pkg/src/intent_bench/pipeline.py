"""Experiment orchestration: splits, metrics, the two-step run, and the grid.

The two-step run trains the gaze-driven segment classifier, feeds its
probability outputs into a feature setup, and trains the direction LSTM on
the same train/test partition. The grid trains every requested
(model, setup, shape) cell independently with seeds derived from one root
seed, then renders the comparison tables.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dataset import (
    HITS_PER_TASK,
    SEGMENT_COUNT,
    ParticipantRecord,
    TaskShape,
    assign_segment_label,
)
from .errors import (
    IncompleteTable,
    InvalidCell,
    InvalidConfig,
    LengthMismatch,
    TooFewRows,
)
from .features import (
    DataMatrix,
    SetupId,
    apply_scaler,
    assemble_setup,
    feature_matrix,
    fit_scaler,
)
from .models import (
    BaselineKind,
    LstmConfig,
    MlpConfig,
    SequenceData,
    random_guess_accuracy,
    train_baseline,
    train_lstm,
    train_mlp,
)

DIRECTION_CLASSES = 2

SEGMENT_SETUPS = (SetupId.D1, SetupId.D2, SetupId.D3, SetupId.D5)
DIRECTION_SETUPS = tuple(SetupId)
SEGMENT_MODELS = ("NN", "KNN", "SVM", "LR")
DIRECTION_MODELS = ("LSTM", "KNN", "SVM", "LR")

# Ordering expectations from the published reference results, reported
# informationally and never used as gates.
REFERENCE_BEST_DIRECTION_SETUP = "D6"
REFERENCE_FEATURE_GAIN_POINTS = 34.6


def derive_seed(root: int, *parts) -> int:
    digest = hashlib.sha256(("%d|" % root + "|".join(map(str, parts))).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


# --- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratify_by: str = "none"  # none | segment | direction

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig("train_fraction must be in (0, 1)")
        if self.stratify_by not in ("none", "segment", "direction"):
            raise InvalidConfig(f"unknown stratify_by '{self.stratify_by}'")


def split_indices(n: int, spec: SplitSpec, strat_labels=None) -> tuple[np.ndarray, np.ndarray]:
    """Seeded disjoint-exhaustive split; train size is floor(fraction * n)."""
    spec.validate()
    if n < 5:
        raise TooFewRows(f"{n} rows is too few to split")
    rng = np.random.default_rng(spec.seed)
    k = int(spec.train_fraction * n)
    if spec.stratify_by == "none" or strat_labels is None:
        perm = rng.permutation(n)
        return np.sort(perm[:k]), np.sort(perm[k:])

    strat_labels = np.asarray(strat_labels)
    classes = np.unique(strat_labels)
    pools = {c: rng.permutation(np.flatnonzero(strat_labels == c)) for c in classes}
    takes = {c: int(spec.train_fraction * pools[c].size) for c in classes}
    short = k - sum(takes.values())
    # hand the leftover rows to the classes with the largest fractional remainder
    remainders = sorted(
        classes, key=lambda c: (-(spec.train_fraction * pools[c].size - takes[c]), c)
    )
    for c in remainders[:short]:
        takes[c] += 1
    train = np.sort(np.concatenate([pools[c][: takes[c]] for c in classes]))
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return train, np.flatnonzero(~mask)


def split_dataset(dm: DataMatrix, spec: SplitSpec) -> tuple[DataMatrix, DataMatrix]:
    labels = None
    if spec.stratify_by == "segment":
        labels = dm.segment
    elif spec.stratify_by == "direction":
        labels = dm.direction
    train_idx, test_idx = split_indices(dm.n_rows, spec, labels)
    return dm.take(train_idx), dm.take(test_idx)


# --- metrics -----------------------------------------------------------------


@dataclass
class Metrics:
    accuracy: float  # percent
    macro_f1: float
    confusion: np.ndarray | None = None


def evaluate(predictions, labels, num_classes: int) -> Metrics:
    """Accuracy (%), macro-averaged F1 (0 for classes with no support/predictions), confusion."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    cm = np.zeros((num_classes, num_classes), dtype=int)
    for t, p in zip(labels, predictions):
        cm[int(t), int(p)] += 1
    total = cm.sum()
    accuracy = 100.0 * np.trace(cm) / total
    f1s = []
    for c in range(num_classes):
        tp = cm[c, c]
        prec = tp / cm[:, c].sum() if cm[:, c].sum() else 0.0
        rec = tp / cm[c, :].sum() if cm[c, :].sum() else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return Metrics(accuracy=float(accuracy), macro_f1=float(np.mean(f1s)), confusion=cm)


# --- table builders -----------------------------------------------------------


def records_for_shape(records: list[ParticipantRecord], shape: TaskShape) -> list[ParticipantRecord]:
    subset = sorted((r for r in records if r.shape is shape), key=lambda r: r.participant_id)
    if len(subset) < 2:
        raise TooFewRows(f"need at least 2 participants for shape {shape.value}, got {len(subset)}")
    return subset


def window_tables(
    records: list[ParticipantRecord], mmav2_positive_tail: bool = False
) -> tuple[DataMatrix, DataMatrix]:
    """Window-level feature and gaze tables: one row per (participant, dest hit)."""
    feats, gaze_rows, seg, direction, pid, hit = [], [], [], [], [], []
    shape = records[0].shape
    for rec in records:
        feats.append(feature_matrix(rec.windows, mmav2_positive_tail))
        dest = np.array([w.dest_hit for w in rec.windows])
        gaze_rows.append(rec.gaze[dest - 1])
        seg.append([assign_segment_label(d) for d in dest])
        direction.append(np.full(dest.size, rec.direction.label))
        pid.append(np.full(dest.size, rec.participant_id, dtype=object))
        hit.append(dest)
    labels = dict(
        segment=np.concatenate(seg),
        direction=np.concatenate(direction),
        participant=np.concatenate(pid),
        hit=np.concatenate(hit),
        shape=shape,
    )
    features_dm = DataMatrix(values=np.vstack(feats), **labels)
    gaze_dm = DataMatrix(values=np.vstack(gaze_rows), **labels)
    return features_dm, gaze_dm


def raw_table(records: list[ParticipantRecord]) -> DataMatrix:
    """Hit-level raw-resistance table: one row per (participant, hit)."""
    shape = records[0].shape
    hits = np.arange(1, HITS_PER_TASK + 1)
    values, seg, direction, pid, hit = [], [], [], [], []
    for rec in records:
        values.append(rec.hit_values[:, None])
        seg.append([assign_segment_label(h) for h in hits])
        direction.append(np.full(hits.size, rec.direction.label))
        pid.append(np.full(hits.size, rec.participant_id, dtype=object))
        hit.append(hits)
    return DataMatrix(
        values=np.vstack(values),
        segment=np.concatenate(seg),
        direction=np.concatenate(direction),
        participant=np.concatenate(pid),
        hit=np.concatenate(hit),
        shape=shape,
    )


def scale_on_train(dm: DataMatrix, train_idx: np.ndarray) -> DataMatrix:
    """Min-max scale every column on the training rows only, apply everywhere."""
    scaler = fit_scaler(dm.values[train_idx])
    return dm.with_values(apply_scaler(scaler, dm.values))


def sequences_from_matrix(dm: DataMatrix, train_idx: np.ndarray) -> list[SequenceData]:
    """Per-participant ordered sequences with per-step direction labels and split flags."""
    train_mask = np.zeros(dm.n_rows, dtype=bool)
    train_mask[train_idx] = True
    seqs = []
    for pid in sorted(set(dm.participant)):
        rows = np.flatnonzero(dm.participant == pid)
        rows = rows[np.argsort(dm.hit[rows], kind="stable")]
        seqs.append(
            SequenceData(
                x=dm.values[rows],
                labels=dm.direction[rows],
                train_mask=train_mask[rows],
                participant=str(pid),
            )
        )
    return seqs


# --- cell trainers --------------------------------------------------------------


@dataclass(frozen=True)
class TrainParams:
    mlp_epochs: int = 50
    mlp_batch: int = 32
    mlp_lr: float = 0.001
    lstm_epochs: int = 50
    lstm_batch: int = 32
    lstm_lr: float = 0.001
    lstm_l2: float = 0.01
    lstm_hidden: int = 50
    lstm_layers: int = 2
    window_len: int = 5
    lstm_mode: str = "windowed"
    baseline_epochs: int = 200
    knn_k: int = 5
    svm_lambda: float = 0.01
    logreg_lr: float = 0.1


def _mlp_config(width: int, params: TrainParams, seed: int) -> MlpConfig:
    return MlpConfig(
        input_width=width,
        lr=params.mlp_lr,
        epochs=params.mlp_epochs,
        batch_size=params.mlp_batch,
        seed=seed,
    )


def _lstm_config(width: int, params: TrainParams, seed: int) -> LstmConfig:
    return LstmConfig(
        input_width=width,
        hidden_layers=params.lstm_layers,
        hidden_size=params.lstm_hidden,
        l2=params.lstm_l2,
        lr=params.lstm_lr,
        epochs=params.lstm_epochs,
        batch_size=params.lstm_batch,
        window_len=params.window_len,
        mode=params.lstm_mode,
        seed=seed,
    )


def fit_eval_lstm(dm: DataMatrix, train_idx, test_idx, cfg: LstmConfig):
    """Train the direction LSTM on a setup matrix and score the held-out side."""
    seqs = sequences_from_matrix(dm, train_idx)
    model = train_lstm(seqs, cfg)
    if cfg.mode == "windowed":
        from .models import make_windows

        wx, wy, wtrain = make_windows(seqs, cfg.window_len)
        preds = model.predict(wx[~wtrain])
        metrics = evaluate(preds, wy[~wtrain], DIRECTION_CLASSES)
    else:
        preds, labels = [], []
        for seq in seqs:
            probs = model.predict_sequence_proba(seq.x)
            holdout = ~seq.train_mask
            preds.append(np.argmax(probs[holdout], axis=-1))
            labels.append(seq.labels[holdout])
        metrics = evaluate(np.concatenate(preds), np.concatenate(labels), DIRECTION_CLASSES)
    return model, metrics


def fit_eval_rows(model_name: str, dm: DataMatrix, train_idx, test_idx, labels: np.ndarray,
                  num_classes: int, params: TrainParams, seed: int):
    """Train a per-row classifier (NN or baseline) and score the held-out rows."""
    x_train, y_train = dm.values[train_idx], labels[train_idx]
    x_test, y_test = dm.values[test_idx], labels[test_idx]
    if model_name == "NN":
        cfg = _mlp_config(dm.values.shape[1], params, seed)
        cfg = MlpConfig(**{**vars(cfg), "output": num_classes})
        model = train_mlp(x_train, y_train, cfg)
    elif model_name == "KNN":
        model = train_baseline(BaselineKind("knn", k=params.knn_k), x_train, y_train, num_classes, seed)
    elif model_name == "SVM":
        kind = BaselineKind("svm", lam=params.svm_lambda, epochs=params.baseline_epochs)
        model = train_baseline(kind, x_train, y_train, num_classes, seed)
    elif model_name == "LR":
        kind = BaselineKind("logreg", lr=params.logreg_lr, epochs=params.baseline_epochs)
        model = train_baseline(kind, x_train, y_train, num_classes, seed)
    else:
        raise InvalidCell(f"unknown row model '{model_name}'")
    return model, evaluate(model.predict(x_test), y_test, num_classes)


# --- two-step pipeline ------------------------------------------------------------


@dataclass(frozen=True)
class TwoStepConfig:
    seed: int = 0
    train_fraction: float = 0.8
    stratify_by: str = "none"
    direction_setup: SetupId = SetupId.D6
    train: TrainParams = field(default_factory=TrainParams)
    mmav2_positive_tail: bool = False


@dataclass
class PipelineResult:
    shape: TaskShape
    step1: Metrics
    step2: Metrics
    direction_setup: SetupId
    seeds: dict
    config_hash: str


def _prepare_shape(records, shape, seed, train_fraction, stratify_by, mmav2_positive_tail, train_params):
    """Shared per-shape state: tables, partitions, scaled blocks, step-1 model."""
    subset = records_for_shape(records, shape)
    feats_dm, gaze_dm = window_tables(subset, mmav2_positive_tail)
    raw_dm = raw_table(subset)

    win_split = SplitSpec(train_fraction, derive_seed(seed, "split", shape.value), stratify_by)
    strat = {"none": None, "segment": feats_dm.segment, "direction": feats_dm.direction}[stratify_by]
    train_idx, test_idx = split_indices(feats_dm.n_rows, win_split, strat)

    raw_split = SplitSpec(train_fraction, derive_seed(seed, "raw-split", shape.value), stratify_by)
    raw_strat = {"none": None, "segment": raw_dm.segment, "direction": raw_dm.direction}[stratify_by]
    raw_train, raw_test = split_indices(raw_dm.n_rows, raw_split, raw_strat)

    feats_scaled = scale_on_train(feats_dm, train_idx)
    gaze_scaled = scale_on_train(gaze_dm, train_idx)
    raw_scaled = scale_on_train(raw_dm, raw_train)

    step1_seed = derive_seed(seed, "step1", shape.value)
    step1_cfg = _mlp_config(gaze_scaled.values.shape[1], train_params, step1_seed)
    step1 = train_mlp(gaze_scaled.values[train_idx], gaze_scaled.segment[train_idx], step1_cfg)
    probs = step1.predict_proba(gaze_scaled.values)

    return {
        "records": subset,
        "features": feats_scaled,
        "gaze": gaze_scaled,
        "raw": raw_scaled,
        "train_idx": train_idx,
        "test_idx": test_idx,
        "raw_train": raw_train,
        "raw_test": raw_test,
        "step1_model": step1,
        "step1_seed": step1_seed,
        "probs": probs,
    }


def _setup_matrix(state, setup: SetupId) -> DataMatrix:
    return assemble_setup(
        setup,
        features=state["features"],
        gaze=state["gaze"],
        probs=state["probs"],
        raw=state["raw"],
    )


def run_two_step(records: list[ParticipantRecord], shape: TaskShape, cfg: TwoStepConfig) -> PipelineResult:
    """Step 1: gaze -> segment probabilities. Step 2: direction LSTM on the chosen setup."""
    state = _prepare_shape(
        records, shape, cfg.seed, cfg.train_fraction, cfg.stratify_by,
        cfg.mmav2_positive_tail, cfg.train,
    )
    step1_metrics = evaluate(
        state["step1_model"].predict(state["gaze"].values[state["test_idx"]]),
        state["gaze"].segment[state["test_idx"]],
        SEGMENT_COUNT,
    )

    setup_dm = _setup_matrix(state, cfg.direction_setup)
    train_idx = state["raw_train"] if cfg.direction_setup is SetupId.D1 else state["train_idx"]
    test_idx = state["raw_test"] if cfg.direction_setup is SetupId.D1 else state["test_idx"]
    lstm_seed = derive_seed(cfg.seed, "step2", shape.value, cfg.direction_setup.value)
    lstm_cfg = _lstm_config(setup_dm.values.shape[1], cfg.train, lstm_seed)
    _, step2_metrics = fit_eval_lstm(setup_dm, train_idx, test_idx, lstm_cfg)

    doc = asdict(cfg) | {"shape": shape.value}
    return PipelineResult(
        shape=shape,
        step1=step1_metrics,
        step2=step2_metrics,
        direction_setup=cfg.direction_setup,
        seeds={"root": cfg.seed, "step1": state["step1_seed"], "step2": lstm_seed},
        config_hash=config_hash(doc),
    )


# --- experiment grid ----------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    seed: int = 0
    steps: str = "all"  # segment | direction | all
    shapes: tuple[TaskShape, ...] = (TaskShape.DIAMOND, TaskShape.CIRCLE)
    train_fraction: float = 0.8
    stratify_by: str = "none"
    train: TrainParams = field(default_factory=TrainParams)
    mmav2_positive_tail: bool = False

    def validate(self):
        if self.steps not in ("segment", "direction", "all"):
            raise InvalidConfig(f"unknown grid steps '{self.steps}'")


@dataclass
class CellResult:
    step: str
    shape: str
    model: str
    setup: str
    metrics: Metrics
    seed: int
    wall_time: float


@dataclass
class GridReport:
    cells: list[CellResult]
    random_guess: dict  # (step, shape value) -> accuracy %
    root_seed: int
    config_hash: str

    def cell(self, step: str, shape: str, model: str, setup: str) -> CellResult | None:
        for c in self.cells:
            if (c.step, c.shape, c.model, c.setup) == (step, shape, model, setup):
                return c
        return None


def run_grid(records: list[ParticipantRecord], cfg: GridConfig) -> GridReport:
    """Train and score every requested (model, setup, shape) cell independently."""
    cfg.validate()
    cells: list[CellResult] = []
    random_guess: dict = {}
    for shape in cfg.shapes:
        state = _prepare_shape(
            records, shape, cfg.seed, cfg.train_fraction, cfg.stratify_by,
            cfg.mmav2_positive_tail, cfg.train,
        )
        steps = ("segment", "direction") if cfg.steps == "all" else (cfg.steps,)
        for step in steps:
            if step == "segment":
                setups, model_names, num_classes = SEGMENT_SETUPS, SEGMENT_MODELS, SEGMENT_COUNT
            else:
                setups, model_names, num_classes = DIRECTION_SETUPS, DIRECTION_MODELS, DIRECTION_CLASSES
            guess_labels = state["raw"].segment if step == "segment" else state["raw"].direction
            random_guess[(step, shape.value)] = random_guess_accuracy(
                guess_labels, num_classes, seed=derive_seed(cfg.seed, "guess", step, shape.value)
            )
            for setup in setups:
                dm = _setup_matrix(state, setup)
                is_raw = setup is SetupId.D1
                train_idx = state["raw_train"] if is_raw else state["train_idx"]
                test_idx = state["raw_test"] if is_raw else state["test_idx"]
                labels = dm.segment if step == "segment" else dm.direction
                for model_name in model_names:
                    cell_seed = derive_seed(cfg.seed, "cell", step, shape.value, model_name, setup.value)
                    started = time.perf_counter()
                    if model_name == "LSTM":
                        lstm_cfg = _lstm_config(dm.values.shape[1], cfg.train, cell_seed)
                        _, metrics = fit_eval_lstm(dm, train_idx, test_idx, lstm_cfg)
                    else:
                        _, metrics = fit_eval_rows(
                            model_name, dm, train_idx, test_idx, labels, num_classes, cfg.train, cell_seed
                        )
                    cells.append(
                        CellResult(
                            step=step,
                            shape=shape.value,
                            model=model_name,
                            setup=setup.value,
                            metrics=metrics,
                            seed=cell_seed,
                            wall_time=time.perf_counter() - started,
                        )
                    )
    return GridReport(
        cells=cells,
        random_guess=random_guess,
        root_seed=cfg.seed,
        config_hash=config_hash(asdict(cfg)),
    )


# --- reporting -------------------------------------------------------------------


def format_cell(metrics: Metrics) -> str:
    return f"{metrics.accuracy:.2f} [{metrics.macro_f1:.3f}]"


_TABLE_LAYOUT = {
    "segment": (SEGMENT_MODELS, tuple(s.value for s in SEGMENT_SETUPS)),
    "direction": (DIRECTION_MODELS, tuple(s.value for s in DIRECTION_SETUPS)),
}


def _table_cells(report: GridReport, step: str, shape: str) -> dict:
    models_, setups = _TABLE_LAYOUT[step]
    written = {}
    for model in models_:
        for setup in setups:
            cell = report.cell(step, shape, model, setup)
            if cell is not None:
                written[(model, setup)] = cell
    if written and len(written) != len(models_) * len(setups):
        missing = [
            (m, s) for m in models_ for s in setups if (m, s) not in written
        ]
        raise IncompleteTable(f"{step}/{shape}: missing cells {missing}")
    return written


def _best_key(cells: dict):
    if not cells:
        return None
    return max(cells, key=lambda k: (cells[k].metrics.accuracy, cells[k].metrics.macro_f1))


def render_text(report: GridReport) -> str:
    """Paper-style tables: accuracy (%) [macro F1] per cell, best cell emphasized."""
    lines = [
        "Motion-intention benchmark report",
        f"root seed: {report.root_seed} | config: {report.config_hash}",
        "caveat: the split is per-sample, so context windows can straddle the partition",
        "(within-participant information reuse is part of the protocol).",
        "",
    ]
    shapes = sorted({c.shape for c in report.cells}) or ["diamond", "circle"]
    for step in ("segment", "direction"):
        for shape in shapes:
            cells = _table_cells(report, step, shape)
            if not cells:
                continue
            models_, setups = _TABLE_LAYOUT[step]
            best = _best_key(cells)
            lines.append(f"== {step} prediction - {shape} (accuracy % [macro F1]) ==")
            if step == "segment":
                lines.append("model".ljust(8) + "".join(s.ljust(20) for s in setups))
                for model in models_:
                    row = [model.ljust(8)]
                    for setup in setups:
                        text = format_cell(cells[(model, setup)].metrics)
                        if (model, setup) == best:
                            text = f"**{text}**"
                        row.append(text.ljust(20))
                    lines.append("".join(row).rstrip())
            else:
                lines.append("setup".ljust(8) + "".join(m.ljust(20) for m in models_))
                for setup in setups:
                    row = [setup.ljust(8)]
                    for model in models_:
                        text = format_cell(cells[(model, setup)].metrics)
                        if (model, setup) == best:
                            text = f"**{text}**"
                        row.append(text.ljust(20))
                    lines.append("".join(row).rstrip())
            lines.append("")
    if report.random_guess:
        lines.append("== random-guess baselines (accuracy %) ==")
        for (step, shape), acc in sorted(report.random_guess.items()):
            lines.append(f"{step} prediction for {shape}: {acc:.2f}")
        lines.append("")
    return "\n".join(lines)


def render_csv(report: GridReport) -> str:
    """Flat cells: step,shape,model,setup,accuracy,f1,best."""
    lines = ["step,shape,model,setup,accuracy,f1,best"]
    bests = {}
    for step in ("segment", "direction"):
        for shape in sorted({c.shape for c in report.cells}):
            cells = _table_cells(report, step, shape)
            if cells:
                bests[(step, shape)] = _best_key(cells)
    for c in sorted(report.cells, key=lambda c: (c.step, c.shape, c.setup, c.model)):
        flag = int(bests.get((c.step, c.shape)) == (c.model, c.setup))
        lines.append(
            f"{c.step},{c.shape},{c.model},{c.setup},{c.metrics.accuracy:.2f},{c.metrics.macro_f1:.3f},{flag}"
        )
    for (step, shape), acc in sorted(report.random_guess.items()):
        lines.append(f"{step},{shape},RANDOM,,{acc:.2f},,0")
    return "\n".join(lines) + "\n"


def render_report(report: GridReport, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(report)
    if fmt == "csv":
        return render_csv(report)
    raise InvalidConfig(f"unknown report format '{fmt}'")


def parse_report_csv(path) -> GridReport:
    """Rebuild a renderable report from the flat CSV (confusions are not recoverable)."""
    cells = []
    random_guess = {}
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    for line in text[1:]:
        step, shape, model, setup, acc, f1, _best = line.split(",")
        if model == "RANDOM":
            random_guess[(step, shape)] = float(acc)
            continue
        cells.append(
            CellResult(
                step=step,
                shape=shape,
                model=model,
                setup=setup,
                metrics=Metrics(accuracy=float(acc), macro_f1=float(f1)),
                seed=0,
                wall_time=0.0,
            )
        )
    return GridReport(cells=cells, random_guess=random_guess, root_seed=0, config_hash="")


def reference_ordering_notes(report: GridReport) -> list[str]:
    """Informational ordering checks against the published reference results."""
    notes = []

    def acc(step, shape, model, setup):
        cell = report.cell(step, shape, model, setup)
        return cell.metrics.accuracy if cell else None

    for shape in ("diamond", "circle"):
        a_d3, a_d1 = acc("segment", shape, "NN", "D3"), acc("segment", shape, "NN", "D1")
        if a_d3 is not None and a_d1 is not None:
            status = "ok" if a_d3 > a_d1 else "deviation"
            notes.append(
                f"{status}: segment/{shape}: NN on gaze (D3) {a_d3:.2f} vs raw (D1) {a_d1:.2f} "
                "(reference expects D3 > D1)"
            )
        direction_cells = {
            (c.model, c.setup): c.metrics.accuracy
            for c in report.cells
            if c.step == "direction" and c.shape == shape
        }
        if direction_cells:
            best = max(direction_cells, key=lambda k: direction_cells[k])
            expected = ("LSTM", REFERENCE_BEST_DIRECTION_SETUP)
            favored = direction_cells.get(expected, float("-inf"))
            # a tie with the top cell still honors the expected ordering
            status = "ok" if favored >= direction_cells[best] - 1e-9 else "deviation"
            notes.append(
                f"{status}: direction/{shape}: best cell {best[0]}-{best[1]} at "
                f"{direction_cells[best]:.2f}, LSTM-D6 at {favored:.2f} "
                "(reference expects LSTM-D6 on top)"
            )
    d2, d1 = acc("direction", "diamond", "LSTM", "D2"), acc("direction", "diamond", "LSTM", "D1")
    if d2 is not None and d1 is not None:
        gap = d2 - d1
        status = "ok" if abs(gap - REFERENCE_FEATURE_GAIN_POINTS) <= 10.0 else "deviation"
        notes.append(
            f"{status}: direction/diamond: LSTM D2-D1 gap {gap:.2f} points "
            f"(reference reports about {REFERENCE_FEATURE_GAIN_POINTS})"
        )
    return notes


def write_run_outputs(
    outdir,
    report: GridReport | None,
    two_step: list[PipelineResult],
    run_meta: dict,
    reference_notes: list[str] | None = None,
) -> None:
    """Write report.txt/report.csv, per-cell confusions, provenance, and notes."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    lines = []
    for result in two_step:
        lines.append(
            f"two-step ({result.shape.value}, setup {result.direction_setup.value}): "
            f"step-1 segment {format_cell(result.step1)} | "
            f"step-2 direction {format_cell(result.step2)}"
        )
    two_step_text = "\n".join(lines)

    if report is not None:
        text = render_text(report)
        if two_step_text:
            text = text + "== two-step pipeline ==\n" + two_step_text + "\n"
        (outdir / "report.txt").write_text(text, encoding="utf-8")
        (outdir / "report.csv").write_text(render_csv(report), encoding="utf-8")
        confusion_dir = outdir / "confusions"
        confusion_dir.mkdir(exist_ok=True)
        for c in report.cells:
            name = f"{c.step}_{c.shape}_{c.model}_{c.setup}.csv"
            rows = "\n".join(",".join(str(v) for v in row) for row in c.metrics.confusion)
            (confusion_dir / name).write_text(rows + "\n", encoding="utf-8")
    else:
        (outdir / "report.txt").write_text(two_step_text + "\n", encoding="utf-8")

    meta = dict(run_meta)
    if report is not None:
        meta["cells"] = [
            {
                "step": c.step,
                "shape": c.shape,
                "model": c.model,
                "setup": c.setup,
                "seed": c.seed,
                "wall_time_s": c.wall_time,
            }
            for c in report.cells
        ]
    meta["two_step"] = [
        {
            "shape": r.shape.value,
            "setup": r.direction_setup.value,
            "step1_accuracy": r.step1.accuracy,
            "step2_accuracy": r.step2.accuracy,
            "seeds": r.seeds,
            "config_hash": r.config_hash,
        }
        for r in two_step
    ]
    (outdir / "run.json").write_text(json.dumps(meta, indent=2, default=str), encoding="utf-8")

    if reference_notes:
        (outdir / "reference_checks.txt").write_text(
            "informational ordering checks (never gating):\n" + "\n".join(reference_notes) + "\n",
            encoding="utf-8",
        )
