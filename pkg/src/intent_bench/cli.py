"""Command-line driver: synthesize data, export features, run experiments, re-render reports.

Runs are reproducible from one root seed plus a key-value config file; every
flag overrides its config entry. Failures exit nonzero with a single
`error[Name]: message` diagnostic line.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import dataset, pipeline
from .dataset import Direction, SynthConfig, TaskShape
from .errors import IntentBenchError, InvalidConfig, IoError
from .features import SetupId, export_features_csv
from .pipeline import GridConfig, TrainParams, TwoStepConfig

ENV_SEED = "INTENT_BENCH_SEED"

# dotted config key -> (type, default)
CONFIG_KEYS = {
    "seed": (int, 0),
    "out": (str, "runs/latest"),
    "shape": (str, "both"),
    "data.source": (str, "synthetic"),
    "data.dir": (str, ""),
    "data.participants": (int, 16),
    "data.gaze_width": (int, 24),
    "data.samples_per_window": (int, 20),
    "data.noise_std": (float, 2.0),
    "data.gaze_noise": (float, 0.25),
    "data.base_ohm": (float, 1000.0),
    "data.amplitude_ohm": (float, 80.0),
    "split.train_fraction": (float, 0.8),
    "split.stratify": (str, "none"),
    "grid.steps": (str, ""),
    "run.two_step": (bool, True),
    "run.direction_setup": (str, "D6"),
    "features.mmav2_positive_tail": (bool, False),
    "train.mlp_epochs": (int, 50),
    "train.mlp_batch": (int, 32),
    "train.mlp_lr": (float, 0.001),
    "train.lstm_epochs": (int, 50),
    "train.lstm_batch": (int, 32),
    "train.lstm_lr": (float, 0.001),
    "train.lstm_l2": (float, 0.01),
    "train.lstm_hidden": (int, 50),
    "train.lstm_layers": (int, 2),
    "train.window_len": (int, 5),
    "train.lstm_mode": (str, "windowed"),
    "train.baseline_epochs": (int, 200),
    "train.knn_k": (int, 5),
    "train.svm_lambda": (float, 0.01),
    "train.logreg_lr": (float, 0.1),
}


def _parse_value(raw: str, typ, key: str):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise InvalidConfig(f"config key '{key}': cannot parse '{raw}' as a boolean")
    if typ is str:
        return raw.strip("\"'")
    try:
        return typ(raw)
    except ValueError:
        raise InvalidConfig(f"config key '{key}': cannot parse '{raw}' as {typ.__name__}") from None


def load_config_file(path) -> dict:
    """Parse the flat TOML-style `key = value` config with [section] headers."""
    values = {}
    section = ""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise InvalidConfig(f"{path}:{line_no}: expected 'key = value'")
        name, raw = stripped.split("=", 1)
        key = f"{section}.{name.strip()}" if section else name.strip()
        if key not in CONFIG_KEYS:
            raise InvalidConfig(f"unknown config key '{key}'")
        values[key] = _parse_value(raw, CONFIG_KEYS[key][0], key)
    return values


def resolve_config(args) -> dict:
    cfg = {key: default for key, (_typ, default) in CONFIG_KEYS.items()}
    if os.environ.get(ENV_SEED):
        cfg["seed"] = _parse_value(os.environ[ENV_SEED], int, ENV_SEED)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    overrides = {
        "seed": getattr(args, "seed", None),
        "out": getattr(args, "out", None),
        "shape": getattr(args, "shape", None),
        "data.participants": getattr(args, "participants", None),
        "grid.steps": getattr(args, "grid", None),
    }
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if getattr(args, "synthetic", False):
        cfg["data.source"] = "synthetic"
    if getattr(args, "data", None):
        cfg["data.source"] = "csv"
        cfg["data.dir"] = args.data
    if cfg["data.source"] not in ("synthetic", "csv"):
        raise InvalidConfig(f"unknown data source '{cfg['data.source']}'")
    if cfg["data.source"] == "csv" and not cfg["data.dir"]:
        raise InvalidConfig("csv data source needs --data DIR (or data.dir in the config)")
    return cfg


def _shapes(cfg) -> tuple[TaskShape, ...]:
    choice = cfg["shape"]
    if choice == "both":
        return (TaskShape.DIAMOND, TaskShape.CIRCLE)
    try:
        return (TaskShape(choice),)
    except ValueError:
        raise InvalidConfig(f"unknown shape '{choice}'") from None


def _synth_config(cfg) -> SynthConfig:
    return SynthConfig(
        samples_per_window=cfg["data.samples_per_window"],
        base_ohm=cfg["data.base_ohm"],
        amplitude_ohm=cfg["data.amplitude_ohm"],
        noise_std=cfg["data.noise_std"],
        gaze_width=cfg["data.gaze_width"],
        gaze_noise=cfg["data.gaze_noise"],
    )


def _train_params(cfg) -> TrainParams:
    return TrainParams(
        mlp_epochs=cfg["train.mlp_epochs"],
        mlp_batch=cfg["train.mlp_batch"],
        mlp_lr=cfg["train.mlp_lr"],
        lstm_epochs=cfg["train.lstm_epochs"],
        lstm_batch=cfg["train.lstm_batch"],
        lstm_lr=cfg["train.lstm_lr"],
        lstm_l2=cfg["train.lstm_l2"],
        lstm_hidden=cfg["train.lstm_hidden"],
        lstm_layers=cfg["train.lstm_layers"],
        window_len=cfg["train.window_len"],
        lstm_mode=cfg["train.lstm_mode"],
        baseline_epochs=cfg["train.baseline_epochs"],
        knn_k=cfg["train.knn_k"],
        svm_lambda=cfg["train.svm_lambda"],
        logreg_lr=cfg["train.logreg_lr"],
    )


def _load_records(cfg):
    if cfg["data.source"] == "csv":
        return dataset.records_from_csv_dir(cfg["data.dir"])
    return dataset.synth_cohort(cfg["seed"], cfg["data.participants"], _synth_config(cfg))


def cmd_synth(cfg) -> int:
    """Write resistance/hits/gaze/participants CSVs for a synthetic cohort."""
    synth_cfg = _synth_config(cfg)
    tasks = []
    for i in range(cfg["data.participants"]):
        pid = f"p{i:02d}"
        direction = Direction.CW if i % 2 == 0 else Direction.CCW
        for shape in (TaskShape.DIAMOND, TaskShape.CIRCLE):
            trace, events, gaze = dataset.synth_trace(cfg["seed"] + i, pid, shape, direction, synth_cfg)
            tasks.append((pid, shape, direction, trace, events, gaze))
    paths = dataset.write_dataset_csvs(tasks, cfg["out"])
    for name, path in sorted(paths.items()):
        print(f"wrote {name}: {path}")
    return 0


def cmd_features(cfg) -> int:
    """Export per-shape window-level feature tables from a dataset directory."""
    records = _load_records(cfg)
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    for shape in _shapes(cfg):
        subset = pipeline.records_for_shape(records, shape)
        features_dm, _gaze = pipeline.window_tables(subset, cfg["features.mmav2_positive_tail"])
        path = outdir / f"features_{shape.value}.csv"
        export_features_csv(features_dm, path)
        print(f"wrote {features_dm.n_rows}x{features_dm.values.shape[1]} features: {path}")
    return 0


def cmd_run(cfg) -> int:
    """Run the two-step pipeline and/or the experiment grid, then write the report."""
    records = _load_records(cfg)
    shapes = _shapes(cfg)
    train = _train_params(cfg)

    two_step_results = []
    if cfg["run.two_step"]:
        try:
            setup = SetupId(cfg["run.direction_setup"])
        except ValueError:
            raise InvalidConfig(f"unknown direction setup '{cfg['run.direction_setup']}'") from None
        ts_cfg = TwoStepConfig(
            seed=cfg["seed"],
            train_fraction=cfg["split.train_fraction"],
            stratify_by=cfg["split.stratify"],
            direction_setup=setup,
            train=train,
            mmav2_positive_tail=cfg["features.mmav2_positive_tail"],
        )
        for shape in shapes:
            result = pipeline.run_two_step(records, shape, ts_cfg)
            two_step_results.append(result)
            print(
                f"two-step {shape.value}: step-1 {pipeline.format_cell(result.step1)} | "
                f"step-2 {pipeline.format_cell(result.step2)} on {setup.value}"
            )

    report = None
    notes = None
    if cfg["grid.steps"]:
        grid_cfg = GridConfig(
            seed=cfg["seed"],
            steps=cfg["grid.steps"],
            shapes=shapes,
            train_fraction=cfg["split.train_fraction"],
            stratify_by=cfg["split.stratify"],
            train=train,
            mmav2_positive_tail=cfg["features.mmav2_positive_tail"],
        )
        report = pipeline.run_grid(records, grid_cfg)
        notes = pipeline.reference_ordering_notes(report)
        for note in notes:
            print(note)

    run_meta = {
        "root_seed": cfg["seed"],
        "config_hash": pipeline.config_hash(cfg),
        "data_source": cfg["data.source"],
        "shapes": [s.value for s in shapes],
    }
    pipeline.write_run_outputs(cfg["out"], report, two_step_results, run_meta, notes)
    print(f"outputs written to {cfg['out']}")
    return 0


def cmd_report(cfg) -> int:
    """Re-render report.txt from an existing report.csv in the output directory."""
    csv_path = Path(cfg["out"]) / "report.csv"
    if not csv_path.exists():
        raise IoError(f"no report.csv in {cfg['out']}")
    report = pipeline.parse_report_csv(csv_path)
    text = pipeline.render_text(report)
    (Path(cfg["out"]) / "report.txt").write_text(text, encoding="utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intent-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("synth", "generate synthetic dataset CSVs"),
        ("features", "export window-level feature tables"),
        ("run", "run the two-step pipeline and/or the grid"),
        ("report", "re-render report.txt from report.csv"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--seed", type=int, help=f"root seed (fallback: ${ENV_SEED})")
        p.add_argument("--out", help="output directory")
        p.add_argument("--synthetic", action="store_true", help="use the synthetic data source")
        p.add_argument("--data", help="directory holding the dataset CSVs")
        p.add_argument("--participants", type=int, help="synthetic cohort size")
        p.add_argument("--shape", choices=["diamond", "circle", "both"], help="task shape(s)")
        if name == "run":
            p.add_argument("--grid", choices=["segment", "direction", "all"], help="grid scope")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        handler = {
            "synth": cmd_synth,
            "features": cmd_features,
            "run": cmd_run,
            "report": cmd_report,
        }[args.command]
        return handler(cfg)
    except IntentBenchError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
