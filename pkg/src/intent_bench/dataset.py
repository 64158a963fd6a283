"""Dataset layer: trace segmentation, labels, synthetic cohorts, CSV ingestion.

A participant-task is one traversal of 40 hit points on a traced shape.
Resistance is sampled continuously between hits; gaze is captured once per
hit. Windows are the inter-hit spans of the resistance trace and carry the
segment label of their destination hit.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyWindow,
    InvalidConfig,
    IoError,
    MissingColumn,
    NonMonotonicTimestamp,
    NonNumericValue,
    OutOfRange,
    RowWidthMismatch,
)

HITS_PER_TASK = 40
WINDOWS_PER_TASK = HITS_PER_TASK - 1
SEGMENT_COUNT = 4
HITS_PER_SEGMENT = HITS_PER_TASK // SEGMENT_COUNT


class TaskShape(Enum):
    DIAMOND = "diamond"
    CIRCLE = "circle"


class Direction(Enum):
    CW = "cw"
    CCW = "ccw"

    @property
    def label(self) -> int:
        return 0 if self is Direction.CW else 1


@dataclass(frozen=True)
class HitEvent:
    hit_index: int
    timestamp_ms: float


@dataclass
class ResistanceTrace:
    participant_id: str
    shape: TaskShape
    times: np.ndarray  # ms, non-decreasing
    values: np.ndarray  # ohms, finite


@dataclass
class SegmentWindow:
    values: np.ndarray  # resistance samples, N >= 2
    source_hit: int
    dest_hit: int


@dataclass
class ParticipantRecord:
    participant_id: str
    shape: TaskShape
    direction: Direction
    windows: list[SegmentWindow]  # exactly 39
    gaze: np.ndarray  # (40, G)
    hit_values: np.ndarray  # (40,) resistance sampled at each hit instant


def assign_segment_label(hit_index: int) -> int:
    """Segment of a hit point: four contiguous arcs of 10 hits each."""
    if not 1 <= hit_index <= HITS_PER_TASK:
        raise OutOfRange(f"hit_index {hit_index} outside 1..{HITS_PER_TASK}")
    return (hit_index - 1) // HITS_PER_SEGMENT


def _check_events(events: list[HitEvent]) -> None:
    if len(events) != HITS_PER_TASK:
        raise InvalidConfig(f"expected {HITS_PER_TASK} hit events, got {len(events)}")
    for k, ev in enumerate(events, start=1):
        if ev.hit_index != k:
            raise OutOfRange(f"hit events must be numbered 1..{HITS_PER_TASK} in order")
    ts = [ev.timestamp_ms for ev in events]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InvalidConfig("hit event timestamps must be strictly increasing")


def segment_trace(trace: ResistanceTrace, events: list[HitEvent]) -> list[SegmentWindow]:
    """Partition a trace into the 39 half-open inter-hit windows [t_k, t_{k+1})."""
    _check_events(events)
    ts = np.asarray([ev.timestamp_ms for ev in events])
    bounds = np.searchsorted(trace.times, ts, side="left")
    windows = []
    for k in range(WINDOWS_PER_TASK):
        lo, hi = bounds[k], bounds[k + 1]
        if hi - lo < 2:
            raise EmptyWindow(k + 1)
        windows.append(
            SegmentWindow(values=trace.values[lo:hi].copy(), source_hit=k + 1, dest_hit=k + 2)
        )
    return windows


def raw_at_hits(trace: ResistanceTrace, events: list[HitEvent]) -> np.ndarray:
    """Resistance sampled at each hit instant: nearest trace sample, ties to the earlier one."""
    _check_events(events)
    out = np.empty(HITS_PER_TASK)
    n = len(trace.times)
    for i, ev in enumerate(events):
        j = int(np.searchsorted(trace.times, ev.timestamp_ms, side="left"))
        if j == 0:
            pick = 0
        elif j >= n:
            pick = n - 1
        else:
            before, after = ev.timestamp_ms - trace.times[j - 1], trace.times[j] - ev.timestamp_ms
            pick = j - 1 if before <= after else j
        out[i] = trace.values[pick]
    return out


# --- synthetic cohort ---------------------------------------------------

# Per-shape flexion/extension cadence: each inter-hit span holds an integer
# number of raised-cosine flexion bumps, so the signal is continuous across
# hits, palindromic within every span, and exactly at the resting level when
# a hit instant is sampled. Effort ramps up over a 13-span cycle (3 cycles
# per traversal); only the traversal order of the cadence distinguishes the
# two directions.
_CADENCE_PERIOD = 13


def _span_cadence(shape: TaskShape, position: int) -> tuple[int, float]:
    """(bumps, gain scale) at cadence phase `position` (0-based span index)."""
    p = position % _CADENCE_PERIOD
    if shape is TaskShape.DIAMOND:
        return 1 + p % 4, 0.70 + 0.06 * p
    return 1 + (p + 2) % 4, 0.75 + 0.055 * p


@dataclass(frozen=True)
class SynthConfig:
    samples_per_window: int = 20
    window_ms: float = 500.0
    base_ohm: float = 1000.0
    amplitude_ohm: float = 80.0
    noise_std: float = 2.0
    gaze_width: int = 24
    gaze_noise: float = 0.25

    def validate(self) -> None:
        if self.amplitude_ohm <= 0:
            raise InvalidConfig("amplitude_ohm must be positive")
        if self.noise_std < 0 or self.gaze_noise < 0:
            raise InvalidConfig("noise levels must be non-negative")
        if self.samples_per_window < 2:
            raise InvalidConfig("samples_per_window must be at least 2")
        if self.gaze_width < SEGMENT_COUNT:
            raise InvalidConfig(f"gaze_width must be at least {SEGMENT_COUNT}")
        if self.base_ohm <= 1.25 * self.amplitude_ohm:
            raise InvalidConfig("base_ohm must dominate amplitude_ohm to keep resistance positive")


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _span_profile(shape: TaskShape, direction: Direction, span: int, amplitude: float):
    """(bumps, gain) of inter-hit span `span` (1-based) for one traversal.

    Counterclockwise runs play the clockwise cadence in reversed span order;
    individual spans are palindromic, so mirroring a span leaves it unchanged.
    """
    if direction is Direction.CW:
        position = span - 1
    else:
        position = WINDOWS_PER_TASK - span
    f, scale = _span_cadence(shape, position)
    return f, amplitude * scale


def synth_events(cfg: SynthConfig) -> list[HitEvent]:
    return [HitEvent(k, (k - 1) * cfg.window_ms) for k in range(1, HITS_PER_TASK + 1)]


def synth_trace(
    seed: int, participant_id: str, shape: TaskShape, direction: Direction, cfg: SynthConfig
) -> tuple[ResistanceTrace, list[HitEvent], np.ndarray]:
    """Generate one participant-task: trace, hit events, and (40, G) gaze rows."""
    cfg.validate()
    rng = np.random.default_rng(_derive_seed("synth", seed, participant_id, shape.value, direction.value))
    events = synth_events(cfg)
    m = cfg.samples_per_window

    times = np.empty(WINDOWS_PER_TASK * m + 1)
    values = np.empty_like(times)
    phase = np.arange(m) / m
    for span in range(1, WINDOWS_PER_TASK + 1):
        f, gain = _span_profile(shape, direction, span, cfg.amplitude_ohm)
        lo = (span - 1) * m
        times[lo : lo + m] = (span - 1) * cfg.window_ms + phase * cfg.window_ms
        values[lo : lo + m] = cfg.base_ohm + gain * 0.5 * (1.0 - np.cos(2 * math.pi * f * phase))
    times[-1] = events[-1].timestamp_ms
    values[-1] = cfg.base_ohm
    if cfg.noise_std > 0:
        values = values + rng.normal(0.0, cfg.noise_std, size=values.shape)

    gaze = np.empty((HITS_PER_TASK, cfg.gaze_width))
    gaze[:, SEGMENT_COUNT:] = rng.normal(0.0, 1.0, size=(HITS_PER_TASK, cfg.gaze_width - SEGMENT_COUNT))
    onehot = np.zeros((HITS_PER_TASK, SEGMENT_COUNT))
    for k in range(1, HITS_PER_TASK + 1):
        onehot[k - 1, assign_segment_label(k)] = 1.0
    gaze[:, :SEGMENT_COUNT] = onehot
    if cfg.gaze_noise > 0:
        gaze[:, :SEGMENT_COUNT] += rng.normal(0.0, cfg.gaze_noise, size=onehot.shape)

    trace = ResistanceTrace(participant_id=participant_id, shape=shape, times=times, values=values)
    return trace, events, gaze


def build_record(
    participant_id: str,
    shape: TaskShape,
    direction: Direction,
    trace: ResistanceTrace,
    events: list[HitEvent],
    gaze: np.ndarray,
) -> ParticipantRecord:
    if gaze.shape[0] != HITS_PER_TASK:
        raise InvalidConfig(f"expected {HITS_PER_TASK} gaze rows, got {gaze.shape[0]}")
    return ParticipantRecord(
        participant_id=participant_id,
        shape=shape,
        direction=direction,
        windows=segment_trace(trace, events),
        gaze=np.asarray(gaze, dtype=float),
        hit_values=raw_at_hits(trace, events),
    )


def synth_participant(
    seed: int,
    shape: TaskShape,
    direction: Direction,
    cfg: SynthConfig | None = None,
    participant_id: str | None = None,
) -> ParticipantRecord:
    """Deterministic synthetic participant-task; identical (seed, cfg) gives an identical record."""
    cfg = cfg or SynthConfig()
    pid = participant_id if participant_id is not None else f"s{seed}"
    trace, events, gaze = synth_trace(seed, pid, shape, direction, cfg)
    return build_record(pid, shape, direction, trace, events, gaze)


def synth_cohort(
    seed: int,
    participants: int = 16,
    cfg: SynthConfig | None = None,
    shapes: tuple[TaskShape, ...] = (TaskShape.DIAMOND, TaskShape.CIRCLE),
) -> list[ParticipantRecord]:
    """Cohort of `participants` across the given shapes, directions alternating cw/ccw."""
    cfg = cfg or SynthConfig()
    records = []
    for i in range(participants):
        pid = f"p{i:02d}"
        direction = Direction.CW if i % 2 == 0 else Direction.CCW
        for shape in shapes:
            records.append(synth_participant(seed + i, shape, direction, cfg, participant_id=pid))
    return records


# --- CSV interchange ----------------------------------------------------

RESISTANCE_COLUMNS = ("participant_id", "shape", "timestamp_ms", "resistance_ohm")
HITS_COLUMNS = ("participant_id", "shape", "hit_index", "timestamp_ms")
PARTICIPANTS_COLUMNS = ("participant_id", "direction")


def _open_rows(path: Path):
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    return handle


def _header_index(header: list[str], required: tuple[str, ...], path: Path) -> dict[str, int]:
    idx = {name: i for i, name in enumerate(header)}
    for name in required:
        if name not in idx:
            raise MissingColumn(f"{path}: missing column '{name}'")
    return idx


def _parse_float(raw: str, row: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise NonNumericValue(row, f"cannot parse '{raw}' as a number at file row {row}") from None
    if not math.isfinite(value):
        raise NonNumericValue(row, f"non-finite value '{raw}' at file row {row}")
    return value


def _parse_shape(raw: str, row: int) -> TaskShape:
    try:
        return TaskShape(raw)
    except ValueError:
        raise NonNumericValue(row, f"unknown shape '{raw}' at file row {row}") from None


def load_resistance_csv(path, hit_events=None) -> list[ResistanceTrace]:
    """Load resistance traces, one per (participant, shape) pair, in file order.

    Rows of a pair must appear in non-decreasing timestamp order. Row numbers
    in errors are 1-based file lines (the header is line 1). When `hit_events`
    maps (participant_id, shape) to hit lists, each trace is checked to hold
    at least 2 samples per inter-hit span.
    """
    path = Path(path)
    grouped: dict[tuple[str, TaskShape], tuple[list[float], list[float]]] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file")
        idx = _header_index(header, RESISTANCE_COLUMNS, path)
        for row_no, row in enumerate(reader, start=2):
            if len(row) < len(header):
                raise RowWidthMismatch(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            pid = row[idx["participant_id"]]
            shape = _parse_shape(row[idx["shape"]], row_no)
            t = _parse_float(row[idx["timestamp_ms"]], row_no)
            r = _parse_float(row[idx["resistance_ohm"]], row_no)
            times, values = grouped.setdefault((pid, shape), ([], []))
            if times and t < times[-1]:
                raise NonMonotonicTimestamp(row_no)
            times.append(t)
            values.append(r)

    traces = [
        ResistanceTrace(pid, shape, np.asarray(ts), np.asarray(vs))
        for (pid, shape), (ts, vs) in grouped.items()
    ]
    if hit_events is not None:
        for trace in traces:
            events = hit_events.get((trace.participant_id, trace.shape))
            if events is not None:
                segment_trace(trace, events)  # raises EmptyWindow on sparse spans
    return traces


def load_hits_csv(path) -> dict[tuple[str, TaskShape], list[HitEvent]]:
    path = Path(path)
    grouped: dict[tuple[str, TaskShape], list[HitEvent]] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file")
        idx = _header_index(header, HITS_COLUMNS, path)
        for row_no, row in enumerate(reader, start=2):
            if len(row) < len(header):
                raise RowWidthMismatch(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            pid = row[idx["participant_id"]]
            shape = _parse_shape(row[idx["shape"]], row_no)
            hit = int(_parse_float(row[idx["hit_index"]], row_no))
            t = _parse_float(row[idx["timestamp_ms"]], row_no)
            grouped.setdefault((pid, shape), []).append(HitEvent(hit, t))
    for key, events in grouped.items():
        events.sort(key=lambda ev: ev.hit_index)
        _check_events(events)
    return grouped


def load_gaze_csv(path) -> dict[tuple[str, TaskShape], np.ndarray]:
    """Load (40, G) gaze tables; G is fixed by the header and every row must match it."""
    path = Path(path)
    grouped: dict[tuple[str, TaskShape], dict[int, np.ndarray]] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file")
        for name in ("participant_id", "shape", "hit_index"):
            if name not in header:
                raise MissingColumn(f"{path}: missing column '{name}'")
        width = len(header) - 3
        if width < 1:
            raise MissingColumn(f"{path}: no gaze feature columns")
        idx = {name: i for i, name in enumerate(header)}
        gcols = [i for i, name in enumerate(header) if name not in ("participant_id", "shape", "hit_index")]
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise RowWidthMismatch(
                    f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}"
                )
            pid = row[idx["participant_id"]]
            shape = _parse_shape(row[idx["shape"]], row_no)
            hit = int(_parse_float(row[idx["hit_index"]], row_no))
            feats = np.asarray([_parse_float(row[i], row_no) for i in gcols])
            grouped.setdefault((pid, shape), {})[hit] = feats

    tables = {}
    for key, by_hit in grouped.items():
        if sorted(by_hit) != list(range(1, HITS_PER_TASK + 1)):
            raise InvalidConfig(f"gaze rows for {key} do not cover hits 1..{HITS_PER_TASK}")
        tables[key] = np.vstack([by_hit[k] for k in range(1, HITS_PER_TASK + 1)])
    return tables


def load_participants_csv(path) -> dict[str, Direction]:
    path = Path(path)
    directions = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file")
        idx = _header_index(header, PARTICIPANTS_COLUMNS, path)
        for row_no, row in enumerate(reader, start=2):
            if len(row) < len(header):
                raise RowWidthMismatch(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            pid = row[idx["participant_id"]]
            try:
                directions[pid] = Direction(row[idx["direction"]])
            except ValueError:
                raise NonNumericValue(
                    row_no, f"unknown direction '{row[idx['direction']]}' at file row {row_no}"
                ) from None
    return directions


def write_dataset_csvs(
    tasks: list[tuple[str, TaskShape, Direction, ResistanceTrace, list[HitEvent], np.ndarray]],
    outdir,
) -> dict[str, Path]:
    """Write resistance/hits/gaze/participants CSVs for a list of generated tasks."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {name: outdir / f"{name}.csv" for name in ("resistance", "hits", "gaze", "participants")}

    with open(paths["resistance"], "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(RESISTANCE_COLUMNS)
        for pid, shape, _direction, trace, _events, _gaze in tasks:
            for t, r in zip(trace.times, trace.values):
                w.writerow([pid, shape.value, repr(float(t)), repr(float(r))])

    with open(paths["hits"], "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(HITS_COLUMNS)
        for pid, shape, _direction, _trace, events, _gaze in tasks:
            for ev in events:
                w.writerow([pid, shape.value, ev.hit_index, repr(float(ev.timestamp_ms))])

    with open(paths["gaze"], "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        width = tasks[0][5].shape[1] if tasks else 0
        w.writerow(["participant_id", "shape", "hit_index"] + [f"g{i + 1}" for i in range(width)])
        for pid, shape, _direction, _trace, _events, gaze in tasks:
            for k in range(gaze.shape[0]):
                w.writerow([pid, shape.value, k + 1] + [repr(float(v)) for v in gaze[k]])

    with open(paths["participants"], "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(PARTICIPANTS_COLUMNS)
        seen = set()
        for pid, _shape, direction, _trace, _events, _gaze in tasks:
            if pid not in seen:
                seen.add(pid)
                w.writerow([pid, direction.value])

    return paths


def records_from_csv_dir(data_dir) -> list[ParticipantRecord]:
    """Assemble ParticipantRecords from the four dataset CSVs in `data_dir`."""
    data_dir = Path(data_dir)
    for name in ("resistance", "hits", "gaze", "participants"):
        if not (data_dir / f"{name}.csv").exists():
            raise IoError(f"missing dataset file: {data_dir / f'{name}.csv'}")
    hits = load_hits_csv(data_dir / "hits.csv")
    traces = load_resistance_csv(data_dir / "resistance.csv", hit_events=hits)
    gaze = load_gaze_csv(data_dir / "gaze.csv")
    directions = load_participants_csv(data_dir / "participants.csv")

    widths = {table.shape[1] for table in gaze.values()}
    if len(widths) > 1:
        raise RowWidthMismatch(f"mixed gaze widths across tables: {sorted(widths)}")

    records = []
    for trace in traces:
        key = (trace.participant_id, trace.shape)
        if key not in hits:
            raise IoError(f"no hit events for {key}")
        if key not in gaze:
            raise IoError(f"no gaze rows for {key}")
        if trace.participant_id not in directions:
            raise IoError(f"no direction for participant {trace.participant_id}")
        records.append(
            build_record(
                trace.participant_id,
                trace.shape,
                directions[trace.participant_id],
                trace,
                hits[key],
                gaze[key],
            )
        )
    return records
