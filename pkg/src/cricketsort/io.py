"""File formats.

Line-oriented everything: annotation and prediction files are whitespace
token lines, detection logs and command timelines are JSONL, flat tables are
CSV. All parsers raise ParseError with a 1-based line number; all writers
round-trip exactly through their parser.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
from typing import Iterable, Iterator

from .boxes import (
    Detection,
    FrameObservations,
    GroundTruthBox,
    NormBBox,
    SexLabel,
    sex_from_name,
)
from .controller import ArmCommand, command_from_name
from .errors import ConfigError, GeometryError, ParseError
from .metrics import (
    DEFAULT_ZONE_MM,
    ArrivalEvent,
    SortConfusion,
    SpeedRecord,
)

LabelMap = dict[int, SexLabel]

#: Annotation label codes, alphabetical over class names.
DEFAULT_LABEL_MAP: LabelMap = {0: SexLabel.FEMALE, 1: SexLabel.MALE}


def label_map_from_dict(raw: dict) -> LabelMap:
    """Build a label map from a config mapping of code -> sex name."""
    mapping: LabelMap = {}
    for key, value in raw.items():
        try:
            code = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"label map code {key!r} is not an integer") from None
        try:
            sex = sex_from_name(value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if code in mapping:
            raise ConfigError(f"label map repeats code {code}")
        mapping[code] = sex
    if set(mapping.values()) != {SexLabel.FEMALE, SexLabel.MALE}:
        raise ConfigError("label map must cover both sexes exactly once")
    return mapping


def _reverse_label_map(label_map: LabelMap) -> dict[SexLabel, int]:
    return {sex: code for code, sex in label_map.items()}


def _parse_box_tokens(tokens: list[str], line_no: int) -> NormBBox:
    try:
        cx, cy, w, h = (float(t) for t in tokens)
    except ValueError:
        raise ParseError(line_no, "coordinates must be numeric") from None
    for name, value in (("cx", cx), ("cy", cy)):
        if not 0.0 <= value <= 1.0:
            raise ParseError(line_no, f"{name}={value} outside [0, 1]")
    for name, value in (("w", w), ("h", h)):
        if not 0.0 < value <= 1.0:
            raise ParseError(line_no, f"{name}={value} outside (0, 1]")
    try:
        return NormBBox(cx, cy, w, h)
    except GeometryError as exc:
        raise ParseError(line_no, str(exc)) from None


def _parse_label_code(token: str, label_map: LabelMap, line_no: int) -> SexLabel:
    try:
        code = int(token)
    except ValueError:
        raise ParseError(line_no, f"label id {token!r} is not an integer") from None
    if code not in label_map:
        raise ParseError(line_no, f"unknown label id {code}")
    return label_map[code]


def parse_annotation_text(text: str, label_map: LabelMap | None = None) -> list[GroundTruthBox]:
    """Parse a ground-truth annotation file: `<label_id> <cx> <cy> <w> <h>` per line."""
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    boxes: list[GroundTruthBox] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise ParseError(line_no, f"expected 5 fields, got {len(tokens)}")
        label = _parse_label_code(tokens[0], label_map, line_no)
        boxes.append(GroundTruthBox(_parse_box_tokens(tokens[1:], line_no), label))
    return boxes


def serialize_annotations(boxes: Iterable[GroundTruthBox], label_map: LabelMap | None = None) -> str:
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    reverse = _reverse_label_map(label_map)
    lines = [
        f"{reverse[b.label]} {b.bbox.cx!r} {b.bbox.cy!r} {b.bbox.w!r} {b.bbox.h!r}"
        for b in boxes
    ]
    return "".join(line + "\n" for line in lines)


def parse_prediction_text(text: str, label_map: LabelMap | None = None) -> list[Detection]:
    """Parse a prediction file: annotation fields plus a trailing confidence."""
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    detections: list[Detection] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != 6:
            raise ParseError(line_no, f"expected 6 fields, got {len(tokens)}")
        label = _parse_label_code(tokens[0], label_map, line_no)
        bbox = _parse_box_tokens(tokens[1:5], line_no)
        try:
            confidence = float(tokens[5])
        except ValueError:
            raise ParseError(line_no, f"confidence {tokens[5]!r} is not numeric") from None
        if not 0.0 <= confidence <= 1.0:
            raise ParseError(line_no, f"confidence {confidence} outside [0, 1]")
        detections.append(Detection(bbox, label, confidence))
    return detections


def serialize_predictions(detections: Iterable[Detection], label_map: LabelMap | None = None) -> str:
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    reverse = _reverse_label_map(label_map)
    lines = [
        f"{reverse[d.label]} {d.bbox.cx!r} {d.bbox.cy!r} {d.bbox.w!r} {d.bbox.h!r} {d.confidence!r}"
        for d in detections
    ]
    return "".join(line + "\n" for line in lines)


_FRAME_KEYS = {"frame_index", "timestamp_ms", "detections"}
_DETECTION_KEYS = {"label", "confidence", "cx", "cy", "w", "h"}


def _require_int(obj: dict, key: str, line_no: int) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(line_no, f"{key} must be an integer, got {value!r}")
    if value < 0:
        raise ParseError(line_no, f"{key} must be non-negative, got {value}")
    return value


def _require_number(obj: dict, key: str, line_no: int) -> float:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(line_no, f"{key} must be a number, got {value!r}")
    return float(value)


def iter_detection_log(lines: Iterable[str]) -> Iterator[FrameObservations]:
    """Stream a detection log (one frame per JSONL line), validating order.

    Frame indices must strictly increase and timestamps must not go
    backwards; violations raise ParseError naming the offending line.
    """
    last_index: int | None = None
    last_timestamp: int | None = None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ParseError(line_no, "frame record must be a JSON object")
        unknown = set(obj) - _FRAME_KEYS
        if unknown:
            raise ParseError(line_no, f"unknown keys {sorted(unknown)}")
        missing = _FRAME_KEYS - set(obj)
        if missing:
            raise ParseError(line_no, f"missing keys {sorted(missing)}")
        frame_index = _require_int(obj, "frame_index", line_no)
        timestamp_ms = _require_int(obj, "timestamp_ms", line_no)
        raw_dets = obj["detections"]
        if not isinstance(raw_dets, list):
            raise ParseError(line_no, "detections must be a list")
        detections = []
        for entry in raw_dets:
            if not isinstance(entry, dict):
                raise ParseError(line_no, "detection entries must be objects")
            unknown = set(entry) - _DETECTION_KEYS
            if unknown:
                raise ParseError(line_no, f"unknown detection keys {sorted(unknown)}")
            missing = _DETECTION_KEYS - set(entry)
            if missing:
                raise ParseError(line_no, f"missing detection keys {sorted(missing)}")
            try:
                label = sex_from_name(entry["label"])
            except (TypeError, ValueError):
                raise ParseError(line_no, f"unknown label {entry['label']!r}") from None
            confidence = _require_number(entry, "confidence", line_no)
            coords = [_require_number(entry, k, line_no) for k in ("cx", "cy", "w", "h")]
            try:
                detections.append(Detection(NormBBox(*coords), label, confidence))
            except (GeometryError, ValueError) as exc:
                raise ParseError(line_no, str(exc)) from None
        if last_index is not None and frame_index <= last_index:
            raise ParseError(line_no, f"frame_index {frame_index} does not increase past {last_index}")
        if last_timestamp is not None and timestamp_ms < last_timestamp:
            raise ParseError(
                line_no, f"timestamp_ms {timestamp_ms} goes backwards from {last_timestamp}"
            )
        last_index = frame_index
        last_timestamp = timestamp_ms
        yield FrameObservations(frame_index, timestamp_ms, tuple(detections))


def parse_detection_log(text: str) -> list[FrameObservations]:
    return list(iter_detection_log(text.splitlines()))


def frame_to_json(frame: FrameObservations) -> str:
    record = {
        "frame_index": frame.frame_index,
        "timestamp_ms": frame.timestamp_ms,
        "detections": [
            {
                "label": str(d.label),
                "confidence": d.confidence,
                "cx": d.bbox.cx,
                "cy": d.bbox.cy,
                "w": d.bbox.w,
                "h": d.bbox.h,
            }
            for d in frame.detections
        ],
    }
    return json.dumps(record, separators=(",", ":"))


def serialize_detection_log(frames: Iterable[FrameObservations]) -> str:
    return "".join(frame_to_json(f) + "\n" for f in frames)


def serialize_command_timeline(timeline: Iterable[tuple[int, ArmCommand]]) -> str:
    return "".join(
        json.dumps({"timestamp_ms": ts, "command": cmd.value}, separators=(",", ":")) + "\n"
        for ts, cmd in timeline
    )


def parse_command_timeline(text: str) -> list[tuple[int, ArmCommand]]:
    timeline: list[tuple[int, ArmCommand]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict) or set(obj) != {"timestamp_ms", "command"}:
            raise ParseError(line_no, "expected keys timestamp_ms and command")
        timestamp = _require_int(obj, "timestamp_ms", line_no)
        try:
            command = command_from_name(obj["command"])
        except (TypeError, ValueError):
            raise ParseError(line_no, f"unknown command {obj['command']!r}") from None
        timeline.append((timestamp, command))
    return timeline


CONFUSION_FIELDS = ("tm_pm", "tm_pf", "tf_pm", "tf_pf")


def _csv_rows(text: str) -> list[tuple[int, list[str]]]:
    reader = csv.reader(_stdio.StringIO(text))
    rows: list[tuple[int, list[str]]] = []
    for row in reader:
        cells = [cell.strip() for cell in row]
        if any(cells):
            rows.append((reader.line_num, cells))
    return rows


def read_confusion_csv(text: str) -> SortConfusion:
    """Read a sorted-confusion table: header + one row, or a bare 2x2 grid."""
    rows = _csv_rows(text)
    if not rows:
        raise ParseError(1, "empty confusion file")
    first_line, first = rows[0]
    if [c.lower() for c in first] == list(CONFUSION_FIELDS):
        if len(rows) < 2:
            raise ParseError(first_line, "header present but no data row")
        line_no, cells = rows[1]
        if len(cells) != 4:
            raise ParseError(line_no, f"expected 4 values, got {len(cells)}")
        values = _int_cells(cells, line_no)
    else:
        if len(rows) != 2 or any(len(cells) != 2 for _, cells in rows):
            missing = sorted(set(CONFUSION_FIELDS) - {c.lower() for c in first})
            raise ParseError(
                first_line,
                f"expected header columns {missing} or a bare 2x2 grid",
            )
        values = _int_cells(rows[0][1], rows[0][0]) + _int_cells(rows[1][1], rows[1][0])
    return SortConfusion(*values)


def _int_cells(cells: list[str], line_no: int) -> list[int]:
    out = []
    for cell in cells:
        try:
            out.append(int(cell))
        except ValueError:
            raise ParseError(line_no, f"count {cell!r} is not an integer") from None
    return out


def write_confusion_csv(confusion: SortConfusion) -> str:
    return (
        ",".join(CONFUSION_FIELDS)
        + "\n"
        + f"{confusion.male_as_male},{confusion.male_as_female},"
        + f"{confusion.female_as_male},{confusion.female_as_female}\n"
    )


def _dict_reader(text: str, required: tuple[str, ...]) -> csv.DictReader:
    reader = csv.DictReader(_stdio.StringIO(text))
    fields = [f.strip().lower() for f in reader.fieldnames or []]
    missing = [name for name in required if name not in fields]
    if missing:
        raise ParseError(1, f"missing columns {missing}")
    extra = [f for f in fields if f not in required]
    if extra:
        raise ParseError(1, f"unknown columns {extra}")
    return reader


def read_arrivals_csv(text: str) -> list[ArrivalEvent]:
    """Read arrival events: columns time_min, sex."""
    reader = _dict_reader(text, ("time_min", "sex"))
    events: list[ArrivalEvent] = []
    for line_no, row in enumerate(reader, start=2):
        try:
            time_min = float(row["time_min"])
        except (TypeError, ValueError):
            raise ParseError(line_no, f"time_min {row['time_min']!r} is not numeric") from None
        try:
            sex = sex_from_name((row["sex"] or "").strip())
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if time_min < 0:
            raise ParseError(line_no, f"time_min {time_min} is negative")
        events.append(ArrivalEvent(time_min, sex))
    return events


def write_arrivals_csv(events: Iterable[ArrivalEvent]) -> str:
    lines = ["time_min,sex"]
    lines += [f"{e.time_min!r},{e.sex}" for e in events]
    return "\n".join(lines) + "\n"


def read_speeds_csv(text: str, zone_length_mm: float = DEFAULT_ZONE_MM) -> list[SpeedRecord]:
    """Read per-individual traversals: columns id, sex, time_s, classified."""
    reader = _dict_reader(text, ("id", "sex", "time_s", "classified"))
    records: list[SpeedRecord] = []
    for line_no, row in enumerate(reader, start=2):
        try:
            time_s = float(row["time_s"])
        except (TypeError, ValueError):
            raise ParseError(line_no, f"time_s {row['time_s']!r} is not numeric") from None
        if time_s <= 0:
            raise ParseError(line_no, f"time_s {time_s} must be positive")
        try:
            sex = sex_from_name((row["sex"] or "").strip())
            classified = sex_from_name((row["classified"] or "").strip())
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        records.append(
            SpeedRecord.from_traversal(
                (row["id"] or "").strip(), sex, time_s, classified, zone_length_mm
            )
        )
    return records


def write_speeds_csv(records: Iterable[SpeedRecord]) -> str:
    lines = ["id,sex,time_s,classified"]
    lines += [
        f"{r.cricket_id},{r.sex},{r.traversal_time_s!r},{r.classified_as}" for r in records
    ]
    return "\n".join(lines) + "\n"
