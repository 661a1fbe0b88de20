"""Domain types and the unified JSONL record schema.

Every record is an immutable dataclass. Ground truths and parsed model
outputs share one tagged union so they can be compared directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Union

from .errors import FormatError, SchemaError


class TaskKind(str, Enum):
    VQA_OPEN = "vqa_open"
    VQA_CLOSED = "vqa_closed"
    CLASSIFICATION = "classification"
    REPORT_GEN = "report_gen"
    DETECT_2D = "detect_2d"
    DETECT_3D = "detect_3d"
    LANDMARK = "landmark"


CHOICE_TASKS = frozenset({TaskKind.VQA_CLOSED, TaskKind.CLASSIFICATION})
TEXT_TASKS = frozenset({TaskKind.VQA_OPEN, TaskKind.REPORT_GEN})
LANGUAGES = ("en", "zh")
SPLITS = ("train", "valid", "test")
GRID_MAX = 1000


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class Choice:
    index: int


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned box on the 0-1000 normalized grid."""

    x1: int
    y1: int
    x2: int
    y2: int

    def violations(self) -> list[str]:
        out = []
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not _is_int(v):
                out.append(f"{name} is not an integer")
            elif v < 0:
                out.append(f"{name} is negative")
            elif v > GRID_MAX:
                out.append(f"{name} exceeds {GRID_MAX}")
        if self.x1 > self.x2:
            out.append("x1 > x2")
        if self.y1 > self.y2:
            out.append("y1 > y2")
        return out


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned box in raw voxel indices."""

    x1: int
    y1: int
    z1: int
    x2: int
    y2: int
    z2: int

    def violations(self) -> list[str]:
        out = []
        for name in ("x1", "y1", "z1", "x2", "y2", "z2"):
            v = getattr(self, name)
            if not _is_int(v):
                out.append(f"{name} is not an integer")
            elif v < 0:
                out.append(f"{name} is negative")
        for a in "xyz":
            if getattr(self, f"{a}1") > getattr(self, f"{a}2"):
                out.append(f"{a}1 > {a}2")
        return out


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float
    spacing_mm_per_px: Optional[float] = None

    def violations(self) -> list[str]:
        out = []
        for name in ("x", "y"):
            v = getattr(self, name)
            if not _is_number(v) or not math.isfinite(v):
                out.append(f"{name} is not a finite number")
            elif v < 0:
                out.append(f"{name} is negative")
        s = self.spacing_mm_per_px
        if s is not None and not (_is_number(s) and math.isfinite(s) and s > 0):
            out.append("spacing_mm_per_px must be positive")
        return out


@dataclass(frozen=True)
class Points:
    """Named landmark points, in order."""

    points: tuple[tuple[str, Point2D], ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.points)


@dataclass(frozen=True)
class ParseFailed:
    reason: str


GroundTruth = Union[Text, Choice, Box2D, Box3D, Points]
ParsedOutput = Union[Text, Choice, Box2D, Box3D, Points, ParseFailed]

_GT_FOR_TASK = {
    TaskKind.VQA_OPEN: Text,
    TaskKind.REPORT_GEN: Text,
    TaskKind.VQA_CLOSED: Choice,
    TaskKind.CLASSIFICATION: Choice,
    TaskKind.DETECT_2D: Box2D,
    TaskKind.DETECT_3D: Box3D,
    TaskKind.LANDMARK: Points,
}


def gt_type_for(task: TaskKind) -> type:
    return _GT_FOR_TASK[task]


@dataclass(frozen=True)
class Sample:
    id: str
    dataset_id: str
    task: TaskKind
    ground_truth: GroundTruth
    image_refs: tuple[str, ...] = ()
    question: str = ""
    options: Optional[tuple[str, ...]] = None
    language: str = "en"
    split: str = "train"
    # Unknown JSON fields, carried through untouched.
    extra: dict = field(default_factory=dict, compare=True, hash=False)


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    raw_text: str
    parsed: Optional[ParsedOutput] = None
    model_id: str = ""
    latency_ms: float = 0.0
    error: Optional[str] = None


def validate_sample(s: Sample) -> list[str]:
    """Return every invariant violation of ``s``; an empty list means valid."""
    out: list[str] = []
    if not isinstance(s.id, str) or not s.id:
        out.append("id must be a non-empty string")
    if not isinstance(s.dataset_id, str) or not s.dataset_id:
        out.append("dataset_id must be a non-empty string")
    if not isinstance(s.task, TaskKind):
        out.append(f"unknown task {s.task!r}")
        return out
    if s.language not in LANGUAGES:
        out.append(f"language must be one of {LANGUAGES}")
    if s.split not in SPLITS:
        out.append(f"split must be one of {SPLITS}")
    if not isinstance(s.question, str):
        out.append("question must be a string")
    elif not s.question.strip() and s.task is not TaskKind.REPORT_GEN:
        out.append("question must be non-empty")

    if any(not isinstance(r, str) or not r for r in s.image_refs):
        out.append("image_refs must be non-empty strings")
    if not s.image_refs and s.task is not TaskKind.DETECT_2D:
        out.append("task requires at least one image_ref")
    if len(set(s.image_refs)) != len(s.image_refs):
        out.append("image_refs contain duplicates")

    if s.task in CHOICE_TASKS:
        if not s.options:
            out.append("closed task requires options")
    elif s.task in TEXT_TASKS and s.options is not None:
        out.append("open task forbids options")
    if s.options is not None and any(not isinstance(o, str) or not o.strip() for o in s.options):
        out.append("options must be non-empty strings")

    gt = s.ground_truth
    want = _GT_FOR_TASK[s.task]
    if not isinstance(gt, want):
        out.append(f"ground_truth must be {want.__name__} for {s.task.value}")
        return out
    if isinstance(gt, Text):
        if not isinstance(gt.text, str):
            out.append("text ground truth must be a string")
    elif isinstance(gt, Choice):
        n = len(s.options or ())
        if not _is_int(gt.index) or gt.index < 0:
            out.append("choice index must be a non-negative integer")
        elif n and gt.index >= n:
            out.append("choice index out of range")
    elif isinstance(gt, (Box2D, Box3D)):
        out.extend(gt.violations())
    elif isinstance(gt, Points):
        if not gt.points:
            out.append("landmark requires at least one point")
        names = gt.names
        if len(set(names)) != len(names):
            out.append("landmark names must be unique")
        for name, p in gt.points:
            if not isinstance(name, str) or not name:
                out.append("landmark name must be a non-empty string")
            out.extend(f"{name}: {v}" for v in p.violations())
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# --- serialization -------------------------------------------------------


def encode_output(value: Optional[ParsedOutput]) -> Optional[dict]:
    if value is None:
        return None
    if isinstance(value, Text):
        return {"type": "text", "text": value.text}
    if isinstance(value, Choice):
        return {"type": "choice", "index": value.index}
    if isinstance(value, Box2D):
        return {"type": "box2d", "box": [value.x1, value.y1, value.x2, value.y2]}
    if isinstance(value, Box3D):
        return {
            "type": "box3d",
            "box": [value.x1, value.y1, value.z1, value.x2, value.y2, value.z2],
        }
    if isinstance(value, Points):
        pts = []
        for name, p in value.points:
            d = {"name": name, "x": p.x, "y": p.y}
            if p.spacing_mm_per_px is not None:
                d["spacing_mm_per_px"] = p.spacing_mm_per_px
            pts.append(d)
        return {"type": "points", "points": pts}
    if isinstance(value, ParseFailed):
        return {"type": "parse_failed", "reason": value.reason}
    raise SchemaError(f"cannot encode {type(value).__name__}")


def decode_output(d: Optional[dict]) -> Optional[ParsedOutput]:
    if d is None:
        return None
    try:
        kind = d["type"]
        if kind == "text":
            return Text(d["text"])
        if kind == "choice":
            return Choice(d["index"])
        if kind == "box2d":
            box = d["box"]
            if len(box) != 4:
                raise SchemaError("box2d needs 4 coordinates")
            return Box2D(*box)
        if kind == "box3d":
            box = d["box"]
            if len(box) != 6:
                raise SchemaError("box3d needs 6 coordinates")
            return Box3D(*box)
        if kind == "points":
            return Points(
                tuple(
                    (p["name"], Point2D(p["x"], p["y"], p.get("spacing_mm_per_px")))
                    for p in d["points"]
                )
            )
        if kind == "parse_failed":
            return ParseFailed(d["reason"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed tagged value {d!r}") from exc
    raise SchemaError(f"unknown value type {kind!r}")


_SAMPLE_FIELDS = (
    "id",
    "dataset_id",
    "task",
    "language",
    "image_refs",
    "question",
    "options",
    "ground_truth",
    "split",
)


def encode_sample(s: Sample) -> dict:
    d = {
        "id": s.id,
        "dataset_id": s.dataset_id,
        "task": s.task.value,
        "language": s.language,
        "image_refs": list(s.image_refs),
        "question": s.question,
        "options": None if s.options is None else list(s.options),
        "ground_truth": encode_output(s.ground_truth),
        "split": s.split,
    }
    for k, v in s.extra.items():
        d.setdefault(k, v)
    return d


def decode_sample(d: dict) -> Sample:
    try:
        options = d.get("options")
        return Sample(
            id=d["id"],
            dataset_id=d["dataset_id"],
            task=TaskKind(d["task"]),
            language=d.get("language", "en"),
            image_refs=tuple(d.get("image_refs") or ()),
            question=d.get("question", ""),
            options=None if options is None else tuple(options),
            ground_truth=decode_output(d["ground_truth"]),
            split=d.get("split", "train"),
            extra={k: v for k, v in d.items() if k not in _SAMPLE_FIELDS},
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed sample record: {exc}") from exc


def encode_prediction(p: Prediction) -> dict:
    d = {
        "sample_id": p.sample_id,
        "raw_text": p.raw_text,
        "parsed": encode_output(p.parsed),
        "model_id": p.model_id,
        "latency_ms": p.latency_ms,
    }
    if p.error is not None:
        d["error"] = p.error
    return d


def decode_prediction(d: dict) -> Prediction:
    try:
        return Prediction(
            sample_id=d["sample_id"],
            raw_text=d.get("raw_text", ""),
            parsed=decode_output(d.get("parsed")),
            model_id=d.get("model_id", ""),
            latency_ms=d.get("latency_ms", 0.0),
            error=d.get("error"),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed prediction record: {exc}") from exc


# --- JSON Lines ----------------------------------------------------------


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path, lineno) from exc


def write_jsonl(path, objects: Iterable[Any]) -> int:
    n = 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objects:
            fh.write(dumps_line(obj))
            n += 1
    return n


def read_samples(path) -> Iterator[Sample]:
    for _, d in iter_jsonl(path):
        yield decode_sample(d)


def write_samples(path, samples: Iterable[Sample]) -> int:
    return write_jsonl(path, (encode_sample(s) for s in samples))


def read_predictions(path) -> Iterator[Prediction]:
    for _, d in iter_jsonl(path):
        yield decode_prediction(d)


def write_predictions(path, predictions: Iterable[Prediction]) -> int:
    return write_jsonl(path, (encode_prediction(p) for p in predictions))
