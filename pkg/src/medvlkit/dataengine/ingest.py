"""Per-format adapters that turn source files into validated Samples."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

from ..core import (
    GRID_MAX,
    SPLITS,
    Box2D,
    Box3D,
    Choice,
    Point2D,
    Points,
    Sample,
    TaskKind,
    Text,
    iter_jsonl,
    validate_sample,
)
from ..errors import FormatError, MissingDimensions
from ..parse import normalize_answer
from .manifest import MIXED_VQA, DatasetManifest


def iter_records(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line, record)`` from a .jsonl, .json (array) or .csv file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".jsonl":
        yield from iter_jsonl(path)
    elif suffix == ".json":
        raw = path.read_text(encoding="utf-8")
        if not raw.strip():
            return
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
        if not isinstance(data, list):
            raise FormatError("expected a JSON array of records", path)
        yield from enumerate(data, 1)
    elif suffix == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                yield reader.line_num, row
    else:
        raise FormatError(f"unsupported file type {suffix!r}", path)


def _image_refs(rec: dict, m: DatasetManifest) -> tuple[str, ...]:
    refs = rec.get("images")
    if refs is None:
        refs = [rec["image"]] if rec.get("image") else []
    elif isinstance(refs, str):
        refs = [refs]
    if not m.image_root:
        return tuple(refs)
    root = m.image_root.rstrip("/")
    return tuple(r if "://" in r or r.startswith("/") else f"{root}/{r}" for r in refs)


def _raw_refs(rec: dict) -> list[str]:
    refs = rec.get("images")
    if refs is None:
        return [rec["image"]] if rec.get("image") else []
    return [refs] if isinstance(refs, str) else list(refs)


def _choice_index(answer, options: Sequence[str]) -> int:
    if isinstance(answer, int) and not isinstance(answer, bool):
        return answer
    answer = str(answer)
    if answer in options:
        return list(options).index(answer)
    norm = normalize_answer(answer)
    hits = [i for i, o in enumerate(options) if normalize_answer(o) == norm]
    if len(hits) != 1:
        raise ValueError(f"answer {answer!r} is not exactly one of the options")
    return hits[0]


def _qa(rec: dict, m: DatasetManifest) -> dict:
    options = rec.get("options")
    task = m.task
    if task == MIXED_VQA:
        closed = bool(options) or rec.get("answer_type") in ("closed", "close")
        task = TaskKind.VQA_CLOSED if closed else TaskKind.VQA_OPEN
    if task in (TaskKind.VQA_CLOSED, TaskKind.CLASSIFICATION):
        if not options:
            raise ValueError("closed question without options")
        answer = rec["label"] if "label" in rec else rec["answer"]
        gt = Choice(_choice_index(answer, options))
        options = tuple(str(o) for o in options)
    else:
        gt = Text(str(rec["answer"]))
        options = None
    return dict(task=task, question=str(rec.get("question", "")), options=options, ground_truth=gt)


def _caption(rec: dict, m: DatasetManifest) -> dict:
    text = next((rec[k] for k in ("report", "caption", "text") if k in rec), None)
    if text is None:
        raise KeyError("report")
    return dict(task=TaskKind.REPORT_GEN, question=str(rec.get("question", "")), ground_truth=Text(str(text)))


def _to_grid(v: float, extent: float) -> int:
    return min(GRID_MAX, max(0, math.floor(float(v) * GRID_MAX / float(extent) + 0.5)))


def _box(rec: dict, m: DatasetManifest) -> dict:
    box = rec["box"]
    obj = str(rec.get("object") or rec.get("label") or "")
    if m.task is TaskKind.DETECT_3D:
        if len(box) != 6:
            raise ValueError("3D box needs 6 coordinates")
        a = [int(v) for v in box]
        lo = [min(a[i], a[i + 3]) for i in range(3)]
        hi = [max(a[i], a[i + 3]) for i in range(3)]
        return dict(task=TaskKind.DETECT_3D, question=obj, ground_truth=Box3D(*lo, *hi))
    if len(box) != 4:
        raise ValueError("2D box needs 4 coordinates")
    if m.box_frame == "normalized" or rec.get("normalized"):
        x1, y1, x2, y2 = (int(v) for v in box)
    else:
        raw = _raw_refs(rec)
        key = raw[0] if raw else rec.get("image_key")
        dims = (m.image_dims or {}).get(key) if key else None
        if "width" in rec and "height" in rec:
            dims = (rec["width"], rec["height"])
        if dims is None:
            raise MissingDimensions(
                f"{m.dataset_id}: no image dimensions for {key!r}; "
                "add image_dims to the manifest or width/height to the record"
            )
        w, h = dims
        x1, x2 = _to_grid(box[0], w), _to_grid(box[2], w)
        y1, y2 = _to_grid(box[1], h), _to_grid(box[3], h)
    return dict(
        task=TaskKind.DETECT_2D,
        question=obj,
        ground_truth=Box2D(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)),
    )


def _landmark(rec: dict, m: DatasetManifest) -> dict:
    name = str(rec["landmark"]).strip()
    spacing = rec.get("spacing_mm_per_px") or m.spacing_mm_per_px
    spacing = float(spacing) if spacing not in (None, "") else None
    x, y = (_num(rec["x"]), _num(rec["y"]))
    return dict(task=TaskKind.LANDMARK, question=name, ground_truth=Points(((name, Point2D(x, y, spacing)),)))


def _num(v):
    if isinstance(v, (int, float)):
        return v
    s = str(v).strip()
    return int(s) if s.isdigit() else float(s)


ADAPTERS: dict[str, Callable[[dict, DatasetManifest], dict]] = {
    "qa_json": _qa,
    "caption_pairs": _caption,
    "box_records": _box,
    "landmark_table": _landmark,
}


def ingest_split(m: DatasetManifest, split: str, path) -> Iterator[Sample]:
    adapter = ADAPTERS[m.source_format]
    if not Path(path).exists():
        raise FormatError("file not found", path)
    for ordinal, (line, rec) in enumerate(iter_records(path)):
        if not isinstance(rec, dict):
            raise FormatError("record is not an object", path, line)
        try:
            fields = adapter(rec, m)
            refs = _image_refs(rec, m)
        except MissingDimensions:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"bad {m.source_format} record: {exc!r}", path, line) from exc
        rid = rec.get("id")
        sample = Sample(
            id=f"{m.dataset_id}/{split}/{rid if rid not in (None, '') else ordinal}",
            dataset_id=m.dataset_id,
            language=rec.get("language") or m.language,
            image_refs=refs,
            split=split,
            **fields,
        )
        problems = validate_sample(sample)
        if problems:
            raise FormatError("invalid sample: " + "; ".join(problems), path, line)
        yield sample


def ingest(m: DatasetManifest, splits: Optional[Sequence[str]] = None) -> Iterator[Sample]:
    """Stream every sample of the manifest's splits, train/valid/test order.

    Splits without a file are treated as empty.
    """
    for split in SPLITS:
        if splits is not None and split not in splits:
            continue
        path = m.split_paths.get(split)
        if path is None:
            continue
        yield from ingest_split(m, split, path)
