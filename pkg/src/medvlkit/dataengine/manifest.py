"""Declarative per-dataset manifests and split bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import yaml

from ..core import SPLITS, LANGUAGES, Sample, TaskKind
from ..errors import ConfigError

#: Manifest task value for VQA datasets mixing open and closed questions.
MIXED_VQA = "vqa"
FORMATS = ("qa_json", "caption_pairs", "box_records", "landmark_table")


@dataclass(frozen=True)
class SplitCounts:
    train: int = 0
    valid: int = 0
    test: int = 0

    def __post_init__(self):
        for s in SPLITS:
            v = getattr(self, s)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{s} count must be a non-negative integer, got {v!r}")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SplitCounts":
        d = d or {}
        unknown = set(d) - set(SPLITS)
        if unknown:
            raise ValueError(f"unknown splits {sorted(unknown)}")
        return cls(**{k: int(str(v).replace(",", "")) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {s: getattr(self, s) for s in SPLITS}

    def __str__(self):
        return f"{self.train:,} / {self.valid:,} / {self.test:,}"


@dataclass(frozen=True)
class SplitMismatch:
    split: str
    expected: int
    actual: int

    def to_dict(self) -> dict:
        return {"split": self.split, "expected": self.expected, "actual": self.actual}


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    task: Union[TaskKind, str]
    source_format: str
    split_paths: dict = field(default_factory=dict)
    expected: Optional[SplitCounts] = None
    language: str = "en"
    image_dims: Optional[dict] = None
    spacing_mm_per_px: Optional[float] = None
    image_root: Optional[str] = None
    box_frame: str = "pixel"
    path: Optional[Path] = None

    def problems(self) -> list[str]:
        out = []
        if not self.dataset_id:
            out.append("dataset_id is required")
        if self.source_format not in FORMATS:
            out.append(f"format must be one of {FORMATS}")
        if self.language not in LANGUAGES:
            out.append(f"language must be one of {LANGUAGES}")
        unknown = set(self.split_paths) - set(SPLITS)
        if unknown:
            out.append(f"unknown splits {sorted(unknown)}")
        paths = [str(p) for p in self.split_paths.values()]
        if len(set(paths)) != len(paths):
            out.append("split paths must be distinct")
        if self.spacing_mm_per_px is not None and not self.spacing_mm_per_px > 0:
            out.append("spacing_mm_per_px must be positive")
        if self.box_frame not in ("pixel", "normalized"):
            out.append("box_frame must be 'pixel' or 'normalized'")
        return out


def _parse_task(value) -> Union[TaskKind, str]:
    if value == MIXED_VQA:
        return MIXED_VQA
    try:
        return TaskKind(value)
    except ValueError as exc:
        raise ConfigError(f"unknown task {value!r}") from exc


def load_manifest(path) -> DatasetManifest:
    """Read a YAML manifest; relative paths resolve against its directory."""
    path = Path(path)
    try:
        d = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: manifest must be a mapping")
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        splits = {k: resolve(v) for k, v in (d.get("splits") or {}).items() if v}
        dims = d.get("image_dims")
        if isinstance(dims, str):
            dims = json.loads(resolve(dims).read_text(encoding="utf-8"))
        m = DatasetManifest(
            dataset_id=str(d["dataset_id"]),
            task=_parse_task(d["task"]),
            source_format=d["format"],
            split_paths=splits,
            expected=SplitCounts.from_dict(d["expected"]) if d.get("expected") else None,
            language=d.get("language", "en"),
            image_dims=dims,
            spacing_mm_per_px=d.get("spacing_mm_per_px"),
            image_root=d.get("image_root"),
            box_frame=d.get("box_frame", "pixel"),
            path=path,
        )
    except (KeyError, ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    problems = m.problems()
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    return m


def find_manifests(directory) -> list[Path]:
    d = Path(directory)
    return sorted([*d.glob("*.yaml"), *d.glob("*.yml")])


def count_splits(samples: Iterable[Sample]) -> SplitCounts:
    """Count samples per split in one streaming pass."""
    counts = dict.fromkeys(SPLITS, 0)
    for s in samples:
        counts[s.split] += 1
    return SplitCounts(**counts)


def check_splits(actual: Union[SplitCounts, Iterable[Sample]], expected: SplitCounts) -> list[SplitMismatch]:
    """List every split whose count differs from ``expected``."""
    if not isinstance(actual, SplitCounts):
        actual = count_splits(actual)
    return [
        SplitMismatch(s, getattr(expected, s), getattr(actual, s))
        for s in SPLITS
        if getattr(expected, s) != getattr(actual, s)
    ]
