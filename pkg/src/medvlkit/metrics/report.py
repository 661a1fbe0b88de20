"""Serializable per-dataset metric reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import SchemaError

RATE_METRICS = frozenset(
    {"open", "close", "total", "open_token_recall", "accuracy", "BLEU", "ROUGE-L", "METEOR"}
)


@dataclass
class MetricReport:
    dataset_id: str
    task: str
    n_samples: int
    n_parse_failed: int = 0
    values: dict = field(default_factory=dict)
    breakdown: dict = field(default_factory=dict)
    model_id: str = ""
    notes: list = field(default_factory=list)

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise SchemaError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.n_samples, int) or self.n_samples < 0:
            out.append("n_samples must be a non-negative integer")
        elif not isinstance(self.n_parse_failed, int) or not 0 <= self.n_parse_failed <= self.n_samples:
            out.append("n_parse_failed must be within [0, n_samples]")
        if not isinstance(self.values, dict):
            return out + ["values must be a mapping"]
        for name, v in self.values.items():
            if v is None:
                continue
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                out.append(f"{name} is not a finite number")
            elif name in RATE_METRICS or name.startswith("SDR@"):
                if not 0.0 <= v <= 100.0:
                    out.append(f"{name}={v} outside [0, 100]")
        return out

    def get(self, name: str) -> Optional[float]:
        return self.values.get(name)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        if not isinstance(d, dict):
            raise SchemaError("metric report must be a JSON object")
        try:
            return cls(
                dataset_id=str(d["dataset_id"]),
                task=str(d["task"]),
                n_samples=d["n_samples"],
                n_parse_failed=d.get("n_parse_failed", 0),
                values=dict(d.get("values", {})),
                breakdown=dict(d.get("breakdown", {})),
                model_id=str(d.get("model_id", "")),
                notes=list(d.get("notes", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed metric report: {exc}") from exc

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetricReport":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc.msg}") from exc
        try:
            return cls.from_dict(d)
        except SchemaError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
