"""Endpoint configuration, decoding parameters and cache keys."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

from ..core import TaskKind
from ..errors import ConfigError


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_id: str
    api_key_env: Optional[str] = "OPENAI_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 4
    parallelism: int = 4
    max_rps: Optional[float] = None
    image_mode: str = "uri"
    backoff_base_s: float = 0.5
    backoff_cap_s: float = 30.0

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("endpoint base_url is required")
        if not self.model_id:
            raise ConfigError("endpoint model_id is required")
        if not self.timeout_s > 0:
            raise ConfigError("timeout must be positive")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.max_rps is not None and not self.max_rps > 0:
            raise ConfigError("max_rps must be positive")
        if self.image_mode not in ("uri", "inline"):
            raise ConfigError("image_mode must be 'uri' or 'inline'")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        if not isinstance(d, dict):
            raise ConfigError("endpoint config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown endpoint keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "EndpointConfig":
        d = asdict(self)
        d.update({k: v for k, v in changes.items() if v is not None})
        return EndpointConfig(**d)


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = 64

    def to_dict(self) -> dict:
        return asdict(self)


_LONG_OUTPUT = frozenset({TaskKind.REPORT_GEN})


def decoding_for(task: TaskKind) -> Decoding:
    """Greedy decoding; long budget for reports, short for everything else."""
    return Decoding(0.0, 512 if task in _LONG_OUTPUT else 64)


SYNTHESIS_DECODING = Decoding(0.0, 512)


def cache_key(
    model_id: str,
    messages: Sequence[tuple[str, str]],
    image_refs: Sequence[str],
    decoding: Decoding,
) -> str:
    """Content digest identifying one completion request."""
    payload = json.dumps(
        {
            "model": model_id,
            "messages": [list(m) for m in messages],
            "images": list(image_refs),
            "decoding": decoding.to_dict(),
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
