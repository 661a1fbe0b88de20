"""Feature-alignment corpus planning: caption pairs plus compare-and-contrast jobs."""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from ..core import iter_jsonl
from ..errors import EmptyAnswer, FormatError, InsufficientPool

#: Target composition of the alignment corpus, in samples.
ALIGNMENT_TARGETS = {
    "en": {"paired": 1_600_000, "synthetic": 900_000},
    "zh": {"paired": 300_000, "synthetic": 200_000},
}

COMPARE_PROMPTS = {
    "en": (
        "You are given {k} medical images with their titles and descriptions.\n"
        "{items}\n"
        "Based on these titles and descriptions, describe the similarities and "
        "differences between the images."
    ),
    "zh": (
        "以下是{k}张医学图像及其标题和描述。\n"
        "{items}\n"
        "请根据这些标题和描述，说明这些图像之间的相同点和不同点。"
    ),
}
_ITEM_LINE = {"en": "Image {i}: {caption}", "zh": "图像{i}：{caption}"}


@dataclass(frozen=True)
class PoolItem:
    image_ref: str
    caption: str
    source: str = ""
    language: str = "en"


@dataclass(frozen=True)
class AlignmentSample:
    image_refs: tuple[str, ...]
    text: str
    origin: str = "paired"
    language: str = "en"

    def to_dict(self) -> dict:
        return {
            "image_refs": list(self.image_refs),
            "text": self.text,
            "origin": self.origin,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentSample":
        s = cls(tuple(d["image_refs"]), d["text"], d.get("origin", "paired"), d.get("language", "en"))
        if s.origin == "synthetic" and len(s.image_refs) < 2:
            raise ValueError("synthetic samples need at least 2 images")
        return s


@dataclass(frozen=True)
class SynthesisJob:
    job_id: str
    image_refs: tuple[str, ...]
    captions: tuple[str, ...]
    prompt: str
    rng_seed: int
    source: str = ""
    language: str = "en"

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "image_refs": list(self.image_refs),
            "captions": list(self.captions),
            "prompt": self.prompt,
            "rng_seed": self.rng_seed,
            "source": self.source,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisJob":
        return cls(
            d["job_id"],
            tuple(d["image_refs"]),
            tuple(d["captions"]),
            d["prompt"],
            d["rng_seed"],
            d.get("source", ""),
            d.get("language", "en"),
        )


def compare_prompt(captions: Sequence[str], language: str = "en") -> str:
    lang = language if language in COMPARE_PROMPTS else "en"
    items = "\n".join(_ITEM_LINE[lang].format(i=i, caption=c) for i, c in enumerate(captions, 1))
    return COMPARE_PROMPTS[lang].format(k=len(captions), items=items)


def synthetic_fraction_for(paired: int, synthetic: int, group_size: int = 2) -> float:
    """Fraction that yields ``synthetic`` jobs from a pool of ``paired`` items."""
    return synthetic * group_size / paired


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def plan_alignment(
    pool: Sequence[PoolItem],
    rng_seed: int,
    synthetic_fraction: float,
    group_size: int = 2,
) -> tuple[list[AlignmentSample], list[SynthesisJob]]:
    """Pass every pool item through as a paired sample and plan synthesis jobs.

    Paired samples come out in a seeded order. Jobs group ``group_size``
    items from the same ``source``, drawn without replacement under a seeded
    shuffle; no image appears twice across jobs.
    """
    if group_size < 2:
        raise ValueError("group_size must be at least 2")
    if synthetic_fraction < 0:
        raise ValueError("synthetic_fraction must be non-negative")
    rng = random.Random(rng_seed)
    paired = [AlignmentSample((p.image_ref,), p.caption, "paired", p.language) for p in pool]
    rng.shuffle(paired)
    n_jobs = _round_half_up(synthetic_fraction * len(pool) / group_size)
    if synthetic_fraction > 0 and len(pool) < group_size:
        raise InsufficientPool(f"pool of {len(pool)} cannot form groups of {group_size}")
    if n_jobs == 0:
        return paired, []

    order = list(range(len(pool)))
    rng.shuffle(order)
    buckets: dict[str, list[int]] = defaultdict(list)
    for i in order:
        buckets[pool[i].source].append(i)

    used: set[str] = set()
    groups: list[list[int]] = []
    for source in sorted(buckets):
        current: list[int] = []
        for i in buckets[source]:
            ref = pool[i].image_ref
            if ref in used:
                continue
            current.append(i)
            used.add(ref)
            if len(current) == group_size:
                groups.append(current)
                current = []
        for i in current:
            used.discard(pool[i].image_ref)
    if len(groups) < n_jobs:
        raise InsufficientPool(
            f"requested {n_jobs} jobs of {group_size} but the pool supports only {len(groups)}"
        )
    rng.shuffle(groups)

    jobs = []
    for k, g in enumerate(groups[:n_jobs]):
        items = [pool[i] for i in g]
        lang = items[0].language
        captions = tuple(it.caption for it in items)
        jobs.append(
            SynthesisJob(
                job_id=f"syn-{rng_seed}-{k:07d}",
                image_refs=tuple(it.image_ref for it in items),
                captions=captions,
                prompt=compare_prompt(captions, lang),
                rng_seed=rng_seed,
                source=items[0].source,
                language=lang,
            )
        )
    return paired, jobs


def assemble_alignment(job: SynthesisJob, llm_answer: str) -> AlignmentSample:
    if not llm_answer or not llm_answer.strip():
        raise EmptyAnswer(f"job {job.job_id}: empty answer")
    return AlignmentSample(job.image_refs, llm_answer, "synthetic", job.language)


def read_pool(path) -> list[PoolItem]:
    out = []
    for line, d in iter_jsonl(path):
        try:
            out.append(
                PoolItem(
                    image_ref=d.get("image_ref") or d["image"],
                    caption=d["caption"],
                    source=d.get("source", ""),
                    language=d.get("language", "en"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad pool record: {exc!r}", path, line) from exc
    return out

