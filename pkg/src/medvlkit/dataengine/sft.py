"""Instruction-tuning corpus: render every train sample, shuffle globally."""

from __future__ import annotations

import json
import random
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Optional

from ..core import Sample, dumps_line
from ..templates import DEFAULT_MARKERS, MarkerTokens, render, render_sample_label


def sft_record(s: Sample, markers: MarkerTokens = DEFAULT_MARKERS, chat_format: str = "messages") -> dict:
    inst = render(s, markers)
    rec = inst.to_record(chat_format)
    rec.update(
        dataset_id=s.dataset_id,
        task=s.task.value,
        language=s.language,
        image_refs=list(s.image_refs),
        target=render_sample_label(s, markers),
    )
    return rec


def build_sft(
    datasets: Iterable[Iterable[Sample]],
    rng_seed: int,
    markers: MarkerTokens = DEFAULT_MARKERS,
    chat_format: str = "messages",
    n_buckets: int = 16,
    tmp_dir: Optional[str] = None,
) -> Iterator[str]:
    """Yield serialized SFT records (JSON lines) in a seeded global order.

    Non-train samples are skipped. Records are spread over ``n_buckets``
    temporary files by a seeded draw, then each bucket is shuffled in
    memory, so peak memory is about one bucket rather than the corpus.
    """
    rng = random.Random(rng_seed)
    seen: set[str] = set()
    with tempfile.TemporaryDirectory(dir=tmp_dir) as td:
        paths = [Path(td) / f"bucket-{i:03d}.jsonl" for i in range(n_buckets)]
        handles = [open(p, "w", encoding="utf-8", newline="\n") for p in paths]
        try:
            for samples in datasets:
                for s in samples:
                    if s.split != "train":
                        continue
                    if s.id in seen:
                        raise ValueError(f"duplicate sample id {s.id!r}")
                    seen.add(s.id)
                    handles[rng.randrange(n_buckets)].write(dumps_line(sft_record(s, markers, chat_format)))
        finally:
            for h in handles:
                h.close()
        for p in paths:
            with open(p, encoding="utf-8") as fh:
                lines = fh.readlines()
            rng.shuffle(lines)
            yield from lines


def write_sft(path, lines: Iterable[str]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            n += 1
    return n


def read_sft(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)
