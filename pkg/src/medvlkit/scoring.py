"""Metric dispatch: pick the metric set for each dataset by task family."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Optional, Sequence

from .core import ParseFailed, Prediction, Sample, TaskKind, Text
from .errors import AlignmentError, CorpusTooSmall, DegenerateInput
from .metrics import (
    SDR_THRESHOLDS_MM,
    MetricReport,
    accuracy,
    bleu,
    cider_d,
    landmark_errors,
    mean_iou,
    meteor,
    mre,
    rouge_l,
    sdr,
    token_recall,
)
from .parse import parse_for_sample

FAMILIES = ("vqa", "classification", "report_gen", "detect_2d", "detect_3d", "landmark")


def task_family(task: TaskKind) -> str:
    if task in (TaskKind.VQA_OPEN, TaskKind.VQA_CLOSED):
        return "vqa"
    return task.value


def sdr_name(t: float) -> str:
    return f"SDR@{t:g}mm"


def align(samples: Iterable[Sample], predictions: Iterable[Prediction]) -> list[tuple[Sample, Prediction]]:
    """Pair each sample with its prediction, in sample order."""
    samples = list(samples)
    by_id: dict[str, Prediction] = {}
    dupes = []
    for p in predictions:
        if p.sample_id in by_id:
            dupes.append(p.sample_id)
        by_id[p.sample_id] = p
    if dupes:
        raise AlignmentError("duplicate prediction ids", extra=dupes)
    ids = [s.id for s in samples]
    missing = [i for i in ids if i not in by_id]
    extra = sorted(set(by_id) - set(ids))
    if missing or extra:
        raise AlignmentError("predictions do not match ground truth", missing, extra)
    return [(s, by_id[s.id]) for s in samples]


def _parsed(s: Sample, p: Prediction):
    return p.parsed if p.parsed is not None else parse_for_sample(p.raw_text, s)


def _text_of(parsed) -> str:
    return parsed.text if isinstance(parsed, Text) else ""


def score_group(pairs: Sequence[tuple[Sample, Prediction]], model_id: str = "") -> MetricReport:
    """Score one dataset/task-family group."""
    if not pairs:
        raise ValueError("nothing to score")
    family = task_family(pairs[0][0].task)
    dataset_id = pairs[0][0].dataset_id
    parsed = [_parsed(s, p) for s, p in pairs]
    gts = [s.ground_truth for s, _ in pairs]
    n_failed = sum(isinstance(x, ParseFailed) for x in parsed)
    model_id = model_id or next((p.model_id for _, p in pairs if p.model_id), "")
    values: dict = {}
    breakdown: dict = {}
    notes: list = []

    if family == "vqa":
        open_idx = [i for i, (s, _) in enumerate(pairs) if s.task is TaskKind.VQA_OPEN]
        close_idx = [i for i, (s, _) in enumerate(pairs) if s.task is TaskKind.VQA_CLOSED]
        correct = 0.0
        values.update({"open": None, "close": None, "total": None, "open_token_recall": None})
        if open_idx:
            acc = accuracy([parsed[i] for i in open_idx], [gts[i] for i in open_idx], "exact")
            values["open"] = acc
            correct += acc * len(open_idx) / 100.0
            recalls = [token_recall(_text_of(parsed[i]), gts[i].text) for i in open_idx]
            values["open_token_recall"] = 100.0 * math.fsum(recalls) / len(recalls)
        if close_idx:
            acc = accuracy([parsed[i] for i in close_idx], [gts[i] for i in close_idx], "choice")
            values["close"] = acc
            correct += acc * len(close_idx) / 100.0
        values["total"] = 100.0 * correct / len(pairs)
        breakdown = {"open": {"n_samples": len(open_idx)}, "close": {"n_samples": len(close_idx)}}
        notes.append("total is sample-weighted over open and closed questions")
    elif family == "classification":
        values["accuracy"] = accuracy(parsed, gts, "choice")
    elif family == "report_gen":
        hyps = [_text_of(x) for x in parsed]
        refs = [g.text for g in gts]
        values["BLEU"] = bleu(hyps, refs)
        values["ROUGE-L"] = rouge_l(hyps, refs)
        values["METEOR"] = meteor(hyps, refs)
        try:
            values["CIDEr"] = 100.0 * cider_d(hyps, refs)
        except CorpusTooSmall:
            values["CIDEr"] = None
            notes.append("CIDEr needs at least 2 samples")
        notes.append("CIDEr is CIDEr-D (sigma=6, n<=4) scaled x100")
    elif family == "detect_2d":
        values["mIoU"] = mean_iou(parsed, gts, "2D")
    elif family == "detect_3d":
        values["mIoU"] = mean_iou(parsed, gts, "3D")
        notes.append("3D detection score is mean IoU x100")
    elif family == "landmark":
        errors = landmark_errors(parsed, gts)
        n_inf = sum(not math.isfinite(e) for e in errors)
        try:
            values["MRE"] = mre(errors)
        except DegenerateInput:
            values["MRE"] = None
        for t, v in zip(SDR_THRESHOLDS_MM, sdr(errors)):
            values[sdr_name(t)] = v
        breakdown = {"landmarks": {"n_landmarks": len(errors), "n_excluded_from_mre": n_inf}}
    else:
        raise ValueError(f"unknown task family {family!r}")

    return MetricReport(
        dataset_id=dataset_id,
        task=family,
        n_samples=len(pairs),
        n_parse_failed=n_failed,
        values=values,
        breakdown=breakdown,
        model_id=model_id,
        notes=notes,
    )


def score_corpus(
    samples: Iterable[Sample],
    predictions: Iterable[Prediction],
    task: Optional[str] = None,
    model_id: str = "",
) -> list[MetricReport]:
    """Align and score, one report per (dataset, task family)."""
    pairs = align(samples, predictions)
    groups: dict[tuple[str, str], list] = defaultdict(list)
    for s, p in pairs:
        fam = task_family(s.task)
        if task is not None and task not in (fam, s.task.value):
            continue
        groups[(s.dataset_id, fam)].append((s, p))
    return [score_group(groups[k], model_id) for k in sorted(groups)]
