import json
import math
import random
import sys
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import sample_of
from medvlkit.core import Box2D, Box3D, Choice, ParseFailed, Point2D, Points, Prediction, TaskKind, Text
from medvlkit.errors import AlignmentError, CorpusTooSmall, DegenerateInput, DegenerateReference, SchemaError
from medvlkit.metrics import (
    MetricReport,
    accuracy,
    bleu,
    cider_d,
    cider_d_scores,
    iou2d,
    iou3d,
    landmark_errors,
    mean_iou,
    meteor,
    mre,
    rouge_l,
    sdr,
    token_recall,
)
from medvlkit.metrics.text import align_exact, count_chunks, meteor_pair, rouge_l_pair
from medvlkit.parse import tokenize
from medvlkit.scoring import align, score_corpus

sys.path.insert(0, str(Path(__file__).parent / "oracles"))
import meteor_reference  # noqa: E402

# --- geometry ----------------------------------------------------------------


def test_iou_cases():
    assert iou2d(Box2D(0, 0, 10, 10), Box2D(0, 0, 10, 10)) == 1.0
    assert iou2d(Box2D(0, 0, 10, 10), Box2D(10, 10, 20, 20)) == 0.0
    assert iou2d(Box2D(0, 0, 10, 10), Box2D(0, 0, 5, 10)) == 0.5
    assert iou3d(Box3D(0, 0, 0, 2, 2, 2), Box3D(1, 1, 1, 3, 3, 3)) == pytest.approx(1 / 15)
    # zero-extent boxes
    assert iou2d(Box2D(5, 5, 5, 5), Box2D(5, 5, 5, 5)) == 1.0
    assert iou2d(Box2D(5, 5, 5, 5), Box2D(6, 6, 6, 6)) == 0.0


def test_mean_iou_scales_and_failures():
    gts = [Box2D(0, 0, 10, 10), Box2D(0, 0, 10, 10)]
    assert mean_iou([gts[0], ParseFailed("no box found")], gts, "2D") == 0.5
    g3 = [Box3D(0, 0, 0, 4, 4, 4)]
    assert mean_iou(g3, g3, "3D") == 100.0
    with pytest.raises(ValueError):
        mean_iou(gts, gts, "4D")


_b2 = st.tuples(*[st.integers(0, 1000)] * 4).map(lambda t: Box2D(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3])))
_b3 = st.tuples(*[st.integers(0, 300)] * 6).map(
    lambda t: Box3D(*(min(t[i], t[i + 3]) for i in range(3)), *(max(t[i], t[i + 3]) for i in range(3)))
)


@settings(max_examples=400)
@given(_b2, _b2)
def test_iou2d_properties(a, b):
    v = iou2d(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou2d(b, a)
    assert iou2d(a, a) == 1.0


@settings(max_examples=300)
@given(_b3, _b3)
def test_iou3d_properties(a, b):
    v = iou3d(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou3d(b, a)


# --- landmarks ---------------------------------------------------------------


def test_landmark_errors_use_spacing():
    gt = [Points((("s", Point2D(0, 0, 0.2)),)), Points((("s", Point2D(0, 0)),))]
    pred = [Points((("s", Point2D(3, 4)),)), Points((("s", Point2D(3, 4)),))]
    assert landmark_errors(pred, gt) == [pytest.approx(1.0), pytest.approx(0.5)]


def test_missing_landmarks():
    gt = [Points((("s", Point2D(0, 0)),)), Points((("s", Point2D(0, 0)),))]
    errs = landmark_errors([ParseFailed("no point found"), Points((("s", Point2D(10, 0)),))], gt)
    assert errs[0] == math.inf and errs[1] == pytest.approx(1.0)
    assert mre(errs) == pytest.approx(1.0)
    assert sdr(errs) == [50.0] * 4
    with pytest.raises(DegenerateInput):
        mre([math.inf, math.inf])


@settings(max_examples=300)
@given(st.lists(st.floats(0, 50) | st.just(math.inf), min_size=1, max_size=40), st.randoms(use_true_random=False))
def test_sdr_monotone_and_permutation_invariant(errs, rnd):
    rates = sdr(errs, [0.5, 1, 2, 2.5, 3, 4, 10])
    assert all(a <= b for a, b in zip(rates, rates[1:]))
    shuffled = list(errs)
    rnd.shuffle(shuffled)
    assert sdr(shuffled) == sdr(errs)
    if any(math.isfinite(e) for e in errs):
        assert mre(shuffled) == pytest.approx(mre(errs))


# --- accuracy ----------------------------------------------------------------


def test_accuracy_modes():
    assert accuracy([Text("The CT.")], [Text("ct")], "exact") == 100.0
    assert accuracy([Text("MRI"), ParseFailed("x")], [Text("mri"), Text("ct")]) == 50.0
    assert accuracy([Choice(1), Choice(0)], [Choice(1), Choice(1)], "choice") == 50.0
    with pytest.raises(AlignmentError):
        accuracy([Choice(1)], [], "choice")


def test_token_recall():
    assert token_recall("left lung", "left lung") == 1.0
    assert token_recall("left side", "left lung") == 0.5
    with pytest.raises(DegenerateReference):
        token_recall("x", "the")


# --- text metrics ------------------------------------------------------------


def test_rouge_l_known_value():
    assert rouge_l(["the cat sat"], ["the cat"]) == pytest.approx(100 * 2 * (1 / 2) / (1 / 2 + 1))
    # with articles dropped: "cat sat" vs "cat" -> P=1/2, R=1, F=2/3
    assert rouge_l_pair("the cat sat", "the cat") == pytest.approx(2 / 3)
    assert rouge_l(["a b c d"], ["a b c d"]) == 100.0


def test_meteor_identity():
    # five tokens in one chunk: penalty 0.5 * (1/5)^3
    assert meteor(["one two three four five"], ["one two three four five"]) == pytest.approx(100 * (1 - 0.5 / 125))


def test_meteor_disjoint_is_zero():
    assert meteor_pair("alpha beta", "gamma delta") == 0.0


def test_bleu_identity_and_empty():
    refs = ["there is no pleural effusion", "heart size is normal"]
    assert bleu(refs, refs) == 100.0
    assert bleu(["", ""], refs) == 0.0
    with pytest.raises(DegenerateReference):
        bleu(["x"], [""])


def test_bleu_brevity_penalty():
    ref = "one two three four five six seven eight"
    short = "one two three four"
    assert bleu([short], [ref]) == pytest.approx(100 * math.exp(1 - 8 / 4))


def test_cider_needs_two_pairs():
    with pytest.raises(CorpusTooSmall):
        cider_d(["a b"], ["a b"])


def test_cider_multi_reference_and_length_penalty():
    preds = ["heart normal", "lungs clear today"]
    single = cider_d_scores(preds, ["heart normal", "lungs clear"])
    multi = cider_d_scores(preds, [["heart normal", "heart normal"], ["lungs clear"]])
    assert single[0] == pytest.approx(multi[0])
    # a perfect but much longer prediction is penalized by the Gaussian term
    long_pred = " ".join(["heart normal"] * 8)
    assert cider_d_scores([long_pred, "x y"], ["heart normal", "x y"])[0] < single[0]


def test_text_metric_alignment_errors():
    for fn in (bleu, rouge_l, meteor, cider_d):
        with pytest.raises(AlignmentError):
            fn(["a", "b"], ["a"])


_words = st.lists(st.sampled_from("lung heart left right clear normal effusion mild small no is are".split()), min_size=1, max_size=12)


@settings(max_examples=300)
@given(_words, _words)
def test_meteor_greedy_alignment_vs_exhaustive(h, r):
    hyp, ref = " ".join(h), " ".join(r)
    # greedy alignment reaches the maximum match count; its chunk count can
    # only exceed the exhaustive minimum, so its score never exceeds it
    ours = align_exact(tokenize(hyp), tokenize(ref))
    best = meteor_reference.best_alignment(meteor_reference.simple_tokens(hyp), meteor_reference.simple_tokens(ref))
    assert len(ours) == len(best)
    assert count_chunks(ours) >= meteor_reference._chunks(best)
    assert meteor_pair(hyp, ref) <= meteor_reference.meteor_pair(hyp, ref) + 1e-12


@settings(max_examples=200)
@given(st.lists(st.tuples(_words, _words), min_size=2, max_size=6), st.randoms(use_true_random=False))
def test_corpus_metrics_bounded_and_permutation_invariant(pairs, rnd):
    preds = [" ".join(p) for p, _ in pairs]
    refs = [" ".join(r) for _, r in pairs]
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    for fn in (bleu, rouge_l, meteor):
        v = fn(preds, refs)
        assert 0.0 <= v <= 100.0 + 1e-9
        assert fn([preds[i] for i in order], [refs[i] for i in order]) == pytest.approx(v)
    c = cider_d(preds, refs)
    assert c >= 0.0
    assert cider_d([preds[i] for i in order], [refs[i] for i in order]) == pytest.approx(c)


@settings(max_examples=200)
@given(_words, _words)
def test_rouge_symmetric_f1(a, b):
    x, y = " ".join(a), " ".join(b)
    assert rouge_l_pair(x, y) == pytest.approx(rouge_l_pair(y, x))


# --- scoring dispatch ----------------------------------------------------------


def _pairs(task, n, wrong=0, dataset_id="ds"):
    rng = random.Random(n)
    samples = [sample_of(task, i, rng, dataset_id) for i in range(n)]
    preds = []
    for k, s in enumerate(samples):
        gt = s.ground_truth
        if k < wrong:
            gt = ParseFailed("no box found") if task in (TaskKind.DETECT_2D, TaskKind.DETECT_3D) else Text("zzz")
        preds.append(Prediction(s.id, "", gt))
    return samples, preds


def test_vqa_total_is_sample_weighted():
    so, po = _pairs(TaskKind.VQA_OPEN, 4, wrong=2)  # 50%
    sc, pc = _pairs(TaskKind.VQA_CLOSED, 6)  # 100%
    sc = [replace(s, id=f"ds/test/c{i}") for i, s in enumerate(sc)]
    pc = [Prediction(s.id, "", s.ground_truth) for s in sc]
    (r,) = score_corpus(so + sc, po + pc)
    assert r.task == "vqa"
    assert r.values["open"] == 50.0 and r.values["close"] == 100.0
    assert r.values["total"] == 80.0
    assert r.breakdown == {"open": {"n_samples": 4}, "close": {"n_samples": 6}}


def test_report_scoring_keys():
    s, p = _pairs(TaskKind.REPORT_GEN, 5)
    (r,) = score_corpus(s, p)
    assert list(r.values) == ["BLEU", "ROUGE-L", "METEOR", "CIDEr"]
    assert r.values["BLEU"] == 100.0


def test_landmark_scoring_keys():
    s, p = _pairs(TaskKind.LANDMARK, 5)
    (r,) = score_corpus(s, p)
    assert list(r.values) == ["MRE", "SDR@2mm", "SDR@2.5mm", "SDR@3mm", "SDR@4mm"]


def test_raw_text_reparsed_when_unparsed():
    s = sample_of(TaskKind.DETECT_2D)
    raw = "<|box_start|>({},{}),({},{})<|box_end|>".format(s.ground_truth.x1, s.ground_truth.y1, s.ground_truth.x2, s.ground_truth.y2)
    (r,) = score_corpus([s], [Prediction(s.id, raw)])
    assert r.values["mIoU"] == 1.0


def test_alignment_errors_name_ids():
    s, p = _pairs(TaskKind.VQA_OPEN, 3)
    with pytest.raises(AlignmentError) as info:
        align(s, p[:2] + [Prediction("ghost", "")])
    assert info.value.missing == [s[2].id]
    assert info.value.extra == ["ghost"]
    with pytest.raises(AlignmentError):
        align(s, p + [p[0]])


def test_groups_by_dataset_and_family():
    a, pa = _pairs(TaskKind.DETECT_2D, 3, dataset_id="a")
    b, pb = _pairs(TaskKind.CLASSIFICATION, 3, dataset_id="b")
    reports = score_corpus(a + b, pa + pb)
    assert [(r.dataset_id, r.task) for r in reports] == [("a", "detect_2d"), ("b", "classification")]
    assert [r.task for r in score_corpus(a + b, pa + pb, task="classification")] == ["classification"]


# --- report schema -------------------------------------------------------------


def test_report_roundtrip(tmp_path):
    r = MetricReport("d", "vqa", 10, 1, {"open": 50.0, "close": None}, model_id="m")
    r.dump(tmp_path / "r.json")
    assert MetricReport.load(tmp_path / "r.json") == r


@pytest.mark.parametrize(
    "bad",
    [
        {"dataset_id": "d", "task": "vqa", "n_samples": 3, "values": {"open": 120.0}},
        {"dataset_id": "d", "task": "vqa", "n_samples": 3, "values": {"open": float("nan")}},
        {"dataset_id": "d", "task": "vqa", "n_samples": 3, "n_parse_failed": 4},
        {"dataset_id": "d", "task": "landmark", "n_samples": 3, "values": {"SDR@2mm": -1}},
        {"task": "vqa", "n_samples": 3},
        [1, 2],
    ],
)
def test_report_rejects_bad_values(bad, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(SchemaError):
        MetricReport.load(path)
