from .accuracy import accuracy, token_recall
from .geometry import iou2d, iou3d, mean_iou, per_sample_iou
from .landmarks import DEFAULT_SPACING_MM, SDR_THRESHOLDS_MM, landmark_errors, mre, sdr
from .report import MetricReport
from .text import bleu, cider_d, cider_d_scores, meteor, meteor_pair, rouge_l, rouge_l_pair

__all__ = [
    "DEFAULT_SPACING_MM",
    "MetricReport",
    "SDR_THRESHOLDS_MM",
    "accuracy",
    "bleu",
    "cider_d",
    "cider_d_scores",
    "iou2d",
    "iou3d",
    "landmark_errors",
    "mean_iou",
    "meteor",
    "meteor_pair",
    "mre",
    "per_sample_iou",
    "rouge_l",
    "rouge_l_pair",
    "sdr",
    "token_recall",
]
