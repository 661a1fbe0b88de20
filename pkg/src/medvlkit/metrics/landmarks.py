"""Mean radial error and success detection rate for landmark points."""

from __future__ import annotations

import math
from typing import Sequence

from ..core import ParsedOutput, Points
from ..errors import AlignmentError, DegenerateInput

DEFAULT_SPACING_MM = 0.1
SDR_THRESHOLDS_MM = (2.0, 2.5, 3.0, 4.0)


def landmark_errors(
    preds: Sequence[ParsedOutput],
    gts: Sequence[Points],
    spacing_mm_per_px: float = DEFAULT_SPACING_MM,
) -> list[float]:
    """Radial error in mm for every ground-truth landmark.

    A point's own ``spacing_mm_per_px`` overrides the default. Landmarks
    missing from the prediction get ``inf``.
    """
    if spacing_mm_per_px <= 0:
        raise ValueError("spacing must be positive")
    if len(preds) != len(gts):
        raise AlignmentError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    out = []
    for pred, gt in zip(preds, gts):
        found = dict(pred.points) if isinstance(pred, Points) else {}
        for name, g in gt.points:
            p = found.get(name)
            if p is None:
                out.append(math.inf)
                continue
            spacing = g.spacing_mm_per_px or spacing_mm_per_px
            out.append(math.hypot(p.x - g.x, p.y - g.y) * spacing)
    return out


def mre(errors: Sequence[float]) -> float:
    finite = [e for e in errors if math.isfinite(e)]
    if not errors:
        raise ValueError("no errors given")
    if not finite:
        raise DegenerateInput(f"all {len(errors)} landmark errors are infinite")
    return math.fsum(finite) / len(finite)


def sdr(errors: Sequence[float], thresholds: Sequence[float] = SDR_THRESHOLDS_MM) -> list[float]:
    if not errors:
        raise ValueError("no errors given")
    n = len(errors)
    return [100.0 * sum(e <= t for e in errors) / n for t in thresholds]
