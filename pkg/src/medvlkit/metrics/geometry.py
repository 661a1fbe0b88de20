"""Box overlap on half-open integer grids."""

from __future__ import annotations

import math
from typing import Sequence

from ..core import Box2D, Box3D, ParsedOutput
from ..errors import AlignmentError


def _iou(lo_a, hi_a, lo_b, hi_b) -> float:
    inter = 1
    for a0, a1, b0, b1 in zip(lo_a, hi_a, lo_b, hi_b):
        inter *= max(0, min(a1, b1) - max(a0, b0))
    vol_a = math.prod(h - l for l, h in zip(lo_a, hi_a))
    vol_b = math.prod(h - l for l, h in zip(lo_b, hi_b))
    union = vol_a + vol_b - inter
    if union <= 0:
        # Both boxes have zero extent.
        return 1.0 if (lo_a, hi_a) == (lo_b, hi_b) else 0.0
    return inter / union


def iou2d(a: Box2D, b: Box2D) -> float:
    return _iou((a.x1, a.y1), (a.x2, a.y2), (b.x1, b.y1), (b.x2, b.y2))


def iou3d(a: Box3D, b: Box3D) -> float:
    return _iou(
        (a.x1, a.y1, a.z1), (a.x2, a.y2, a.z2), (b.x1, b.y1, b.z1), (b.x2, b.y2, b.z2)
    )


def per_sample_iou(preds: Sequence[ParsedOutput], gts: Sequence, dim: str = "2D") -> list[float]:
    if len(preds) != len(gts):
        raise AlignmentError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    box_t, fn = (Box2D, iou2d) if dim == "2D" else (Box3D, iou3d)
    return [fn(p, g) if isinstance(p, box_t) else 0.0 for p, g in zip(preds, gts)]


def mean_iou(preds: Sequence[ParsedOutput], gts: Sequence, dim: str = "2D") -> float:
    """Mean IoU, unparseable predictions scoring 0.

    2D is returned as a fraction and 3D as a percentage, following the
    conventions of the respective result tables.
    """
    if dim not in ("2D", "3D"):
        raise ValueError(f"dim must be '2D' or '3D', got {dim!r}")
    ious = per_sample_iou(preds, gts, dim)
    if not ious:
        raise ValueError("mean IoU of an empty set is undefined")
    value = math.fsum(ious) / len(ious)
    return value if dim == "2D" else 100.0 * value
