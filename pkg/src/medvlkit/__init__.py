"""Corpus construction, inference and scoring toolkit for medical VLMs."""

from .core import (
    Box2D,
    Box3D,
    Choice,
    ParseFailed,
    Point2D,
    Points,
    Prediction,
    Sample,
    TaskKind,
    Text,
    validate_sample,
)
from .parse import normalize_answer, parse_box2d, parse_box3d, parse_choice, parse_point
from .templates import ExpectedFormat, RenderedInstruction, render, render_label

__version__ = "0.1.0"

__all__ = [
    "Box2D",
    "Box3D",
    "Choice",
    "ExpectedFormat",
    "ParseFailed",
    "Point2D",
    "Points",
    "Prediction",
    "RenderedInstruction",
    "Sample",
    "TaskKind",
    "Text",
    "normalize_answer",
    "parse_box2d",
    "parse_box3d",
    "parse_choice",
    "parse_point",
    "render",
    "render_label",
    "validate_sample",
]
