"""Instruction templates and label rendering for the five task families."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .core import (
    Box2D,
    Box3D,
    Choice,
    GroundTruth,
    Points,
    Sample,
    TaskKind,
    Text,
)
from .errors import UnsupportedTask

IMAGE_PLACEHOLDER = "<image>"
OPTION_SEPARATOR = "\n"


class ExpectedFormat(str, Enum):
    FREE_TEXT = "free_text"
    OPTION_CHOICE = "option_choice"
    BOX_TOKEN_2D = "box_token_2d"
    BRACKET_BOX_3D = "bracket_box_3d"
    BRACKET_POINT = "bracket_point"


_FORMATS = {
    TaskKind.VQA_OPEN: ExpectedFormat.FREE_TEXT,
    TaskKind.REPORT_GEN: ExpectedFormat.FREE_TEXT,
    TaskKind.VQA_CLOSED: ExpectedFormat.OPTION_CHOICE,
    TaskKind.CLASSIFICATION: ExpectedFormat.OPTION_CHOICE,
    TaskKind.DETECT_2D: ExpectedFormat.BOX_TOKEN_2D,
    TaskKind.DETECT_3D: ExpectedFormat.BRACKET_BOX_3D,
    TaskKind.LANDMARK: ExpectedFormat.BRACKET_POINT,
}


def expected_format(task: TaskKind) -> ExpectedFormat:
    try:
        return _FORMATS[TaskKind(task)]
    except (KeyError, ValueError) as exc:
        raise UnsupportedTask(str(task)) from exc


@dataclass(frozen=True)
class MarkerTokens:
    """Surface strings for the grounding special tokens.

    ``aliases`` lists extra spellings the parser accepts, e.g. a checkpoint
    whose tokenizer decodes ``<box_start>`` without the pipes.
    """

    box_start: str = "<|box_start|>"
    box_end: str = "<|box_end|>"
    object_ref_start: str = "<|object_ref_start|>"
    object_ref_end: str = "<|object_ref_end|>"
    box_start_aliases: tuple[str, ...] = ()
    box_end_aliases: tuple[str, ...] = ()

    def all_box_starts(self) -> tuple[str, ...]:
        return (self.box_start, *self.box_start_aliases)

    def all_box_ends(self) -> tuple[str, ...]:
        return (self.box_end, *self.box_end_aliases)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "MarkerTokens":
        if not d:
            return cls()
        d = dict(d)
        for k in ("box_start_aliases", "box_end_aliases"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


DEFAULT_MARKERS = MarkerTokens()


@dataclass(frozen=True)
class RenderedInstruction:
    sample_id: str
    messages: tuple[tuple[str, str], ...]
    image_slots: int
    expected_format: ExpectedFormat

    @property
    def prompt(self) -> str:
        """The user turn as a single string."""
        return "\n".join(text for role, text in self.messages if role == "user")

    def to_record(self, chat_format: str = "messages") -> dict:
        if chat_format == "string":
            messages = self.prompt
        elif chat_format == "messages":
            messages = [{"role": r, "content": t} for r, t in self.messages]
        else:
            raise ValueError(f"unknown chat format {chat_format!r}")
        return {
            "sample_id": self.sample_id,
            "messages": messages,
            "expected_format": self.expected_format.value,
        }

    @classmethod
    def from_record(cls, d: dict, image_slots: Optional[int] = None) -> "RenderedInstruction":
        raw = d["messages"]
        if isinstance(raw, str):
            messages = (("user", raw),)
        else:
            messages = tuple((m["role"], m["content"]) for m in raw)
        if image_slots is None:
            image_slots = sum(t.count(IMAGE_PLACEHOLDER) for _, t in messages)
        return cls(d["sample_id"], messages, image_slots, ExpectedFormat(d["expected_format"]))


def _body(s: Sample, markers: MarkerTokens) -> str:
    task = s.task
    if task is TaskKind.VQA_OPEN:
        return f"given the image, please provide a brief answer to {s.question}"
    if task in (TaskKind.VQA_CLOSED, TaskKind.CLASSIFICATION):
        opts = OPTION_SEPARATOR.join(s.options or ())
        return f"given the image, choose one option from the {opts} to answer: {s.question}"
    if task is TaskKind.REPORT_GEN:
        return (
            "given the image, please review the image and create a report "
            "that assesses any abnormalities."
        )
    if task is TaskKind.DETECT_2D:
        return (
            f"Find {markers.object_ref_start}{s.question}{markers.object_ref_end} "
            "in this image."
        )
    if task is TaskKind.DETECT_3D:
        return f"Find the {s.question}, please respond with a 3D bounding box."
    if task is TaskKind.LANDMARK:
        return (
            f"given the image, find the {s.question}, "
            "the response is given in the format of [x,y]."
        )
    raise UnsupportedTask(str(task))


def render(
    s: Sample,
    markers: MarkerTokens = DEFAULT_MARKERS,
    system_prompt: Optional[str] = None,
) -> RenderedInstruction:
    """Expand ``s`` into its instruction text.

    One ``<image>`` placeholder per image ref is prepended, in manifest
    order, ahead of the instruction body.
    """
    n = len(s.image_refs)
    prefix = " ".join([IMAGE_PLACEHOLDER] * n)
    body = _body(s, markers)
    text = f"{prefix} {body}" if prefix else body
    messages: tuple[tuple[str, str], ...] = (("user", text),)
    if system_prompt:
        messages = (("system", system_prompt),) + messages
    return RenderedInstruction(s.id, messages, n, expected_format(s.task))


def format_number(v) -> str:
    """Shortest text that parses back to exactly ``v``."""
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def render_label(
    gt: GroundTruth,
    options: Optional[Sequence[str]] = None,
    markers: MarkerTokens = DEFAULT_MARKERS,
) -> str:
    """Target string the model is trained to emit for ``gt``."""
    if isinstance(gt, Text):
        return gt.text
    if isinstance(gt, Choice):
        if options is None:
            raise ValueError("rendering a Choice needs the option list")
        return options[gt.index]
    if isinstance(gt, Box2D):
        return f"{markers.box_start}({gt.x1},{gt.y1}),({gt.x2},{gt.y2}){markers.box_end}"
    if isinstance(gt, Box3D):
        return f"[({gt.x1},{gt.y1},{gt.z1}),({gt.x2},{gt.y2},{gt.z2})]"
    if isinstance(gt, Points):
        return ",".join(
            f"[{format_number(p.x)},{format_number(p.y)}]" for _, p in gt.points
        )
    raise TypeError(f"cannot render {type(gt).__name__}")


def render_sample_label(s: Sample, markers: MarkerTokens = DEFAULT_MARKERS) -> str:
    return render_label(s.ground_truth, s.options, markers)
