"""Tolerant, deterministic parsers for raw model output.

Each ``parse_*`` function raises :class:`ParseError` on failure;
:func:`parse_output` turns that into a :class:`ParseFailed` record so a
batch never stops on a single bad answer.
"""

from __future__ import annotations

import re
import string
import unicodedata
from functools import lru_cache
from typing import Optional, Sequence

from .core import (
    GRID_MAX,
    Box2D,
    Box3D,
    Choice,
    ParsedOutput,
    ParseFailed,
    Point2D,
    Points,
    Sample,
    TaskKind,
    Text,
)
from .templates import DEFAULT_MARKERS, ExpectedFormat, MarkerTokens, expected_format


class ParseError(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


# --- answer normalization ------------------------------------------------

_ARTICLES = frozenset({"a", "an", "the"})
_ASCII_PUNCT = frozenset(string.punctuation)
_CJK_RANGES = (
    "⺀-⿟"  # radicals
    "぀-ヿ"  # kana
    "㄀-ㄯ"  # bopomofo
    "㐀-䶿"
    "一-鿿"
    "가-힯"  # hangul
    "豈-﫿"
)
_TOKEN_RE = re.compile(rf"[{_CJK_RANGES}]|[^\s{_CJK_RANGES}]+")


def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def normalize_answer(text: str) -> str:
    """Canonical form used for exact-match scoring and tokenization.

    >>> normalize_answer("The  Chest X-ray.")
    'chest x ray'
    """
    text = unicodedata.normalize("NFKC", text)
    text = unicodedata.normalize("NFKC", text.lower())
    text = "".join(" " if _is_punct(ch) else ch for ch in text)
    return " ".join(w for w in text.split() if w not in _ARTICLES)


def tokenize(text: str) -> list[str]:
    """Normalize, split on whitespace, and split CJK runs into characters."""
    return _TOKEN_RE.findall(normalize_answer(text))


# --- grammars --------------------------------------------------------------

_INT = r"\s*(\d+)\s*"
_NUM = r"\s*(-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*"
_BOX3D_RE = re.compile(
    rf"\[\s*\({_INT},{_INT},{_INT}\)\s*,\s*\({_INT},{_INT},{_INT}\)\s*\]"
)
_POINT_RE = re.compile(rf"\[{_NUM},{_NUM}\]")


@lru_cache(maxsize=32)
def _box2d_re(starts: tuple[str, ...], ends: tuple[str, ...]) -> re.Pattern:
    start = "|".join(re.escape(s) for s in sorted(starts, key=len, reverse=True))
    end = "|".join(re.escape(s) for s in sorted(ends, key=len, reverse=True))
    return re.compile(
        rf"(?:{start})\s*\({_INT},{_INT}\)\s*,\s*\({_INT},{_INT}\)\s*(?:{end})"
    )


def parse_box2d(text: str, markers: MarkerTokens = DEFAULT_MARKERS) -> Box2D:
    m = _box2d_re(markers.all_box_starts(), markers.all_box_ends()).search(text)
    if m is None:
        raise ParseError("no box found")
    x1, y1, x2, y2 = (int(g) for g in m.groups())
    if max(x1, y1, x2, y2) > GRID_MAX:
        raise ParseError("coordinate overflow")
    return Box2D(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def parse_box3d(text: str) -> Box3D:
    m = _BOX3D_RE.search(text)
    if m is None:
        raise ParseError("no box found")
    a = [int(g) for g in m.groups()]
    lo = [min(a[i], a[i + 3]) for i in range(3)]
    hi = [max(a[i], a[i + 3]) for i in range(3)]
    return Box3D(*lo, *hi)


def _number(s: str):
    if any(c in s for c in ".eE"):
        return float(s)
    return int(s)


def _points(text: str) -> list[Point2D]:
    out = []
    for m in _POINT_RE.finditer(text):
        x, y = _number(m.group(1)), _number(m.group(2))
        if x < 0 or y < 0:
            raise ParseError("negative coordinate")
        out.append(Point2D(x, y))
    return out


def parse_point(text: str) -> Point2D:
    m = _POINT_RE.search(text)
    if m is None:
        raise ParseError("no point found")
    x, y = _number(m.group(1)), _number(m.group(2))
    if x < 0 or y < 0:
        raise ParseError("negative coordinate")
    return Point2D(x, y)


def parse_points(text: str, names: Sequence[str]) -> Points:
    """Assign the first ``len(names)`` bracket points to ``names`` in order."""
    if len(names) == 1:
        return Points(((names[0], parse_point(text)),))
    found = _points(text)
    if len(found) < len(names):
        raise ParseError(f"expected {len(names)} points, found {len(found)}")
    return Points(tuple(zip(names, found)))


def _contains(haystack: list[str], needle: list[str]) -> bool:
    k = len(needle)
    return any(haystack[i : i + k] == needle for i in range(len(haystack) - k + 1))


def parse_choice(text: str, options: Sequence[str]) -> Choice:
    if not options:
        raise ValueError("parse_choice needs at least one option")
    norm = normalize_answer(text)
    norm_opts = [normalize_answer(o) for o in options]

    hits = [i for i, o in enumerate(norm_opts) if o and o == norm]
    if len(hits) > 1:
        raise ParseError("ambiguous")
    if hits:
        return Choice(hits[0])

    toks = tokenize(text)
    hits = []
    for i, o in enumerate(options):
        otoks = tokenize(o)
        if otoks and _contains(toks, otoks):
            hits.append(i)
    if len(hits) > 1:
        raise ParseError("ambiguous")
    if hits:
        return Choice(hits[0])
    raise ParseError("no option matched")


def parse_output(
    text: str,
    fmt: ExpectedFormat,
    options: Optional[Sequence[str]] = None,
    landmark_names: Optional[Sequence[str]] = None,
    markers: MarkerTokens = DEFAULT_MARKERS,
) -> ParsedOutput:
    """Dispatch on ``fmt``; failures come back as ``ParseFailed``."""
    try:
        if fmt is ExpectedFormat.FREE_TEXT:
            return Text(text.strip())
        if fmt is ExpectedFormat.OPTION_CHOICE:
            return parse_choice(text, options or ())
        if fmt is ExpectedFormat.BOX_TOKEN_2D:
            return parse_box2d(text, markers)
        if fmt is ExpectedFormat.BRACKET_BOX_3D:
            return parse_box3d(text)
        if fmt is ExpectedFormat.BRACKET_POINT:
            return parse_points(text, landmark_names or ("point",))
    except ParseError as exc:
        return ParseFailed(exc.reason)
    except ValueError as exc:
        return ParseFailed(str(exc))
    raise ValueError(f"unknown format {fmt!r}")


def parse_for_sample(
    text: str, sample: Sample, markers: MarkerTokens = DEFAULT_MARKERS
) -> ParsedOutput:
    names = None
    if sample.task is TaskKind.LANDMARK:
        names = sample.ground_truth.names
    return parse_output(text, expected_format(sample.task), sample.options, names, markers)
