import pytest

from factories import sample_of
from medvlkit.core import Box2D, Box3D, Choice, Point2D, Points, Sample, TaskKind, Text
from medvlkit.errors import UnsupportedTask
from medvlkit.templates import (
    DEFAULT_MARKERS,
    ExpectedFormat,
    MarkerTokens,
    RenderedInstruction,
    expected_format,
    format_number,
    render,
    render_label,
)


def test_one_placeholder_per_image():
    s = Sample("d/1", "d", TaskKind.REPORT_GEN, Text("x"), ("f.png", "l.png", "o.png"))
    inst = render(s)
    assert inst.prompt.startswith("<image> <image> <image> given the image")
    assert inst.image_slots == 3


def test_system_prompt_is_separate_turn():
    inst = render(sample_of(TaskKind.VQA_OPEN), system_prompt="You are a radiologist.")
    assert inst.messages[0] == ("system", "You are a radiologist.")
    assert inst.messages[1][0] == "user"
    assert "radiologist" not in inst.prompt


def test_custom_markers_in_detection_prompt():
    markers = MarkerTokens(object_ref_start="<ref>", object_ref_end="</ref>")
    s = Sample("d/1", "d", TaskKind.DETECT_2D, Box2D(1, 2, 3, 4), (), "liver")
    assert render(s, markers).prompt == "Find <ref>liver</ref> in this image."


@pytest.mark.parametrize(
    "task,fmt",
    [
        (TaskKind.VQA_OPEN, ExpectedFormat.FREE_TEXT),
        (TaskKind.REPORT_GEN, ExpectedFormat.FREE_TEXT),
        (TaskKind.VQA_CLOSED, ExpectedFormat.OPTION_CHOICE),
        (TaskKind.CLASSIFICATION, ExpectedFormat.OPTION_CHOICE),
        (TaskKind.DETECT_2D, ExpectedFormat.BOX_TOKEN_2D),
        (TaskKind.DETECT_3D, ExpectedFormat.BRACKET_BOX_3D),
        (TaskKind.LANDMARK, ExpectedFormat.BRACKET_POINT),
    ],
)
def test_expected_format(task, fmt):
    assert expected_format(task) is fmt
    assert render(sample_of(task)).expected_format is fmt


def test_unknown_task():
    with pytest.raises(UnsupportedTask):
        expected_format("segmentation")


def test_labels():
    assert render_label(Box2D(12, 30, 480, 512)) == "<|box_start|>(12,30),(480,512)<|box_end|>"
    assert render_label(Box3D(10, 22, 5, 40, 60, 18)) == "[(10,22,5),(40,60,18)]"
    assert render_label(Points((("sella", Point2D(835, 996)),))) == "[835,996]"
    assert render_label(Points((("a", Point2D(1.5, 2)), ("b", Point2D(3, 4.25))))) == "[1.5,2],[3,4.25]"
    assert render_label(Choice(1), ("Yes", "No")) == "No"
    assert render_label(Text("Normal chest.")) == "Normal chest."


def test_choice_label_needs_options():
    with pytest.raises(ValueError):
        render_label(Choice(0))


@pytest.mark.parametrize("v,text", [(3, "3"), (3.0, "3"), (0.1, "0.1"), (1e-7, "1e-07"), (2.5e16, "2.5e+16")])
def test_format_number(v, text):
    assert format_number(v) == text
    assert float(text) == v


def test_record_roundtrip():
    inst = render(sample_of(TaskKind.VQA_CLOSED), system_prompt="sys")
    for chat_format in ("messages", "string"):
        rec = inst.to_record(chat_format)
        back = RenderedInstruction.from_record(rec)
        assert back.sample_id == inst.sample_id
        assert back.expected_format is inst.expected_format
        assert back.image_slots == inst.image_slots
    assert RenderedInstruction.from_record(inst.to_record("messages")) == inst
    assert inst.to_record("string")["messages"] == inst.prompt


def test_marker_aliases_from_config():
    m = MarkerTokens.from_dict({"box_start_aliases": ["<box_start>"], "box_end_aliases": ["<box_end>"]})
    assert m.all_box_starts() == ("<|box_start|>", "<box_start>")
    assert MarkerTokens.from_dict(None) == DEFAULT_MARKERS
