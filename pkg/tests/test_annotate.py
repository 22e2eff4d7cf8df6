import hashlib
import random

import pytest

from docground.annotate import (
    annotate_sample,
    attach_format_prompt,
    locate_and_ground,
    select_format_prompt,
)
from docground.dataset import PdfPage, PosterPage, TextBox, build_text_index
from docground.geometry import BBox, QuantBox, quantize
from docground.markup import MarkupError, SegmentKind, serialize, strip_grounding
from docground.merge import Block, Line, Source
from docground.synth import random_generated_text, random_pdf_page
from docground.taxonomy import AnswerClass, TaskKind
from docground.templates import Templates

T1 = QuantBox(100, 200, 400, 260)
T2 = QuantBox(500, 200, 800, 260)
POSTER = PosterPage(
    "P1",
    "p.png",
    (
        TextBox("Spring Fair", QuantBox(100, 50, 900, 150)),
        TextBox("Total: 42", T1),
        TextBox("Total: 42", T2),
    ),
)
INDEX = build_text_index(POSTER)


def test_unique_hit_gets_box():
    out = locate_and_ground("It is <ocr>Spring Fair</ocr>.", INDEX)
    assert serialize(out.doc) == "It is <ocr>Spring Fair</ocr><bbox>100,50,900,150</bbox>."
    assert (out.located, out.degraded) == (1, 0)


def test_miss_degrades_to_plain():
    out = locate_and_ground("say <ocr>gibberish</ocr> now", INDEX)
    assert serialize(out.doc) == "say gibberish now"
    assert out.degraded == 1 and out.groundings == (None,)


def test_repeats_take_successive_occurrences():
    out = locate_and_ground("<ocr>Total: 42</ocr> vs <ocr>total: 42</ocr>", INDEX)
    boxes = [s.boxes[0] for s in out.doc.segments if s.kind is SegmentKind.GROUNDED]
    assert boxes == [T1, T2]


def test_exhausted_occurrences_fall_back_to_first():
    out = locate_and_ground("<ocr>Total: 42</ocr> <ocr>Total: 42</ocr> <ocr>Total: 42</ocr>", INDEX)
    boxes = [s.boxes[0] for s in out.doc.segments if s.kind is SegmentKind.GROUNDED]
    assert boxes == [T1, T2, T1]


def test_existing_boxes_are_replaced_by_lookup():
    out = locate_and_ground("<ocr>Spring Fair</ocr><bbox>1,1,2,2</bbox>", INDEX)
    assert out.doc.segments[0].boxes == (QuantBox(100, 50, 900, 150),)


def test_multiline_span():
    l1 = Line("net income rose", BBox(0.1, 0.1, 0.6, 0.12))
    l2 = Line("sharply this year", BBox(0.1, 0.12, 0.4, 0.14))
    page = PdfPage("D", "d.png", 100, 100, (Block("b", "net income rose sharply this year", BBox(0.1, 0.1, 0.6, 0.14), Source.ORDERED, lines=(l1, l2)),))
    out = locate_and_ground("<ocr>rose sharply</ocr>", build_text_index(page))
    assert out.multiline == 1
    assert out.doc.segments[0].boxes == (quantize(BBox(0.1, 0.1, 0.6, 0.14)),)


def test_malformed_input_raises():
    with pytest.raises(MarkupError):
        locate_and_ground("<ocr>open", INDEX)


def test_pa_gets_no_format_prompt():
    assert attach_format_prompt("What?", "PA", sample_id="s", seed=3) == "What?"


def test_ga_prompt_choice_is_hash_mod_seven():
    t = Templates()
    for sid in ("a", "b", "c", "d"):
        h = int.from_bytes(hashlib.blake2b(f"5\x1f{sid}\x1fGA".encode(), digest_size=8).digest(), "big")
        (pick,) = select_format_prompt("GA", t, sid, 5)
        assert pick == h % 7
        assert attach_format_prompt("Q?", "GA", t, sid, 5) == f"Q? {t.format_ga[h % 7]}"


def test_gr_prompt_combines_two_parts():
    t = Templates()
    first, second = select_format_prompt("GR", t, "x", 0)
    assert attach_format_prompt("Q?", "GR", t, "x", 0) == f"Q? {t.format_gr_first[first]} {t.format_gr_second[second]}"


def test_prompt_choice_is_deterministic_and_spread():
    t = Templates()
    picks = [select_format_prompt("GA", t, f"s{i}", 0) for i in range(200)]
    assert picks == [select_format_prompt("GA", t, f"s{i}", 0) for i in range(200)]
    assert len(set(picks)) == 7


def test_unknown_class_raises():
    with pytest.raises(ValueError):
        attach_format_prompt("Q", "XX")


def test_annotate_sample_labels_and_meta():
    out = annotate_sample("s9", POSTER, "What is the total?", "<ocr>Total: 42</ocr>", "GA", seed=1)
    s = out.sample
    assert s.task is TaskKind.GA and s.page_id == "P1"
    assert serialize(s.answer) == "<ocr>Total: 42</ocr><bbox>100,200,400,260</bbox>"
    assert s.meta["located"] == 1 and s.meta["degraded"] == 0
    assert strip_grounding(s.question).startswith("What is the total? ")


def test_question_and_answer_are_grounded_independently():
    out = annotate_sample("s", POSTER, "Why <ocr>Total: 42</ocr>?", "<ocr>Total: 42</ocr>", "GA")
    q_box = [g.box for g in out.question.groundings]
    a_box = [g.box for g in out.answer.groundings]
    assert q_box == a_box == [T1]
    assert out.sample.task is TaskKind.GRA


def test_pa_answer_stays_plain():
    out = annotate_sample("s", POSTER, "Read <bbox>100,50,900,150</bbox>", "<ocr>Spring Fair</ocr>", AnswerClass.PA)
    assert serialize(out.sample.answer) == "Spring Fair"
    assert out.sample.task is TaskKind.RT


def test_random_pages_soundness():
    rng = random.Random(8)
    for n in range(60):
        page = random_pdf_page(rng, f"p{n}")
        idx = build_text_index(page)
        raw = random_generated_text(rng, page)
        out = locate_and_ground(raw, idx)
        assert strip_grounding(out.doc) == raw.replace("<ocr>", "").replace("</ocr>", "")
        members = {ln.box for ln in idx.lines}
        for g in out.groundings:
            if g is not None:
                assert g.box in members or g.multiline
