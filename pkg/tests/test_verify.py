import random

import pytest

from docground.dataset import Sample, build_text_index
from docground.markup import Grounded, GroundedText, Plain, Region, parse, serialize, strip_grounding
from docground.geometry import QuantBox
from docground.taxonomy import (
    ACC_TASKS,
    BENCH_TASKS,
    BLEU_TASKS,
    AnswerClass,
    DocType,
    InputClass,
    TaskKind,
    classify_task,
    input_class,
)
from docground.verify import ContentReason, derive_plain_qa, validate_sample

from _inject import CONTENT_KINDS, FORMAT_KINDS, good_answer, inject, random_poster

PLAIN_Q = GroundedText((Plain("What is the title?"),))
BOX_Q = GroundedText((Plain("What is in "), Region(QuantBox(1, 2, 30, 40)), Plain("?")))


@pytest.mark.parametrize(
    "question,cls,want",
    [
        (PLAIN_Q, "GA", TaskKind.GA),
        (PLAIN_Q, "GR", TaskKind.GR),
        (PLAIN_Q, "GO", TaskKind.GO),
        (PLAIN_Q, "PA", TaskKind.PLAIN_QA),
        (BOX_Q, "GA", TaskKind.GRA),
        (BOX_Q, "GR", TaskKind.GRR),
        (BOX_Q, "GO", TaskKind.GRO),
        (BOX_Q, "PA", TaskKind.RT),
    ],
)
def test_classify_grid(question, cls, want):
    assert classify_task(question, cls) is want


def test_grounded_span_in_question_makes_it_grounded():
    q = GroundedText((Plain("Why "), Grounded("x", QuantBox(1, 1, 5, 5)), Plain("?")))
    assert input_class(q) is InputClass.GQ
    assert input_class(GroundedText((Grounded("x"),))) is InputClass.PQ


def test_task_sets():
    assert len(BENCH_TASKS) == 7 and TaskKind.PLAIN_QA not in BENCH_TASKS
    assert ACC_TASKS | BLEU_TASKS == set(BENCH_TASKS)
    assert not ACC_TASKS & BLEU_TASKS


def test_stripped_question_with_pa_is_plain_qa():
    rng = random.Random(0)
    for _ in range(50):
        q = BOX_Q if rng.random() < 0.5 else PLAIN_Q
        plain = GroundedText((Plain(strip_grounding(q)),))
        assert classify_task(plain, AnswerClass.PA) is TaskKind.PLAIN_QA


def test_accepts_matching_sample():
    rng = random.Random(1)
    page = random_poster(rng, "p")
    _, answer = good_answer(rng, page)
    v = validate_sample("What is it?", answer, "poster", build_text_index(page))
    assert v.accepted and v.labels == set()
    assert v.to_dict() == {"accepted": True, "defects": [], "content_errors": []}


def test_missing_closing_bbox():
    v = validate_sample("q", "<ocr>Total</ocr><bbox>1,2,3,4", "pdf")
    assert not v.accepted and v.labels == {"UnclosedTag"}
    assert v.defects[0].field == "answer" and v.defects[0].offset == 16


def test_typo_not_in_annotations():
    rng = random.Random(2)
    page = random_poster(rng, "p")
    tb = page.text_with_box[0]
    q = tb.box
    v = validate_sample("q", f"<ocr>Totl</ocr><bbox>{q.qx1},{q.qy1},{q.qx2},{q.qy2}</bbox>", "poster", build_text_index(page))
    assert [(e.text, e.reason) for e in v.content_errors] == [("Totl", ContentReason.NOT_IN_ANNOTATIONS)]


def test_pdf_skips_content_unless_strict():
    answer = "<ocr>nowhere</ocr><bbox>1,2,3,4</bbox>"
    assert validate_sample("q", answer, "pdf").accepted
    v = validate_sample("q", answer, "pdf", strict_pdf=True)
    assert v.labels == {"NotInAnnotations"}


def test_question_boxes_are_allowed_bare():
    assert validate_sample("What is at <bbox>1,2,3,4</bbox>?", "plain", "pdf").accepted
    v = validate_sample("q", "see <bbox>1,2,3,4</bbox>", "pdf")
    assert v.labels == {"OrphanBBox"}


@pytest.mark.parametrize("kind", FORMAT_KINDS + CONTENT_KINDS)
def test_each_injected_defect_is_named(kind):
    rng = random.Random(kind)
    for n in range(20):
        page = random_poster(rng, f"p{n}")
        q, a = inject(rng, page, kind)
        v = validate_sample(q, a, DocType.POSTER, build_text_index(page))
        assert not v.accepted
        assert v.labels == {kind}


def test_adding_defect_to_accepted_never_accepts():
    rng = random.Random(3)
    for n in range(50):
        page = random_poster(rng, f"p{n}")
        _, good = good_answer(rng, page)
        idx = build_text_index(page)
        assert validate_sample("q", good, "poster", idx).accepted
        for extra in ("<ocr>", "</bbox>", "<bbox>1,2</bbox>"):
            cut = rng.randint(0, len(good))
            assert not validate_sample("q", good[:cut] + extra + good[cut:], "poster", idx).accepted


def ga_sample(answer):
    return Sample("s1", DocType.CHART, PLAIN_Q, answer, AnswerClass.GA, TaskKind.GA, "c1")


def test_derive_plain_single_span():
    d = derive_plain_qa(ga_sample(GroundedText((Grounded("Paris", QuantBox(1, 2, 3, 4)),))))
    assert serialize(d.answer) == "Paris"
    assert d.question == PLAIN_Q
    assert (d.answer_class, d.task, d.id) == (AnswerClass.PA, TaskKind.PLAIN_QA, "s1:plain")
    assert d.meta["derived_from"] == "s1"


def test_derive_plain_multi_span():
    doc = parse("<ocr>Paris</ocr><bbox>1,2,3,4</bbox> and <ocr>Rome</ocr><bbox>5,6,7,8</bbox>")
    d = derive_plain_qa(ga_sample(doc))
    assert serialize(d.answer) == "Paris and Rome"
    assert classify_task(d.question, d.answer_class) is d.task


def test_derive_plain_rejects_other_tasks():
    s = Sample("s", DocType.PDF, BOX_Q, GroundedText((Plain("x"),)), AnswerClass.PA, TaskKind.RT)
    with pytest.raises(ValueError):
        derive_plain_qa(s)
