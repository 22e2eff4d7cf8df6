import json
import random

import pytest

from docground.dataset import (
    ChartPage,
    CorpusError,
    ParseTask,
    PdfPage,
    PosterPage,
    Sample,
    TextBox,
    build_text_index,
    emit_parsing_tasks,
    full_page_json,
    item_from_dict,
    load_corpus,
    save_corpus,
)
from docground.geometry import BBox, QuantBox, quantize, union_box
from docground.markup import Grounded, GroundedText, Plain, SegmentKind, serialize
from docground.merge import Block, Granularity, Line, Source
from docground.synth import make_bench, random_pdf_page
from docground.taxonomy import AnswerClass, DocType, TaskKind
from docground.templates import Templates, templates_from_json


def poster():
    return PosterPage(
        "P1",
        "p1.png",
        (
            TextBox("Spring Fair", QuantBox(100, 50, 900, 150)),
            TextBox("Total: 42", QuantBox(100, 200, 400, 260)),
            TextBox("Total: 42", QuantBox(500, 200, 800, 260)),
        ),
    )


def chart():
    return ChartPage(
        "C1",
        "c1.png",
        TextBox("Sales", QuantBox(400, 10, 600, 40)),
        axis_labels=(TextBox("2020", QuantBox(100, 900, 150, 930)),),
        legends=(TextBox("north", QuantBox(800, 100, 900, 130)),),
        data_markers=(TextBox("17", None),),
    )


def wrapped_pdf():
    l1 = Line("Revenue grew in the", BBox(0.1, 0.1, 0.5, 0.12))
    l2 = Line("second quarter of the year", BBox(0.1, 0.12, 0.45, 0.14))
    blk = Block(
        "b0",
        "Revenue grew in the second quarter of the year",
        union_box([l1.bbox, l2.bbox]),
        Source.ORDERED,
        Granularity.PARAGRAPH,
        (l1, l2),
    )
    title = Block("t", "Annual report", BBox(0.1, 0.02, 0.9, 0.06), Source.ORDERED, Granularity.LINE)
    return PdfPage("D1", "d1.png", 1000, 1400, (title, blk))


def sample():
    return Sample(
        "s1",
        DocType.POSTER,
        GroundedText((Plain("What is the total?"),)),
        GroundedText((Grounded("Total: 42", QuantBox(100, 200, 400, 260)),)),
        AnswerClass.GA,
        TaskKind.GA,
        page_id="P1",
        meta={"seed": 0},
    )


# --- persistence -----------------------------------------------------------


def test_round_trip(tmp_path):
    items = [poster(), chart(), wrapped_pdf(), sample(), *make_bench(0, {t: 2 for t in TaskKind if t is not TaskKind.PLAIN_QA})]
    path = tmp_path / "c.jsonl"
    save_corpus(items, path)
    assert load_corpus(path) == items
    first = path.read_bytes()
    save_corpus(load_corpus(path), path)
    assert path.read_bytes() == first


def test_empty_file(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert load_corpus(path) == []


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "c.jsonl"
    save_corpus([poster()], path)
    path.write_text("\n" + path.read_text() + "\n\n")
    assert len(load_corpus(path)) == 1


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_out_of_range_box_reports_line(tmp_path):
    good = {"kind": "poster", "id": "a", "image": "a.png", "text_with_box": [{"text": "x", "bbox": [0, 0, 5, 5]}]}
    bad = dict(good, id="b", text_with_box=[{"text": "x", "bbox": [0, 0, 1000, 5]}])
    path = tmp_path / "c.jsonl"
    write_lines(path, [good, bad])
    with pytest.raises(CorpusError) as e:
        load_corpus(path)
    assert e.value.line == 2
    assert e.value.path == "text_with_box[0].bbox[2]"
    assert e.value.message.startswith("OutOfRange")


@pytest.mark.parametrize(
    "row,path",
    [
        ({"kind": "poster", "id": "a", "image": "a.png"}, "text_with_box"),
        ({"kind": "poster", "id": "a", "image": "a.png", "text_with_box": [{"text": "", "bbox": [0, 0, 1, 1]}]}, "text_with_box[0].text"),
        ({"kind": "poster", "id": "a", "image": "a.png", "text_with_box": [{"text": "x", "bbox": None}]}, "text_with_box[0].bbox"),
        ({"kind": "nope"}, "kind"),
        (
            {"kind": "sample", "id": "s", "doc_type": "poster", "question": "q", "answer": "a",
             "answer_class": "PA", "task": "Ga"},
            "task",
        ),
        (
            {"kind": "sample", "id": "s", "doc_type": "poster", "question": "q",
             "answer": "<ocr>a</ocr><bbox>1,2,3</bbox>", "answer_class": "GA", "task": "Ga"},
            "answer",
        ),
    ],
)
def test_schema_violations(row, path):
    with pytest.raises(CorpusError) as e:
        item_from_dict(row)
    assert e.value.path == path


def test_invalid_json_and_duplicates(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("{not json\n")
    with pytest.raises(CorpusError) as e:
        load_corpus(path)
    assert e.value.line == 1
    save_corpus([poster(), poster()], path)
    with pytest.raises(CorpusError) as e:
        load_corpus(path)
    assert e.value.line == 2


# --- index -----------------------------------------------------------------


def test_index_unique_line():
    idx = build_text_index(wrapped_pdf())
    hits = idx.lookup("Annual report")
    assert len(hits) == 1 and not hits[0].multiline


def test_index_repeated_text_in_reading_order():
    hits = build_text_index(poster()).lookup("total: 42")
    assert [h.box for h in hits] == [QuantBox(100, 200, 400, 260), QuantBox(500, 200, 800, 260)]


def test_index_line_wrap_gives_union_box():
    page = wrapped_pdf()
    hits = build_text_index(page).lookup("in the second quarter")
    assert len(hits) == 1
    (h,) = hits
    l1, l2 = page.blocks[1].lines
    want = BBox(0.1, 0.1, 0.5, 0.14)
    assert h.multiline and h.bbox == union_box([l1.bbox, l2.bbox])
    assert h.box == quantize(want)


def test_index_needs_whole_words_and_same_block():
    idx = build_text_index(wrapped_pdf())
    assert idx.lookup("the sec") == []
    assert idx.lookup("report Revenue") == []  # crosses blocks
    assert idx.lookup("Revenue") == []  # partial line only


def test_index_skips_masked_chart_values():
    idx = build_text_index(chart())
    assert idx.lookup("17") == []
    assert len(idx) == 3


def test_index_finds_every_line_in_place():
    rng = random.Random(5)
    for n in range(30):
        idx = build_text_index(random_pdf_page(rng, f"p{n}"))
        for line in idx.lines:
            hits = idx.lookup(line.text)
            assert any(h.start == line.position and h.stop == line.position + 1 for h in hits)
            assert hits == sorted(hits, key=lambda h: (h.start, h.stop))


# --- parsing tasks -----------------------------------------------------------


def test_localization_record():
    page = wrapped_pdf()
    rec = emit_parsing_tasks(page, "line", task="localization")[0]
    assert rec.unit_id == "t"
    assert "Annual report" in rec.instruction
    assert serialize(rec.target) == "<bbox>" + ",".join(map(str, quantize(page.blocks[0].bbox).as_tuple())) + "</bbox>"


def test_line_units_include_block_lines():
    recs = emit_parsing_tasks(wrapped_pdf(), "line", task="localization")
    assert [r.unit_id for r in recs] == ["t", "b0#0", "b0#1"]


def test_recognition_record():
    (rec,) = emit_parsing_tasks(wrapped_pdf(), "paragraph", task="recognition")
    box = quantize(wrapped_pdf().blocks[1].bbox)
    assert f"<bbox>{box.qx1},{box.qy1},{box.qx2},{box.qy2}</bbox>" in rec.instruction
    assert rec.target.segments[0].kind is SegmentKind.GROUNDED
    assert serialize(rec.target, allow_unboxed=True) == "<ocr>Revenue grew in the second quarter of the year</ocr>"


def test_missing_granularity_is_empty():
    assert emit_parsing_tasks(wrapped_pdf(), "word") == []
    assert emit_parsing_tasks(poster(), "line") == []


def test_full_page_poster_golden():
    (rec,) = emit_parsing_tasks(poster(), "full_page")
    assert rec.task is ParseTask.FULL_PAGE
    golden = (
        '[{"text": "Spring Fair", "bbox": [100, 50, 900, 150]}, '
        '{"text": "Total: 42", "bbox": [100, 200, 400, 260]}, '
        '{"text": "Total: 42", "bbox": [500, 200, 800, 260]}]'
    )
    assert rec.target.segments[0].text == golden
    assert json.loads(golden) == [{"text": t.text, "bbox": list(t.box.as_tuple())} for t in poster().text_with_box]


def test_full_page_chart_keeps_masked_values():
    d = json.loads(full_page_json(chart()))
    assert d["data_markers"] == [{"text": "17", "bbox": None}]
    assert d["title"]["text"] == "Sales"


def test_template_choice_is_stable_and_rotates():
    recs = emit_parsing_tasks(poster(), "paragraph", task="recognition")
    again = emit_parsing_tasks(poster(), "paragraph", task="recognition")
    assert recs == again
    t = Templates()
    used = {r.instruction.split("<bbox>")[0] for r in recs}
    assert len(used) == 3  # consecutive units take consecutive templates
    assert all(any(r.instruction.startswith(tpl.split("{bbox}")[0]) for tpl in t.recognition) for r in recs)


def test_custom_templates():
    t = templates_from_json(["Box of {text}?"], section="localization")
    recs = emit_parsing_tasks(poster(), "paragraph", t)
    assert [r.instruction for r in recs][0] == "Box of Spring Fair?"
    with pytest.raises(ValueError):
        emit_parsing_tasks(poster(), "paragraph", task="full_page")
