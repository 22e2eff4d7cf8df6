"""Corpus types, JSONL persistence, the page text index and parsing-task emission.

Every corpus file is UTF-8 JSONL with one object per line; the ``kind`` field
selects the record type (``poster``, ``chart``, ``pdf``, ``block``,
``parsing``, ``sample``). Loading is all-or-nothing: the first schema
violation raises :class:`CorpusError` naming the line and field path.
"""

from __future__ import annotations

import enum
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .geometry import GRID_MAX, BBox, QuantBox, dequantize, quantize, union_box
from .markup import (
    TAG_RE,
    GroundedText,
    Grounded,
    Plain,
    Region,
    find_defects,
    parse,
    serialize,
)
from .merge import Block, Granularity, Line, Source
from .taxonomy import AnswerClass, DocType, TaskKind, classify_task
from .templates import Templates
from .textnorm import normalize_text

# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


class ParseGranularity(str, enum.Enum):
    WORD = "word"
    PHRASE = "phrase"
    LINE = "line"
    PARAGRAPH = "paragraph"
    FULL_PAGE = "full_page"


class ParseTask(str, enum.Enum):
    LOCALIZATION = "localization"  # text -> box
    RECOGNITION = "recognition"  # box -> text
    FULL_PAGE = "full_page"  # page -> JSON string


@dataclass(frozen=True)
class TextBox:
    text: str
    box: QuantBox | None  # None only for masked chart values


@dataclass(frozen=True)
class PosterPage:
    id: str
    image: str
    text_with_box: tuple[TextBox, ...]
    meta: dict = field(default_factory=dict)

    doc_type = DocType.POSTER


@dataclass(frozen=True)
class ChartPage:
    id: str
    image: str
    title: TextBox | None
    axis_labels: tuple[TextBox, ...] = ()
    legends: tuple[TextBox, ...] = ()
    data_markers: tuple[TextBox, ...] = ()

    doc_type = DocType.CHART

    def entries(self) -> list[TextBox]:
        head = [self.title] if self.title is not None else []
        return head + list(self.axis_labels) + list(self.legends) + list(self.data_markers)


@dataclass(frozen=True)
class PdfPage:
    id: str
    image: str
    width: int
    height: int
    blocks: tuple[Block, ...]

    doc_type = DocType.PDF


Page = Union[PosterPage, ChartPage, PdfPage]


@dataclass(frozen=True)
class ParsingRecord:
    page_id: str
    granularity: ParseGranularity
    task: ParseTask
    instruction: str
    target: GroundedText
    unit_id: str = ""  # block the record was cut from; empty for full-page records


@dataclass(frozen=True)
class Sample:
    id: str
    doc_type: DocType
    question: GroundedText
    answer: GroundedText
    answer_class: AnswerClass
    task: TaskKind
    page_id: str | None = None
    meta: dict = field(default_factory=dict)


CorpusItem = Union[PosterPage, ChartPage, PdfPage, Block, ParsingRecord, Sample]


class CorpusError(ValueError):
    """Schema violation at ``line`` (1-based) and ``path`` inside that record."""

    def __init__(self, line: int, path: str, message: str, defects=()):
        self.line = line
        self.path = path
        self.message = message
        self.defects = list(defects)
        super().__init__(f"line {line}: {path or '<record>'}: {message}")


class _FieldError(ValueError):
    def __init__(self, path: str, message: str, defects=()):
        self.path = path
        self.message = message
        self.defects = list(defects)
        super().__init__(f"{path}: {message}")


# ---------------------------------------------------------------------------
# field readers
# ---------------------------------------------------------------------------


def _get(d: dict, key: str, path: str):
    if key not in d:
        raise _FieldError(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _str(v, path: str) -> str:
    if not isinstance(v, str):
        raise _FieldError(path, f"expected string, got {type(v).__name__}")
    return v


def _page_text(v, path: str) -> str:
    s = _str(v, path)
    if not s:
        raise _FieldError(path, "empty text")
    if TAG_RE.search(s):
        raise _FieldError(path, "text contains a markup tag")
    return s


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise _FieldError(path, f"expected integer, got {type(v).__name__}")
    return v


def _list(v, path: str) -> list:
    if not isinstance(v, list):
        raise _FieldError(path, f"expected array, got {type(v).__name__}")
    return v


def _qbox(v, path: str, *, nullable: bool = False) -> QuantBox | None:
    if v is None:
        if nullable:
            return None
        raise _FieldError(path, "NullBBox: box may not be null here")
    coords = _list(v, path)
    if len(coords) != 4:
        raise _FieldError(path, f"BadArity: expected 4 coordinates, got {len(coords)}")
    vals = [_int(c, _join(path, i)) for i, c in enumerate(coords)]
    for i, c in enumerate(vals):
        if not 0 <= c <= GRID_MAX:
            raise _FieldError(_join(path, i), f"OutOfRange: coordinate {c} outside 0..{GRID_MAX}")
    if vals[0] > vals[2] or vals[1] > vals[3]:
        raise _FieldError(path, f"OutOfRange: inverted box {vals}")
    return QuantBox(*vals)


def _fbox(v, path: str) -> BBox:
    coords = _list(v, path)
    if len(coords) != 4 or not all(
        isinstance(c, (int, float)) and not isinstance(c, bool) for c in coords
    ):
        raise _FieldError(path, "expected 4 numbers")
    try:
        return BBox(*(float(c) for c in coords))
    except ValueError as e:
        raise _FieldError(path, f"OutOfRange: {e}") from None


def _enum(cls, v, path: str):
    try:
        return cls(v)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise _FieldError(path, f"unknown value {v!r}; expected one of {allowed}") from None


def _text_box(d, path: str, *, nullable: bool) -> TextBox:
    if not isinstance(d, dict):
        raise _FieldError(path, "expected object with text and bbox")
    return TextBox(
        _page_text(_get(d, "text", path), _join(path, "text")),
        _qbox(_get(d, "bbox", path), _join(path, "bbox"), nullable=nullable),
    )


def _text_boxes(v, path: str, *, nullable: bool) -> tuple[TextBox, ...]:
    return tuple(_text_box(e, _join(path, i), nullable=nullable) for i, e in enumerate(_list(v, path)))


def _markup(v, path: str, *, strict: bool, allow_bare: bool) -> GroundedText:
    raw = _str(v, path)
    defects = find_defects(raw, strict=strict, allow_bare=allow_bare, field=path)
    if defects:
        summary = ", ".join(f"{d.kind.value}@{d.offset}" for d in defects)
        raise _FieldError(path, f"markup defects: {summary}", defects)
    return parse(raw, strict=strict, allow_bare=allow_bare)


def _meta(d: dict, path: str) -> dict:
    m = d.get("meta", {})
    if not isinstance(m, dict):
        raise _FieldError(_join(path, "meta"), "expected object")
    return m


# ---------------------------------------------------------------------------
# record codecs
# ---------------------------------------------------------------------------


def _qbox_json(q: QuantBox | None):
    return None if q is None else list(q.as_tuple())


def _tb_json(tb: TextBox) -> dict:
    return {"text": tb.text, "bbox": _qbox_json(tb.box)}


def block_from_dict(d: dict, path: str = "") -> Block:
    lines = tuple(
        Line(
            _page_text(_get(l, "text", _join(_join(path, "lines"), i)), _join(_join(_join(path, "lines"), i), "text")),
            _fbox(_get(l, "bbox", _join(_join(path, "lines"), i)), _join(_join(_join(path, "lines"), i), "bbox")),
        )
        for i, l in enumerate(_list(d.get("lines", []), _join(path, "lines")))
    )
    return Block(
        id=_str(_get(d, "id", path), _join(path, "id")),
        text=_page_text(_get(d, "text", path), _join(path, "text")),
        bbox=_fbox(_get(d, "bbox", path), _join(path, "bbox")),
        source=_enum(Source, d.get("source", "unordered"), _join(path, "source")),
        granularity=_enum(Granularity, d.get("granularity", "paragraph"), _join(path, "granularity")),
        lines=lines,
    )


def block_to_dict(b: Block) -> dict:
    d = {
        "id": b.id,
        "text": b.text,
        "bbox": list(b.bbox.as_tuple()),
        "source": b.source.value,
        "granularity": b.granularity.value,
    }
    if b.lines:
        d["lines"] = [{"text": l.text, "bbox": list(l.bbox.as_tuple())} for l in b.lines]
    return d


def _decode(d: dict) -> CorpusItem:
    kind = _get(d, "kind", "")
    if kind == "poster":
        return PosterPage(
            id=_str(_get(d, "id", ""), "id"),
            image=_str(_get(d, "image", ""), "image"),
            text_with_box=_text_boxes(_get(d, "text_with_box", ""), "text_with_box", nullable=False),
            meta=_meta(d, ""),
        )
    if kind == "chart":
        title = d.get("title")
        return ChartPage(
            id=_str(_get(d, "id", ""), "id"),
            image=_str(_get(d, "image", ""), "image"),
            title=None if title is None else _text_box(title, "title", nullable=True),
            axis_labels=_text_boxes(d.get("axis_labels", []), "axis_labels", nullable=True),
            legends=_text_boxes(d.get("legends", []), "legends", nullable=True),
            data_markers=_text_boxes(d.get("data_markers", []), "data_markers", nullable=True),
        )
    if kind == "pdf":
        width = _int(_get(d, "width", ""), "width")
        height = _int(_get(d, "height", ""), "height")
        if width < 1 or height < 1:
            raise _FieldError("width", "page size must be positive")
        blocks = tuple(
            block_from_dict(b, _join("blocks", i)) if isinstance(b, dict) else _bad_object(_join("blocks", i))
            for i, b in enumerate(_list(_get(d, "blocks", ""), "blocks"))
        )
        ids = [b.id for b in blocks]
        if len(set(ids)) != len(ids):
            raise _FieldError("blocks", "duplicate block id")
        return PdfPage(
            id=_str(_get(d, "id", ""), "id"),
            image=_str(_get(d, "image", ""), "image"),
            width=width,
            height=height,
            blocks=blocks,
        )
    if kind == "block":
        return block_from_dict(d)
    if kind == "parsing":
        return ParsingRecord(
            page_id=_str(_get(d, "page_id", ""), "page_id"),
            granularity=_enum(ParseGranularity, _get(d, "granularity", ""), "granularity"),
            task=_enum(ParseTask, _get(d, "task", ""), "task"),
            instruction=_str(_get(d, "instruction", ""), "instruction"),
            target=_markup(_get(d, "target", ""), "target", strict=False, allow_bare=True),
            unit_id=_str(d.get("unit_id", ""), "unit_id"),
        )
    if kind == "sample":
        question = _markup(_get(d, "question", ""), "question", strict=True, allow_bare=True)
        answer = _markup(_get(d, "answer", ""), "answer", strict=True, allow_bare=False)
        answer_class = _enum(AnswerClass, _get(d, "answer_class", ""), "answer_class")
        task = _enum(TaskKind, _get(d, "task", ""), "task")
        expected = classify_task(question, answer_class)
        if task is not expected:
            raise _FieldError(
                "task", f"label {task.value} inconsistent with question/answer class (expected {expected.value})"
            )
        page_id = d.get("page_id")
        return Sample(
            id=_str(_get(d, "id", ""), "id"),
            doc_type=_enum(DocType, _get(d, "doc_type", ""), "doc_type"),
            question=question,
            answer=answer,
            answer_class=answer_class,
            task=task,
            page_id=None if page_id is None else _str(page_id, "page_id"),
            meta=_meta(d, ""),
        )
    raise _FieldError("kind", f"unknown record kind {kind!r}")


def _bad_object(path: str):
    raise _FieldError(path, "expected object")


def item_to_dict(item: CorpusItem) -> dict:
    if isinstance(item, PosterPage):
        d = {
            "kind": "poster",
            "id": item.id,
            "image": item.image,
            "text_with_box": [_tb_json(t) for t in item.text_with_box],
        }
        if item.meta:
            d["meta"] = item.meta
        return d
    if isinstance(item, ChartPage):
        return {
            "kind": "chart",
            "id": item.id,
            "image": item.image,
            "title": None if item.title is None else _tb_json(item.title),
            "axis_labels": [_tb_json(t) for t in item.axis_labels],
            "legends": [_tb_json(t) for t in item.legends],
            "data_markers": [_tb_json(t) for t in item.data_markers],
        }
    if isinstance(item, PdfPage):
        return {
            "kind": "pdf",
            "id": item.id,
            "image": item.image,
            "width": item.width,
            "height": item.height,
            "blocks": [block_to_dict(b) for b in item.blocks],
        }
    if isinstance(item, Block):
        return {"kind": "block", **block_to_dict(item)}
    if isinstance(item, ParsingRecord):
        d = {
            "kind": "parsing",
            "page_id": item.page_id,
            "granularity": item.granularity.value,
            "task": item.task.value,
            "instruction": item.instruction,
            "target": serialize(item.target, allow_unboxed=True),
        }
        if item.unit_id:
            d["unit_id"] = item.unit_id
        return d
    if isinstance(item, Sample):
        d = {
            "kind": "sample",
            "id": item.id,
            "doc_type": item.doc_type.value,
            "page_id": item.page_id,
            "question": serialize(item.question),
            "answer": serialize(item.answer),
            "answer_class": item.answer_class.value,
            "task": item.task.value,
        }
        if item.meta:
            d["meta"] = item.meta
        return d
    raise TypeError(f"not a corpus item: {type(item).__name__}")


def item_from_dict(d: dict) -> CorpusItem:
    """Decode one record; raises :class:`CorpusError` with line 0 on violation."""
    try:
        return _decode(d)
    except _FieldError as e:
        raise CorpusError(0, e.path, e.message, e.defects) from None


def dumps_item(item: CorpusItem) -> str:
    return json.dumps(item_to_dict(item), ensure_ascii=False, separators=(",", ":"))


def load_corpus(path: str | Path) -> list[CorpusItem]:
    """Read a JSONL corpus; blank lines are skipped, anything else must validate."""
    items: list[CorpusItem] = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CorpusError(lineno, "", f"invalid JSON: {e.msg}") from None
            if not isinstance(obj, dict):
                raise CorpusError(lineno, "", "record must be a JSON object")
            try:
                item = _decode(obj)
            except _FieldError as e:
                raise CorpusError(lineno, e.path, e.message, e.defects) from None
            except ValueError as e:
                raise CorpusError(lineno, "", str(e)) from None
            key = _identity(item)
            if key is not None:
                if key in seen:
                    raise CorpusError(lineno, "id", f"duplicate id {key[1]!r} (first on line {seen[key]})")
                seen[key] = lineno
            items.append(item)
    return items


def _identity(item: CorpusItem) -> tuple[str, str] | None:
    if isinstance(item, (PosterPage, ChartPage, PdfPage)):
        return ("page", item.id)
    if isinstance(item, Sample):
        return ("sample", item.id)
    return None


def save_corpus(items: Iterable[CorpusItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(dumps_item(item))
            fh.write("\n")


def pages_by_id(items: Iterable[CorpusItem]) -> dict[str, Page]:
    return {i.id: i for i in items if isinstance(i, (PosterPage, ChartPage, PdfPage))}


# ---------------------------------------------------------------------------
# text index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexLine:
    position: int  # reading-order position on the page
    block: int  # lines of one block may be joined by a multi-line query
    text: str
    norm: str
    bbox: BBox
    box: QuantBox


@dataclass(frozen=True)
class Candidate:
    start: int  # first line position
    stop: int  # one past the last line position
    text: str
    bbox: BBox
    box: QuantBox

    @property
    def multiline(self) -> bool:
        return self.stop - self.start > 1


def _padded(s: str) -> str:
    return f" {s} "


class TextIndex:
    """Line-level lookup from normalized text to page locations.

    A query hits a single line when the normalized texts are equal, and a
    run of consecutive lines of one block when it is a whole-word substring
    of their joined text touching both the first and the last line. Runs
    are minimal: dropping either end line loses the match.
    """

    def __init__(self, lines: Iterable[IndexLine]):
        self.lines: tuple[IndexLine, ...] = tuple(lines)
        self._exact: dict[str, list[int]] = {}
        for k, line in enumerate(self.lines):
            self._exact.setdefault(line.norm, []).append(k)
        self._blocks: dict[int, list[int]] = {}
        for k, line in enumerate(self.lines):
            self._blocks.setdefault(line.block, []).append(k)

    def __len__(self) -> int:
        return len(self.lines)

    def _joined(self, ks: list[int]) -> str:
        return _padded(normalize_text(" ".join(self.lines[k].text for k in ks)))

    def lookup(self, text: str) -> list[Candidate]:
        q = normalize_text(text)
        if not q:
            return []
        out: list[Candidate] = []
        for k in self._exact.get(q, []):
            ln = self.lines[k]
            out.append(Candidate(ln.position, ln.position + 1, ln.text, ln.bbox, ln.box))
        needle = _padded(q)
        for members in self._blocks.values():
            for a in range(len(members)):
                inner = 0  # length of the lines strictly inside the window
                for b in range(a + 1, len(members)):
                    if b > a + 1:
                        inner += len(self.lines[members[b - 1]].norm) + 1
                    if inner > len(q):
                        break
                    ks = members[a : b + 1]
                    if needle not in self._joined(ks):
                        continue
                    if needle in self._joined(ks[1:]) or needle in self._joined(ks[:-1]):
                        continue
                    bbox = union_box(self.lines[k].bbox for k in ks)
                    first, last = self.lines[ks[0]], self.lines[ks[-1]]
                    out.append(
                        Candidate(
                            first.position,
                            last.position + 1,
                            " ".join(self.lines[k].text for k in ks),
                            bbox,
                            quantize(bbox),
                        )
                    )
        out.sort(key=lambda c: (c.start, c.stop))
        return out

    def entries_for(self, text: str) -> list[QuantBox]:
        """Boxes annotated for exactly this (normalized) text."""
        return [self.lines[k].box for k in self._exact.get(normalize_text(text), [])]


def build_text_index(page: Page) -> TextIndex:
    lines: list[IndexLine] = []

    def add(block: int, text: str, bbox: BBox, box: QuantBox) -> None:
        lines.append(IndexLine(len(lines), block, text, normalize_text(text), bbox, box))

    if isinstance(page, PdfPage):
        for bi, blk in enumerate(page.blocks):
            parts = blk.lines or (Line(blk.text, blk.bbox),)
            for ln in parts:
                add(bi, ln.text, ln.bbox, quantize(ln.bbox))
    else:
        entries = page.text_with_box if isinstance(page, PosterPage) else page.entries()
        for bi, tb in enumerate(entries):
            if tb.box is not None:
                add(bi, tb.text, dequantize(tb.box), tb.box)
    return TextIndex(lines)


# ---------------------------------------------------------------------------
# full-page targets and parsing records
# ---------------------------------------------------------------------------


def full_page_json(page: Page) -> str:
    """Canonical full-page parsing string for one page, entries in reading order."""
    if isinstance(page, PosterPage):
        payload = [_tb_json(t) for t in page.text_with_box]
    elif isinstance(page, ChartPage):
        payload = {
            "title": None if page.title is None else _tb_json(page.title),
            "axis_labels": [_tb_json(t) for t in page.axis_labels],
            "legends": [_tb_json(t) for t in page.legends],
            "data_markers": [_tb_json(t) for t in page.data_markers],
        }
    else:
        payload = [
            {"text": b.text, "bbox": list(quantize(b.bbox).as_tuple())} for b in page.blocks
        ]
    return json.dumps(payload, ensure_ascii=False, separators=(", ", ": "))


def _units(page: Page, granularity: ParseGranularity) -> list[tuple[str, str, QuantBox]]:
    """(unit id, text, box) for every unit of ``page`` at ``granularity``."""
    if isinstance(page, PosterPage):
        if granularity is not ParseGranularity.PARAGRAPH:
            return []
        return [(f"p{i}", t.text, t.box) for i, t in enumerate(page.text_with_box) if t.box is not None]
    if isinstance(page, ChartPage):
        if granularity is not ParseGranularity.PHRASE:
            return []
        return [(f"c{i}", t.text, t.box) for i, t in enumerate(page.entries()) if t.box is not None]
    out: list[tuple[str, str, QuantBox]] = []
    for blk in page.blocks:
        if blk.granularity.value == granularity.value:
            out.append((blk.id, blk.text, quantize(blk.bbox)))
        elif granularity is ParseGranularity.LINE and blk.lines:
            for k, ln in enumerate(blk.lines):
                out.append((f"{blk.id}#{k}", ln.text, quantize(ln.bbox)))
    return out


def _pick(options: tuple[str, ...], page_id: str, ordinal: int) -> str:
    return options[(zlib.crc32(page_id.encode("utf-8")) + ordinal) % len(options)]


def emit_parsing_tasks(
    page: Page,
    granularity: ParseGranularity | str,
    templates: Templates | None = None,
    task: ParseTask | str = ParseTask.LOCALIZATION,
) -> list[ParsingRecord]:
    """Instruction/target pairs for one page.

    Templates rotate per unit starting from an offset derived from the page
    id, so the assignment is stable across runs. ``full_page`` granularity
    ignores ``task`` and yields one record whose target is the page JSON.
    """
    templates = templates or Templates()
    granularity = ParseGranularity(granularity)
    task = ParseTask(task)
    if granularity is ParseGranularity.FULL_PAGE:
        options = templates.full_page[page.doc_type.value]
        return [
            ParsingRecord(
                page.id,
                granularity,
                ParseTask.FULL_PAGE,
                _pick(tuple(options), page.id, 0),
                GroundedText((Plain(full_page_json(page)),)),
            )
        ]
    if task is ParseTask.FULL_PAGE:
        raise ValueError("task full_page requires granularity full_page")
    records: list[ParsingRecord] = []
    for ordinal, (unit_id, text, box) in enumerate(_units(page, granularity)):
        if task is ParseTask.LOCALIZATION:
            instruction = _pick(templates.localization, page.id, ordinal).replace("{text}", text)
            target = GroundedText((Region(box),))
        else:
            bbox_str = serialize(GroundedText((Region(box),)))
            instruction = _pick(templates.recognition, page.id, ordinal).replace("{bbox}", bbox_str)
            target = GroundedText((Grounded(text),))
        records.append(ParsingRecord(page.id, granularity, task, instruction, target, unit_id))
    return records


__all__ = [
    "Candidate",
    "ChartPage",
    "CorpusError",
    "CorpusItem",
    "IndexLine",
    "Page",
    "ParseGranularity",
    "ParseTask",
    "ParsingRecord",
    "PdfPage",
    "PosterPage",
    "Sample",
    "TextBox",
    "TextIndex",
    "block_from_dict",
    "block_to_dict",
    "build_text_index",
    "emit_parsing_tasks",
    "full_page_json",
    "item_from_dict",
    "item_to_dict",
    "load_corpus",
    "pages_by_id",
    "save_corpus",
]
