"""Grounded text markup: ``<ocr>text</ocr><bbox>x1,y1,x2,y2</bbox>``.

A document is a flat sequence of segments. Plain text sits between grounded
spans; each grounded span carries at most one box group on the 0-999 grid.
Bare ``<bbox>`` groups (referring questions, localization targets) are only
legal when the caller asks for them with ``allow_bare=True``.

Parsing never stops at the first problem: every defect found is reported,
ordered by byte offset.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .geometry import GRID_MAX, BBox, QuantBox, dequantize

OCR_OPEN = "<ocr>"
OCR_CLOSE = "</ocr>"
BOX_OPEN = "<bbox>"
BOX_CLOSE = "</bbox>"

TAG_RE = re.compile(r"</?(?:ocr|bbox)>")
_INT_RE = re.compile(r"-?[0-9]+")


class SegmentKind(str, enum.Enum):
    PLAIN = "plain"
    GROUNDED = "grounded"
    REGION = "region"


class DefectKind(str, enum.Enum):
    UNCLOSED_TAG = "UnclosedTag"
    BAD_ARITY = "BadArity"
    NON_NUMERIC = "NonNumeric"
    OUT_OF_RANGE = "OutOfRange"
    ORPHAN_BBOX = "OrphanBBox"
    NULL_BBOX = "NullBBox"
    NESTED_TAG = "NestedTag"


@dataclass(frozen=True)
class FormatDefect:
    kind: DefectKind
    offset: int  # UTF-8 byte offset into the raw string
    detail: str = ""
    field: str = ""

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "offset": self.offset}
        if self.detail:
            d["detail"] = self.detail
        if self.field:
            d["field"] = self.field
        return d


class MarkupError(ValueError):
    """Raised by :func:`parse` with every defect found in the input."""

    def __init__(self, defects: list[FormatDefect]):
        self.defects = defects
        summary = ", ".join(f"{d.kind.value}@{d.offset}" for d in defects[:5])
        if len(defects) > 5:
            summary += f", ... ({len(defects)} total)"
        super().__init__(f"malformed grounded text: {summary}")


@dataclass(frozen=True)
class GroundedSegment:
    kind: SegmentKind
    text: str = ""
    boxes: tuple[QuantBox, ...] = ()
    null_box: bool = False  # came from a masked ``<bbox>null</bbox>`` group

    @property
    def is_grounded(self) -> bool:
        return self.kind is SegmentKind.GROUNDED

    @property
    def box(self) -> QuantBox | None:
        return self.boxes[0] if self.boxes else None


def Plain(text: str) -> GroundedSegment:
    return GroundedSegment(SegmentKind.PLAIN, text)


def Grounded(text: str, box: QuantBox | tuple[int, int, int, int] | None = None) -> GroundedSegment:
    if box is None:
        return GroundedSegment(SegmentKind.GROUNDED, text)
    if not isinstance(box, QuantBox):
        box = QuantBox(*box)
    return GroundedSegment(SegmentKind.GROUNDED, text, (box,))


def Region(box: QuantBox | tuple[int, int, int, int]) -> GroundedSegment:
    if not isinstance(box, QuantBox):
        box = QuantBox(*box)
    return GroundedSegment(SegmentKind.REGION, "", (box,))


@dataclass(frozen=True)
class GroundedText:
    segments: tuple[GroundedSegment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not isinstance(self.segments, tuple):
            object.__setattr__(self, "segments", tuple(self.segments))

    def __iter__(self):
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def grounded_spans(self) -> list[GroundedSegment]:
        return [s for s in self.segments if s.kind is SegmentKind.GROUNDED]

    @property
    def has_boxes(self) -> bool:
        """True when at least one box group is present (grounded or bare)."""
        return any(s.boxes for s in self.segments)

    def __str__(self) -> str:
        return serialize(self, allow_unboxed=True)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _parse_group(content: str, strict: bool) -> tuple[QuantBox | None, bool, list[tuple[DefectKind, str]]]:
    """Parse the inside of a ``<bbox>`` group -> (box, is_null, problems)."""
    if content.strip() == "null":
        if strict:
            return None, True, [(DefectKind.NULL_BBOX, "masked box")]
        return None, True, []
    parts = [p.strip() for p in content.split(",")]
    if len(parts) != 4:
        return None, False, [(DefectKind.BAD_ARITY, f"{len(parts)} coordinates")]
    problems: list[tuple[DefectKind, str]] = []
    values: list[int] = []
    for p in parts:
        if not _INT_RE.fullmatch(p):
            if not any(k is DefectKind.NON_NUMERIC for k, _ in problems):
                problems.append((DefectKind.NON_NUMERIC, f"coordinate {p!r}"))
            continue
        v = int(p)
        if not 0 <= v <= GRID_MAX:
            if not any(k is DefectKind.OUT_OF_RANGE for k, _ in problems):
                problems.append((DefectKind.OUT_OF_RANGE, f"coordinate {v}"))
        values.append(v)
    if problems:
        return None, False, problems
    x1, y1, x2, y2 = values
    if x1 > x2 or y1 > y2:
        return None, False, [(DefectKind.OUT_OF_RANGE, "inverted box")]
    return QuantBox(x1, y1, x2, y2), False, []


class _Parser:
    def __init__(self, raw: str, strict: bool, allow_bare: bool):
        self.raw = raw
        self.strict = strict
        self.allow_bare = allow_bare
        self.tags = list(TAG_RE.finditer(raw))
        self.segments: list[GroundedSegment] = []
        self.defects: list[tuple[int, DefectKind, str]] = []
        self.plain: list[str] = []

    def defect(self, offset: int, kind: DefectKind, detail: str = "") -> None:
        self.defects.append((offset, kind, detail))

    def flush_plain(self) -> None:
        text = "".join(self.plain)
        self.plain = []
        if text:
            self.segments.append(Plain(text))

    def group(self, k: int) -> tuple[int, int, QuantBox | None, bool, bool]:
        """Read the ``<bbox>`` group whose opener is tag ``k``.

        Returns (next tag index, resume position, box, is_null, ok).
        """
        tags, raw = self.tags, self.raw
        opener = tags[k]
        if k + 1 < len(tags) and tags[k + 1].group() == BOX_CLOSE:
            closer = tags[k + 1]
            box, is_null, problems = _parse_group(raw[opener.end():closer.start()], self.strict)
            for kind, detail in problems:
                self.defect(opener.start(), kind, detail)
            return k + 2, closer.end(), box, is_null, not problems
        self.defect(opener.start(), DefectKind.UNCLOSED_TAG, "missing </bbox>")
        if k + 1 < len(tags):
            return k + 1, tags[k + 1].start(), None, False, False
        return len(tags), len(raw), None, False, False

    def run(self) -> None:
        tags, raw = self.tags, self.raw
        n = len(tags)
        pos = 0
        k = 0
        while k < n:
            m = tags[k]
            self.plain.append(raw[pos:m.start()])
            tag = m.group()
            if tag == OCR_OPEN:
                k, pos = self.span(k)
            elif tag == BOX_OPEN:
                if self.allow_bare:
                    self.flush_plain()
                    k, pos, box, is_null, ok = self.group(k)
                    if is_null and not self.strict:
                        self.defect(m.start(), DefectKind.NULL_BBOX, "bare masked box")
                    elif ok and box is not None:
                        self.segments.append(Region(box))
                else:
                    self.defect(m.start(), DefectKind.ORPHAN_BBOX, "<bbox> without preceding <ocr>")
                    if k + 1 < n and tags[k + 1].group() == BOX_CLOSE:
                        k, pos = k + 2, tags[k + 1].end()
                    else:
                        k, pos, *_ = self.group(k)
            elif tag == OCR_CLOSE:
                self.defect(m.start(), DefectKind.UNCLOSED_TAG, "stray </ocr>")
                k, pos = k + 1, m.end()
            else:  # stray </bbox>
                self.defect(m.start(), DefectKind.ORPHAN_BBOX, "stray </bbox>")
                k, pos = k + 1, m.end()
        self.plain.append(raw[pos:])
        self.flush_plain()

    def span(self, k: int) -> tuple[int, int]:
        """Read an ``<ocr>`` span (plus its optional box group) starting at tag ``k``."""
        tags, raw = self.tags, self.raw
        n = len(tags)
        opener = tags[k]
        depth = 1
        j = k + 1
        while j < n:
            t = tags[j].group()
            if t == OCR_OPEN:
                self.defect(tags[j].start(), DefectKind.NESTED_TAG, "<ocr> inside <ocr>")
                depth += 1
            elif t == OCR_CLOSE:
                depth -= 1
                if depth == 0:
                    break
            else:
                break
            j += 1
        if j >= n or tags[j].group() != OCR_CLOSE:
            self.defect(opener.start(), DefectKind.UNCLOSED_TAG, "missing </ocr>")
            if j >= n:
                return n, len(raw)
            if tags[j].group() == BOX_OPEN:
                # the box belongs to the broken span; don't report it as orphaned
                nk, npos, *_ = self.group(j)
                return nk, npos
            return j, tags[j].start()

        text = raw[opener.end():tags[j].start()]
        after = tags[j].end()
        k = j + 1
        box: QuantBox | None = None
        is_null = False
        group_ok = True
        if k < n and tags[k].group() == BOX_OPEN and not raw[after:tags[k].start()].strip():
            k, after, box, is_null, group_ok = self.group(k)
        elif self.strict:
            self.defect(opener.start(), DefectKind.BAD_ARITY, "grounded span without <bbox> group")
        self.flush_plain()
        if box is not None:
            self.segments.append(Grounded(text, box))
        elif group_ok:
            self.segments.append(GroundedSegment(SegmentKind.GROUNDED, text, (), null_box=is_null))
        return k, after


def _byte_offsets(raw: str, char_offsets: list[int]) -> dict[int, int]:
    out: dict[int, int] = {}
    for c in sorted(set(char_offsets)):
        out[c] = len(raw[:c].encode("utf-8", "surrogatepass"))
    return out


def _defects(p: _Parser, field: str) -> list[FormatDefect]:
    offsets = _byte_offsets(p.raw, [d[0] for d in p.defects])
    ordered = sorted(p.defects, key=lambda d: d[0])
    return [FormatDefect(kind, offsets[c], detail, field) for c, kind, detail in ordered]


def find_defects(raw: str, *, strict: bool = True, allow_bare: bool = False, field: str = "") -> list[FormatDefect]:
    """All format defects of ``raw``, sorted by byte offset (empty when valid)."""
    p = _Parser(raw, strict, allow_bare)
    p.run()
    return _defects(p, field)


def parse(raw: str, *, strict: bool = False, allow_bare: bool = False) -> GroundedText:
    """Parse grounded markup.

    ``strict`` rejects masked ``null`` boxes (NullBBox) and grounded spans
    lacking a box group (BadArity); the lenient default keeps them as
    unboxed grounded spans for :func:`degrade_null` or post-annotation.

    Raises:
        MarkupError: carrying every defect found.
    """
    p = _Parser(raw, strict, allow_bare)
    p.run()
    if p.defects:
        raise MarkupError(_defects(p, ""))
    return GroundedText(tuple(p.segments))


# ---------------------------------------------------------------------------
# serialization and transforms
# ---------------------------------------------------------------------------


def format_box(q: QuantBox) -> str:
    return f"{BOX_OPEN}{q.qx1},{q.qy1},{q.qx2},{q.qy2}{BOX_CLOSE}"


def serialize(doc: GroundedText, *, allow_unboxed: bool = False) -> str:
    """Canonical markup: no whitespace inside ``<bbox>``.

    Grounded spans without a box are refused unless ``allow_unboxed`` is set,
    in which case they are written as ``<ocr>text</ocr>`` (plus ``<bbox>null</bbox>``
    for masked values).
    """
    out: list[str] = []
    for seg in doc.segments:
        if seg.kind is SegmentKind.PLAIN:
            out.append(seg.text)
        elif seg.kind is SegmentKind.REGION:
            out.append(format_box(seg.boxes[0]))
        else:
            if len(seg.boxes) > 1:
                raise ValueError(f"grounded span {seg.text!r} has {len(seg.boxes)} boxes; one allowed")
            if not seg.boxes and not allow_unboxed:
                raise ValueError(f"grounded span {seg.text!r} has no box; degrade it first")
            out.append(f"{OCR_OPEN}{seg.text}{OCR_CLOSE}")
            if seg.boxes:
                out.append(format_box(seg.boxes[0]))
            elif seg.null_box:
                out.append(f"{BOX_OPEN}null{BOX_CLOSE}")
    return "".join(out)


def coalesce(segments) -> GroundedText:
    """Merge adjacent plain segments and drop empty ones."""
    out: list[GroundedSegment] = []
    for seg in segments:
        if seg.kind is SegmentKind.PLAIN:
            if not seg.text:
                continue
            if out and out[-1].kind is SegmentKind.PLAIN:
                out[-1] = Plain(out[-1].text + seg.text)
                continue
        out.append(seg)
    return GroundedText(tuple(out))


def strip_grounding(doc: GroundedText) -> str:
    """Visible text only: grounded spans become their bare text, boxes vanish."""
    return "".join(s.text for s in doc.segments)


def degrade_null(doc: GroundedText) -> GroundedText:
    """Turn grounded spans that have no usable box into plain text."""
    return coalesce(
        Plain(s.text) if s.kind is SegmentKind.GROUNDED and not s.boxes else s
        for s in doc.segments
    )


def bare_boxes(doc: GroundedText) -> GroundedText:
    """Referring form of a question: grounded spans collapse to bare box groups."""
    return coalesce(
        Region(s.boxes[0]) if s.kind is SegmentKind.GROUNDED and s.boxes else s
        for s in doc.segments
    )


def extract_spans(doc: GroundedText) -> list[tuple[str, BBox]]:
    return [
        (s.text, dequantize(s.boxes[0]))
        for s in doc.segments
        if s.kind is SegmentKind.GROUNDED and s.boxes
    ]
