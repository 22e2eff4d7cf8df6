"""Rule-based acceptance of generated samples and plain-QA derivation.

Stage one checks the markup of question and answer. Stage two checks every
grounded span against the page annotations: the text has to be annotated
and the box has to be the annotated box.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .dataset import Sample, TextIndex
from .geometry import dequantize, iou
from .markup import FormatDefect, GroundedText, Plain, SegmentKind, find_defects, parse, strip_grounding
from .taxonomy import AnswerClass, DocType, TaskKind, classify_task

BOX_MATCH_IOU = 0.99  # absorbs quantization wobble


class ContentReason(str, enum.Enum):
    NOT_IN_ANNOTATIONS = "NotInAnnotations"
    BOX_MISMATCH = "BoxMismatch"


@dataclass(frozen=True)
class ContentError:
    text: str
    reason: ContentReason
    field: str = ""

    def to_dict(self) -> dict:
        return {"text": self.text, "reason": self.reason.value, "field": self.field}


@dataclass(frozen=True)
class Verdict:
    defects: tuple[FormatDefect, ...] = ()
    content_errors: tuple[ContentError, ...] = ()

    @property
    def accepted(self) -> bool:
        return not self.defects and not self.content_errors

    @property
    def labels(self) -> set[str]:
        return {d.kind.value for d in self.defects} | {e.reason.value for e in self.content_errors}

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "defects": [d.to_dict() for d in self.defects],
            "content_errors": [e.to_dict() for e in self.content_errors],
        }


def _check_content(doc: GroundedText, index: TextIndex | None, field: str) -> list[ContentError]:
    errors: list[ContentError] = []
    for seg in doc.segments:
        if seg.kind is not SegmentKind.GROUNDED or not seg.boxes:
            continue
        hits = index.lookup(seg.text) if index is not None else []
        if not hits:
            errors.append(ContentError(seg.text, ContentReason.NOT_IN_ANNOTATIONS, field))
            continue
        span = dequantize(seg.boxes[0])
        if not any(iou(span, dequantize(c.box)) >= BOX_MATCH_IOU for c in hits):
            errors.append(ContentError(seg.text, ContentReason.BOX_MISMATCH, field))
    return errors


def validate_sample(
    question: str,
    answer: str,
    doc_type: DocType | str,
    index: TextIndex | None = None,
    *,
    strict_pdf: bool = False,
) -> Verdict:
    """Verdict for one raw question/answer pair.

    Poster and chart samples are content-checked against ``index``; PDF
    samples only when ``strict_pdf`` is set. A content check without an
    index fails every grounded span as NotInAnnotations.
    """
    doc_type = DocType(doc_type)
    check = doc_type is not DocType.PDF or strict_pdf
    defects: list[FormatDefect] = []
    content: list[ContentError] = []
    for field, raw, bare in (("question", question, True), ("answer", answer, False)):
        found = find_defects(raw, strict=True, allow_bare=bare, field=field)
        defects.extend(found)
        if not found and check:
            content.extend(_check_content(parse(raw, strict=True, allow_bare=bare), index, field))
    return Verdict(tuple(defects), tuple(content))


def derive_plain_qa(sample: Sample) -> Sample:
    """Plain-answer twin of a Ga sample: same question, grounding stripped from the answer.

    Raises:
        ValueError: the sample is not a Ga sample.
    """
    if sample.task is not TaskKind.GA:
        raise ValueError(f"sample {sample.id}: plain QA derives from Ga samples, got {sample.task.value}")
    answer = GroundedText((Plain(strip_grounding(sample.answer)),))
    return replace(
        sample,
        id=f"{sample.id}:plain",
        answer=answer,
        answer_class=AnswerClass.PA,
        task=classify_task(sample.question, AnswerClass.PA),
        meta={**sample.meta, "derived_from": sample.id},
    )
