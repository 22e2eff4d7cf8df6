"""Ground generated text after the fact.

Generated questions and answers arrive with source-derived spans wrapped in
``<ocr>`` tags but no coordinates. Each span is looked up in the page's text
index and gets the box of the matching occurrence; spans that cannot be found
are turned back into plain text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .dataset import Candidate, Page, Sample, TextIndex, build_text_index
from .markup import GroundedSegment, GroundedText, Plain, SegmentKind, coalesce, parse
from .taxonomy import AnswerClass, DocType, classify_task
from .templates import Templates


@dataclass(frozen=True)
class AnnotationOutcome:
    doc: GroundedText
    located: int
    degraded: int
    multiline: int
    groundings: tuple[Candidate | None, ...]  # one per input span, None when degraded


def locate_and_ground(
    generated: str, index: TextIndex, *, allow_bare: bool = False
) -> AnnotationOutcome:
    """Insert a box after every ``<ocr>`` span of ``generated``.

    Repeated spans walk through the occurrences in reading order; once every
    occurrence of a text has been used, later repeats point back at the
    first one.

    Raises:
        MarkupError: when ``generated`` is malformed.
    """
    doc = parse(generated, strict=False, allow_bare=allow_bare)
    consumed: set[tuple[int, int]] = set()
    segments: list[GroundedSegment] = []
    groundings: list[Candidate | None] = []
    located = degraded = multiline = 0
    for seg in doc.segments:
        if seg.kind is not SegmentKind.GROUNDED:
            segments.append(seg)
            continue
        hits = index.lookup(seg.text)
        if not hits:
            segments.append(Plain(seg.text))
            groundings.append(None)
            degraded += 1
            continue
        pick = next((c for c in hits if (c.start, c.stop) not in consumed), hits[0])
        consumed.add((pick.start, pick.stop))
        segments.append(GroundedSegment(SegmentKind.GROUNDED, seg.text, (pick.box,)))
        groundings.append(pick)
        located += 1
        multiline += pick.multiline
    return AnnotationOutcome(coalesce(segments), located, degraded, multiline, tuple(groundings))


# ---------------------------------------------------------------------------
# response-format prompts
# ---------------------------------------------------------------------------


def _choice_hash(sample_id: str, answer_class: AnswerClass, seed: int) -> int:
    key = f"{seed}\x1f{sample_id}\x1f{answer_class.value}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def select_format_prompt(
    answer_class: AnswerClass | str, templates: Templates, sample_id: str, seed: int = 0
) -> tuple[int, ...]:
    """Template indices for one sample: GA one, GR two (first and second pool), GO one, PA none."""
    cls = AnswerClass(answer_class)
    h = _choice_hash(sample_id, cls, seed)
    if cls is AnswerClass.GA:
        return (h % len(templates.format_ga),)
    if cls is AnswerClass.GR:
        n1 = len(templates.format_gr_first)
        return (h % n1, (h // n1) % len(templates.format_gr_second))
    if cls is AnswerClass.GO:
        return (h % len(templates.format_gr_first),)
    return ()


def format_suffix(answer_class: AnswerClass | str, templates: Templates, picks: tuple[int, ...]) -> str:
    cls = AnswerClass(answer_class)
    if cls is AnswerClass.GA:
        parts = [templates.format_ga[picks[0]]]
    elif cls is AnswerClass.GR:
        parts = [templates.format_gr_first[picks[0]], templates.format_gr_second[picks[1]]]
    elif cls is AnswerClass.GO:
        parts = [templates.format_gr_first[picks[0]]]
    else:
        parts = []
    return " ".join(parts)


def attach_format_prompt(
    question: str,
    answer_class: AnswerClass | str,
    templates: Templates | None = None,
    sample_id: str = "",
    seed: int = 0,
) -> str:
    """``question`` followed by the response-format prompt chosen for this sample.

    Raises:
        ValueError: unknown answer class.
    """
    templates = templates or Templates()
    picks = select_format_prompt(answer_class, templates, sample_id, seed)
    suffix = format_suffix(answer_class, templates, picks)
    return f"{question} {suffix}" if suffix else question


# ---------------------------------------------------------------------------
# whole samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleOutcome:
    sample: Sample
    question: AnnotationOutcome
    answer: AnnotationOutcome


def annotate_sample(
    sample_id: str,
    page: Page,
    question: str,
    answer: str,
    answer_class: AnswerClass | str,
    *,
    templates: Templates | None = None,
    seed: int = 0,
    index: TextIndex | None = None,
) -> SampleOutcome:
    """Ground one generated Q&A pair against ``page`` and label its task.

    Question and answer are grounded independently, each with its own
    occurrence bookkeeping. PA answers are kept plain.
    """
    templates = templates or Templates()
    cls = AnswerClass(answer_class)
    index = index or build_text_index(page)
    q_out = locate_and_ground(question, index, allow_bare=True)
    a_out = locate_and_ground(answer, index)
    answer_doc = a_out.doc
    if cls is AnswerClass.PA:
        answer_doc = coalesce(Plain(s.text) for s in answer_doc.segments)
    picks = select_format_prompt(cls, templates, sample_id, seed)
    suffix = format_suffix(cls, templates, picks)
    q_doc = q_out.doc
    if suffix:
        q_doc = coalesce(list(q_doc.segments) + [Plain(" " + suffix)])
    sample = Sample(
        id=sample_id,
        doc_type=DocType(page.doc_type),
        question=q_doc,
        answer=answer_doc,
        answer_class=cls,
        task=classify_task(q_doc, cls),
        page_id=page.id,
        meta={
            "format_prompt": list(picks),
            "seed": seed,
            "located": q_out.located + a_out.located,
            "degraded": q_out.degraded + a_out.degraded,
            "multiline": q_out.multiline + a_out.multiline,
        },
    )
    return SampleOutcome(sample, q_out, a_out)


__all__ = [
    "AnnotationOutcome",
    "SampleOutcome",
    "annotate_sample",
    "attach_format_prompt",
    "format_suffix",
    "locate_and_ground",
    "select_format_prompt",
]
