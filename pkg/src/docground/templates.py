"""Instruction and response-format templates.

Template files are JSON. A plain array of strings is one template list; an
object may carry any of the sections below and overrides the built-ins
section by section.

    {"localization": [...], "recognition": [...],
     "full_page": {"poster": [...], "chart": [...], "pdf": [...]},
     "format": {"GA": [...], "GR_first": [...], "GR_second": [...]}}

Placeholders: ``{text}`` in localization templates, ``{bbox}`` in
recognition templates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

LOCALIZATION = (
    "Where is the text \"{text}\" located in the image? Reply with its bounding box.",
    "Give the bounding box of \"{text}\".",
    "Locate the following text and output its box: {text}",
    "Find the region that contains \"{text}\" and report its coordinates.",
)

RECOGNITION = (
    "What text is written inside {bbox}?",
    "Read the text in the region {bbox}.",
    "Transcribe the content of {bbox}.",
    "Recognize the text located at {bbox}.",
)

FULL_PAGE = {
    "poster": (
        "Parse all text in this poster and give each paragraph with its bounding box as JSON.",
        "List every text block of the poster with its box, in reading order, as JSON.",
        "Convert this poster into a JSON list of text and bounding boxes.",
    ),
    "chart": ("Parse this chart into JSON with its title, axis labels, legends and data markers.",),
    "pdf": ("Parse every text block on this page into a JSON list of text and bounding boxes.",),
}

FORMAT_GA = (
    "Answer briefly and ground each answer phrase with its bounding box.",
    "Give a short answer; wrap text taken from the image in <ocr></ocr> followed by its <bbox></bbox>.",
    "Reply in a few words and attach the box of every quoted piece of text.",
    "Answer concisely with grounded text.",
    "Use a single word or phrase, grounded with its bounding box.",
    "Provide the answer as grounded text copied from the document.",
    "Keep the answer short and mark where it appears in the image.",
)

FORMAT_GR_FIRST = (
    "Explain your reasoning step by step, grounding any text you cite from the image.",
    "Describe the evidence in the document that supports your answer, with boxes for cited text.",
    "Think through the question using grounded references to the image.",
    "First walk through the relevant content of the document with bounding boxes.",
)

FORMAT_GR_SECOND = (
    "Then give the final answer after \"Answer: \".",
    "Finish with \"Answer: \" followed by a concise answer.",
    "End your reply with \"Answer: \" and a short answer.",
    "Conclude with a line starting with \"Answer: \".",
)


@dataclass(frozen=True)
class Templates:
    localization: tuple[str, ...] = LOCALIZATION
    recognition: tuple[str, ...] = RECOGNITION
    full_page: dict = field(default_factory=lambda: dict(FULL_PAGE))
    format_ga: tuple[str, ...] = FORMAT_GA
    format_gr_first: tuple[str, ...] = FORMAT_GR_FIRST
    format_gr_second: tuple[str, ...] = FORMAT_GR_SECOND


def _strings(v, where: str) -> tuple[str, ...]:
    if not isinstance(v, list) or not v or not all(isinstance(s, str) for s in v):
        raise ValueError(f"{where}: expected a non-empty JSON array of strings")
    return tuple(v)


def templates_from_json(data, *, section: str | None = None) -> Templates:
    """Build templates from decoded JSON; a bare array fills ``section``."""
    base = Templates()
    if isinstance(data, list):
        if section not in ("localization", "recognition"):
            raise ValueError("a bare template array needs section 'localization' or 'recognition'")
        return replace(base, **{section: _strings(data, section)})
    if not isinstance(data, dict):
        raise ValueError("template file must hold a JSON array or object")
    known = {"localization", "recognition", "full_page", "format"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown template sections: {sorted(unknown)}")
    changes: dict = {}
    for key in ("localization", "recognition"):
        if key in data:
            changes[key] = _strings(data[key], key)
    if "full_page" in data:
        fp = dict(FULL_PAGE)
        for doc_type, lst in data["full_page"].items():
            if doc_type not in FULL_PAGE:
                raise ValueError(f"full_page: unknown doc type {doc_type!r}")
            fp[doc_type] = _strings(lst, f"full_page.{doc_type}")
        changes["full_page"] = fp
    if "format" in data:
        names = {"GA": "format_ga", "GR_first": "format_gr_first", "GR_second": "format_gr_second"}
        for key, lst in data["format"].items():
            if key not in names:
                raise ValueError(f"format: unknown key {key!r}")
            changes[names[key]] = _strings(lst, f"format.{key}")
    return replace(base, **changes)


def load_templates(path: str | Path | None, *, section: str | None = None) -> Templates:
    if path is None:
        return Templates()
    return templates_from_json(json.loads(Path(path).read_text(encoding="utf-8")), section=section)
