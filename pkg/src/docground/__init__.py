"""Grounded document parsing data, verification and bench scoring."""

from .geometry import BBox, QuantBox, dequantize, iou, quantize
from .markup import (
    DefectKind,
    FormatDefect,
    Grounded,
    GroundedText,
    MarkupError,
    Plain,
    Region,
    find_defects,
    parse,
    serialize,
    strip_grounding,
)

__all__ = [
    "BBox",
    "DefectKind",
    "FormatDefect",
    "Grounded",
    "GroundedText",
    "MarkupError",
    "Plain",
    "QuantBox",
    "Region",
    "dequantize",
    "find_defects",
    "iou",
    "parse",
    "quantize",
    "serialize",
    "strip_grounding",
]
