"""Seeded synthetic data: raster scenes, page layouts, PDF pages, and a bench.

Everything here is driven by an explicit ``random.Random`` so that the same
seed always yields the same corpus.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .dataset import PdfPage, Sample
from .geometry import BBox, QuantBox, dequantize, quantize
from .markup import Grounded, Plain, Region, coalesce
from .merge import Block, Granularity, Line, Source
from .raster import Layer, PixelBox, RectShape, Scene, TextShape, layer_extent
from .taxonomy import AnswerClass, DocType, TaskKind, classify_task

WORDS = (
    "total revenue sales net profit growth market share region north south east west "
    "quarter annual report figure table summary method result value index rate price "
    "cost margin budget forecast target actual variance ratio score level stage phase "
    "alpha beta gamma delta model data sample test group mean median peak low high"
).split()


def _phrase(rng: random.Random, lo: int, hi: int) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


# ---------------------------------------------------------------------------
# raster scenes
# ---------------------------------------------------------------------------


def _visible_fill(rng: random.Random, background) -> tuple[int, int, int, int]:
    while True:
        rgb = [rng.randrange(256) for _ in range(3)]
        if max(abs(c - b) for c, b in zip(rgb, background[:3])) >= 64:
            return (*rgb, rng.randint(160, 255))


def random_scene(
    rng: random.Random,
    *,
    width: int | None = None,
    height: int | None = None,
    n_layers: int | None = None,
) -> tuple[Scene, dict[str, PixelBox]]:
    """Non-overlapping rectangles and text runs plus their constructed extents.

    Layers are packed on a coarse grid of cells, one layer per cell, so no
    two extents share a pixel.
    """
    width = width or rng.randint(120, 320)
    height = height or rng.randint(120, 320)
    background = (255, 255, 255, 255) if rng.random() < 0.7 else (*[rng.randrange(256) for _ in range(3)], 255)
    cols, rows = rng.randint(2, 4), rng.randint(2, 4)
    cw, ch = width // cols, height // rows
    cells = [(c, r) for c in range(cols) for r in range(rows)]
    rng.shuffle(cells)
    n = min(n_layers or rng.randint(1, len(cells)), len(cells))
    layers: list[Layer] = []
    for k, (c, r) in enumerate(cells[:n]):
        x0, y0 = c * cw, r * ch
        fill = _visible_fill(rng, background)
        opacity = rng.choice((1.0, 1.0, 0.8, 0.6))
        if rng.random() < 0.5 or cw < 12 or ch < 9:
            w = rng.randint(1, max(1, cw - 1))
            h = rng.randint(1, max(1, ch - 1))
            shape = RectShape(x0 + rng.randint(0, cw - w), y0 + rng.randint(0, ch - h), w, h)
        else:
            scale = rng.choice((1, 1, 2))
            max_chars = max(1, (cw // scale + 1) // 6)
            if 7 * scale >= ch:
                scale = 1
                max_chars = max(1, (cw + 1) // 6)
            text = "".join(rng.choice("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789") for _ in range(rng.randint(1, max_chars)))
            tw = (len(text) * 6 - 1) * scale
            shape = TextShape(x0 + rng.randint(0, max(0, cw - tw)), y0 + rng.randint(0, max(0, ch - 7 * scale)), text, scale)
        layers.append(Layer(f"L{k}", shape, fill, opacity))
    scene = Scene(width, height, background, tuple(layers))
    extents = {l.id: layer_extent(l, width, height) for l in layers}
    return scene, extents


def _touches(a: PixelBox, b: PixelBox) -> bool:
    return a.px1 < b.px2 and b.px1 < a.px2 and a.py1 < b.py2 and b.py1 < a.py2


def occluded_scene(rng: random.Random) -> tuple[Scene, str]:
    """A scene whose layer ``hidden`` sits fully under an opaque later layer.

    The cover is kept clear of the other layers so that ``hidden`` is the
    only invisible one.
    """
    while True:
        scene, extents = random_scene(rng, n_layers=rng.randint(1, 3))
        x, y = rng.randint(0, scene.width // 2), rng.randint(0, scene.height // 2)
        w, h = rng.randint(4, scene.width // 3), rng.randint(4, scene.height // 3)
        pad = rng.randint(0, 3)
        cover_shape = RectShape(x - pad, y - pad, w + 2 * pad, h + 2 * pad)
        cover_fill = (*_visible_fill(rng, scene.background)[:3], 255)
        cover = Layer("cover", cover_shape, cover_fill, 1.0)
        reach = layer_extent(cover, scene.width, scene.height)
        if reach is not None and not any(e is not None and _touches(reach, e) for e in extents.values()):
            break
    hidden = Layer("hidden", RectShape(x, y, w, h), _visible_fill(rng, scene.background), 1.0)
    return Scene(scene.width, scene.height, scene.background, scene.layers + (hidden, cover)), "hidden"


# ---------------------------------------------------------------------------
# page layouts for the merge
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticPage:
    ordered: list[Block]
    unordered: list[Block]
    truth: list[str]  # ids of the complete blocks in intended reading order


def random_layout(rng: random.Random, page_no: int = 0) -> SyntheticPage:
    """A 1-3 column page with header, paragraphs, tables and a footnote.

    The ordered list misses tables and footnotes and splits some paragraphs
    in two; the unordered list has every block, complete, shuffled.
    """
    p = f"pg{page_no}"
    n_cols = rng.randint(1, 3)
    margin, gap = 0.06, 0.04
    col_w = (1 - 2 * margin - gap * (n_cols - 1)) / n_cols
    complete: list[tuple[Block, str]] = []  # (block, role)
    y_top = 0.05
    if rng.random() < 0.8:
        h = Block(f"{p}-title", _phrase(rng, 2, 5), BBox(margin, y_top, 1 - margin, y_top + 0.05), granularity=Granularity.LINE)
        complete.append((h, "title"))
        y_top += 0.08
    counter = 0
    for c in range(n_cols):
        x1 = margin + c * (col_w + gap)
        y = y_top
        for _ in range(rng.randint(1, 4)):
            h = rng.uniform(0.05, 0.15)
            if y + h > 0.85:
                break
            role = "table" if rng.random() < 0.2 else "para"
            text = _phrase(rng, 6, 14) if role == "para" else "table " + _phrase(rng, 2, 4)
            complete.append((Block(f"{p}-b{counter}", text, BBox(x1, y, x1 + col_w, y + h)), role))
            counter += 1
            y += h + rng.uniform(0.01, 0.03)
    if rng.random() < 0.6:
        fn = Block(f"{p}-fn", "note " + _phrase(rng, 3, 8), BBox(margin, 0.9, 1 - margin, 0.95))
        complete.append((fn, "footnote"))

    ordered: list[Block] = []
    for blk, role in complete:
        if role in ("table", "footnote"):
            continue
        words = blk.text.split()
        if role == "para" and len(words) >= 4 and rng.random() < 0.3:
            cut = rng.randint(1, len(words) - 1)
            b = blk.bbox
            ymid = b.y1 + (b.y2 - b.y1) * cut / len(words)
            ordered.append(Block(f"{blk.id}a", " ".join(words[:cut]), BBox(b.x1, b.y1, b.x2, ymid), Source.ORDERED))
            ordered.append(Block(f"{blk.id}b", " ".join(words[cut:]), BBox(b.x1, ymid, b.x2, b.y2), Source.ORDERED))
        else:
            ordered.append(Block(blk.id, blk.text, blk.bbox, Source.ORDERED, blk.granularity))
    unordered = [Block(f"u-{b.id}", b.text, b.bbox, Source.UNORDERED, b.granularity) for b, _ in complete]
    rng.shuffle(unordered)
    return SyntheticPage(ordered, unordered, [b.id for b, _ in complete])


# ---------------------------------------------------------------------------
# PDF pages and generated text for post-annotation
# ---------------------------------------------------------------------------


def _qaligned(v: float) -> float:
    # bin centers survive quantize/dequantize unchanged
    return (int(v * 1000) + 0.5) / 1000


def random_pdf_page(rng: random.Random, page_id: str) -> PdfPage:
    """Paragraph blocks with 1-4 wrapped lines; some lines repeat across the page."""
    blocks: list[Block] = []
    y = 0.05
    repeated = _phrase(rng, 1, 3)
    k = 0
    while y < 0.85:
        n_lines = rng.randint(1, 4)
        lines: list[Line] = []
        x1, x2 = _qaligned(rng.uniform(0.05, 0.2)), _qaligned(rng.uniform(0.6, 0.95))
        for _ in range(n_lines):
            text = repeated if rng.random() < 0.15 else _phrase(rng, 1, 5)
            lines.append(Line(text, BBox(x1, _qaligned(y), x2, _qaligned(y + 0.025))))
            y += 0.03
        bbox = BBox(x1, lines[0].bbox.y1, x2, lines[-1].bbox.y2)
        blocks.append(Block(f"{page_id}-b{k}", " ".join(l.text for l in lines), bbox, Source.ORDERED, Granularity.PARAGRAPH, tuple(lines)))
        k += 1
        y += 0.02
    return PdfPage(page_id, f"{page_id}.png", 1000, 1400, tuple(blocks))


def random_generated_text(rng: random.Random, page: PdfPage) -> str:
    """Generated-style text: ``<ocr>`` spans copied from the page plus a few misses."""
    parts: list[str] = []
    lines = [(b, i) for b in page.blocks for i in range(len(b.lines))]
    for _ in range(rng.randint(1, 6)):
        parts.append(_phrase(rng, 0, 3) + " ")
        roll = rng.random()
        if roll < 0.55:
            b, i = rng.choice(lines)
            span = b.lines[i].text
        elif roll < 0.75:
            multi = [(b, i) for b, i in lines if i + 1 < len(b.lines)]
            if not multi:
                continue
            b, i = rng.choice(multi)
            first, second = b.lines[i].text.split(), b.lines[i + 1].text.split()
            span = " ".join(first[rng.randrange(len(first)) :] + second[: rng.randint(1, len(second))])
        elif roll < 0.9:
            repeats = [l.text for b in page.blocks for l in b.lines]
            span = max(set(repeats), key=repeats.count)
        else:
            span = "zzq" + "".join(rng.choice("xyzvw") for _ in range(5))
        parts.append(f"<ocr>{span}</ocr>")
    parts.append(" " + _phrase(rng, 0, 2))
    return "".join(parts)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

BENCH_MIX = {
    TaskKind.GA: 600,
    TaskKind.GR: 600,
    TaskKind.GO: 600,
    TaskKind.RT: 600,
    TaskKind.GRA: 400,
    TaskKind.GRR: 400,
    TaskKind.GRO: 400,
}

_ANSWER_CLASS = {
    TaskKind.GA: AnswerClass.GA,
    TaskKind.GR: AnswerClass.GR,
    TaskKind.GO: AnswerClass.GO,
    TaskKind.RT: AnswerClass.PA,
    TaskKind.GRA: AnswerClass.GA,
    TaskKind.GRR: AnswerClass.GR,
    TaskKind.GRO: AnswerClass.GO,
}

_DOC_TYPES = (DocType.POSTER, DocType.CHART, DocType.PDF)


def random_qbox(rng: random.Random, min_size: int = 5) -> QuantBox:
    x1, y1 = rng.randint(0, 999 - min_size), rng.randint(0, 999 - min_size)
    return QuantBox(x1, y1, rng.randint(x1 + min_size, min(999, x1 + 300)), rng.randint(y1 + min_size, min(999, y1 + 120)))


def _grounded(rng: random.Random) -> list:
    return [Grounded(_phrase(rng, 1, 3), random_qbox(rng))]


def bench_sample(rng: random.Random, sample_id: str, task: TaskKind, doc_type: DocType) -> Sample:
    cls = _ANSWER_CLASS[task]
    if task in (TaskKind.GA, TaskKind.GR, TaskKind.GO):
        question = [Plain(f"What is the {_phrase(rng, 1, 2)} shown?")]
    else:
        question = [Plain("What does the region "), Region(random_qbox(rng)), Plain(" say?")]
    if cls is AnswerClass.GA:
        answer = _grounded(rng)
        if rng.random() < 0.3:
            answer += [Plain(" and ")] + _grounded(rng)
    elif cls is AnswerClass.GR:
        answer = [Plain("The document shows ")] + _grounded(rng) + [Plain(" near ")] + _grounded(rng)
        answer += [Plain(". Answer: ")] + _grounded(rng)
    elif cls is AnswerClass.GO:
        answer = [Plain(_phrase(rng, 3, 8) + " ")]
        for _ in range(rng.randint(1, 4)):
            answer += _grounded(rng) + [Plain(" " + _phrase(rng, 2, 6) + " ")]
    else:
        answer = [Plain(_phrase(rng, 1, 3))]
    q, a = coalesce(question), coalesce(answer)
    assert classify_task(q, cls) is task
    return Sample(sample_id, doc_type, q, a, cls, task, page_id=None)


def make_bench(seed: int = 0, mix: dict[TaskKind, int] | None = None) -> list[Sample]:
    """Ground-truth bench with the given per-task counts; doc types cycle."""
    rng = random.Random(seed)
    out: list[Sample] = []
    for task, count in (mix or BENCH_MIX).items():
        for i in range(count):
            out.append(bench_sample(rng, f"{task.value}-{i:04d}", task, _DOC_TYPES[i % 3]))
    return out


def jitter_box(rng: random.Random, q: QuantBox, frac: float) -> QuantBox:
    """Shift ``q`` by up to ``frac`` of its size on each axis, kept on the grid."""
    b = dequantize(q)
    dx = rng.uniform(-frac, frac) * b.width
    dy = rng.uniform(-frac, frac) * b.height
    x1 = min(max(b.x1 + dx, 0.0), 1.0 - b.width)
    y1 = min(max(b.y1 + dy, 0.0), 1.0 - b.height)
    return quantize(BBox(x1, y1, min(1.0, x1 + b.width), min(1.0, y1 + b.height)))
