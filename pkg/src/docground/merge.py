"""Fuse an ordered-but-incomplete block list with a complete-but-unordered one.

The ordered list comes from a layout-aware extractor that misses content
(tables, footnotes) and sometimes truncates blocks; the unordered list comes
from a raw text extractor that sees everything but knows nothing about
reading order. :func:`merge` keeps the ordered skeleton, swaps truncated runs
for their complete counterparts, and slots every remaining block in by
position.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

from .geometry import BBox, iou, union_box
from .textnorm import normalize_text, text_similarity


class Source(str, enum.Enum):
    ORDERED = "ordered"
    UNORDERED = "unordered"


class Granularity(str, enum.Enum):
    WORD = "word"
    PHRASE = "phrase"
    LINE = "line"
    PARAGRAPH = "paragraph"


@dataclass(frozen=True)
class Line:
    text: str
    bbox: BBox


@dataclass(frozen=True)
class Block:
    id: str
    text: str
    bbox: BBox
    source: Source = Source.UNORDERED
    granularity: Granularity = Granularity.PARAGRAPH
    lines: tuple[Line, ...] = ()  # optional line split, used by the page index

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"block {self.id}: empty text")
        if not isinstance(self.lines, tuple):
            object.__setattr__(self, "lines", tuple(self.lines))


@dataclass(frozen=True)
class OrderedArea:
    start: int  # first member index in the ordered list
    stop: int  # one past the last member
    region: BBox

    @property
    def members(self) -> range:
        return range(self.start, self.stop)


@dataclass(frozen=True)
class MergeConfig:
    dup_iou: float = 0.5
    dup_text_sim: float = 0.8
    trunc_iou: float = 0.5
    eps: float = 0.01
    col_overlap: float = 0.5

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"MergeConfig.{f.name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MergeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown merge config keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


# ---------------------------------------------------------------------------
# step 1: duplicates and truncated runs
# ---------------------------------------------------------------------------


def _is_duplicate(o: Block, u: Block, cfg: MergeConfig) -> bool:
    return iou(o.bbox, u.bbox) >= cfg.dup_iou and text_similarity(o.text, u.text) >= cfg.dup_text_sim


def _best_truncated_run(
    ordered: list[Block], taken: list[bool], u: Block, cfg: MergeConfig
) -> tuple[int, int] | None:
    target = normalize_text(u.text)
    if not target:
        return None
    is_part = [
        not taken[i] and bool(n) and n in target
        for i, n in enumerate(normalize_text(o.text) for o in ordered)
    ]
    best_key: tuple[float, int, int] | None = None  # (iou, run length, -start)
    best_run: tuple[int, int] | None = None
    i = 0
    while i < len(ordered):
        if not is_part[i]:
            i += 1
            continue
        j = i
        while j < len(ordered) and is_part[j]:
            j += 1
        # every contiguous sub-run of the maximal run [i, j)
        for a in range(i, j):
            for b in range(a + 1, j + 1):
                if b - a == 1 and len(normalize_text(ordered[a].text)) >= len(target):
                    continue  # a lone block as complete as u is a duplicate, not a truncation
                score = iou(union_box(o.bbox for o in ordered[a:b]), u.bbox)
                key = (score, b - a, -a)
                if score >= cfg.trunc_iou and (best_key is None or key > best_key):
                    best_key, best_run = key, (a, b)
        i = j
    return best_run


def dedupe_and_replace(
    ordered: list[Block], unordered: list[Block], cfg: MergeConfig | None = None
) -> tuple[list[Block], list[Block]]:
    """Replace truncated ordered runs and drop unordered duplicates.

    Replacement is tried first: the second half of a split paragraph can
    look like a duplicate of the complete paragraph, which must win.
    Returns ``(ordered', preserved)`` where ``preserved`` holds unordered
    blocks that were neither duplicates nor used as replacements.
    """
    cfg = cfg or MergeConfig()
    ordered = list(ordered)
    taken = [False] * len(ordered)
    replacement: dict[int, tuple[int, Block]] = {}  # run start -> (run stop, block)
    preserved: list[Block] = []
    for u in unordered:
        run = _best_truncated_run(ordered, taken, u, cfg)
        if run is not None:
            a, b = run
            for i in range(a, b):
                taken[i] = True
            replacement[a] = (b, u)
        elif not any(_is_duplicate(o, u, cfg) for o in ordered):
            preserved.append(u)

    out: list[Block] = []
    i = 0
    while i < len(ordered):
        if i in replacement:
            stop, u = replacement[i]
            out.append(u)
            i = stop
        else:
            out.append(ordered[i])
            i += 1
    return out, preserved


# ---------------------------------------------------------------------------
# step 2: ordered areas
# ---------------------------------------------------------------------------


def _flows(a: Block, b: Block, eps: float) -> bool:
    """``b`` sits to the lower right of ``a`` (top-left corners, with tolerance)."""
    return b.bbox.x1 >= a.bbox.x1 - eps and b.bbox.y1 >= a.bbox.y1 - eps


def build_ordered_areas(ordered: list[Block], cfg: MergeConfig | None = None) -> list[OrderedArea]:
    cfg = cfg or MergeConfig()
    areas: list[OrderedArea] = []
    start = 0
    for i in range(1, len(ordered) + 1):
        if i < len(ordered) and _flows(ordered[i - 1], ordered[i], cfg.eps):
            continue
        if i - start >= 2:
            areas.append(OrderedArea(start, i, union_box(b.bbox for b in ordered[start:i])))
        start = i
    return areas


# ---------------------------------------------------------------------------
# step 3: column-major order
# ---------------------------------------------------------------------------


def _same_column(a: BBox, b: BBox, col_overlap: float) -> bool:
    overlap = min(a.x2, b.x2) - max(a.x1, b.x1)
    narrower = min(a.width, b.width)
    if narrower <= 0.0:
        return overlap >= 0.0
    return overlap >= col_overlap * narrower


def column_major_sort(blocks: list[Block], cfg: MergeConfig | None = None) -> list[Block]:
    """Columns left to right, each read top to bottom.

    Columns are the connected components of "horizontally overlaps by at
    least ``col_overlap`` of the narrower block". Sorting is stable, so
    blocks with identical keys keep their input order.
    """
    cfg = cfg or MergeConfig()
    n = len(blocks)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _same_column(blocks[i].bbox, blocks[j].bbox, cfg.col_overlap):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    columns: dict[int, list[int]] = {}
    for i in range(n):
        columns.setdefault(find(i), []).append(i)
    col_key = {
        root: (min(blocks[i].bbox.x1 for i in members), min(blocks[i].bbox.y1 for i in members), root)
        for root, members in columns.items()
    }
    order = sorted(
        range(n),
        key=lambda i: (col_key[find(i)], blocks[i].bbox.y1, blocks[i].bbox.x1),
    )
    return [blocks[i] for i in order]


def column_major_precedes(a: Block, b: Block, cfg: MergeConfig | None = None) -> bool:
    """Pairwise form of the column-major order: does ``a`` read before ``b``?"""
    cfg = cfg or MergeConfig()
    if _same_column(a.bbox, b.bbox, cfg.col_overlap):
        return (a.bbox.y1, a.bbox.x1) < (b.bbox.y1, b.bbox.x1)
    return (a.bbox.x1, a.bbox.y1) < (b.bbox.x1, b.bbox.y1)


# ---------------------------------------------------------------------------
# step 4: full merge
# ---------------------------------------------------------------------------


def _area_of(block: Block, areas: list[OrderedArea]) -> int | None:
    cx, cy = block.bbox.center
    hits = [k for k, a in enumerate(areas) if a.region.contains_point(cx, cy)]
    if not hits:
        return None
    return min(hits, key=lambda k: (areas[k].region.area, k))


def _resort_areas(blocks: list[Block], cfg: MergeConfig) -> list[Block]:
    out: list[Block] = []
    pos = 0
    for area in build_ordered_areas(blocks, cfg):
        out.extend(blocks[pos:area.start])
        out.extend(column_major_sort(blocks[area.start:area.stop], cfg))
        pos = area.stop
    out.extend(blocks[pos:])
    return out


def _settle(blocks: list[Block], cfg: MergeConfig, max_rounds: int = 16) -> list[Block]:
    # re-sorting can create or split areas; repeat until the order is a fixpoint
    for _ in range(max_rounds):
        nxt = _resort_areas(blocks, cfg)
        if [b.id for b in nxt] == [b.id for b in blocks]:
            return blocks
        blocks = nxt
    return blocks


def merge(ordered: list[Block], unordered: list[Block], cfg: MergeConfig | None = None) -> list[Block]:
    """Comprehensive, layout-aware reading order for one page."""
    cfg = cfg or MergeConfig()
    if not ordered:
        return _settle(column_major_sort(list(unordered), cfg), cfg)

    base, preserved = dedupe_and_replace(ordered, unordered, cfg)
    areas = build_ordered_areas(base, cfg)

    in_area: dict[int, list[Block]] = {}
    outside: list[Block] = []
    for blk in preserved:
        k = _area_of(blk, areas)
        if k is None:
            outside.append(blk)
        else:
            in_area.setdefault(k, []).append(blk)

    seq: list[Block] = []
    pos = 0
    for k, area in enumerate(areas):
        seq.extend(base[pos:area.start])
        seq.extend(column_major_sort(base[area.start:area.stop] + in_area.get(k, []), cfg))
        pos = area.stop
    seq.extend(base[pos:])

    # out-of-area blocks hang off their nearest ordered block
    before: dict[int, list[Block]] = {}
    after: dict[int, list[Block]] = {}
    for blk in outside:
        cx, cy = blk.bbox.center
        anchor = min(
            range(len(base)),
            key=lambda i: (math.hypot(base[i].bbox.center[0] - cx, base[i].bbox.center[1] - cy), i),
        )
        a = base[anchor]
        side = before if column_major_precedes(blk, a, cfg) else after
        side.setdefault(id(a), []).append(blk)

    out: list[Block] = []
    for blk in seq:
        out.extend(column_major_sort(before.get(id(blk), []), cfg))
        out.append(blk)
        out.extend(column_major_sort(after.get(id(blk), []), cfg))
    return _settle(out, cfg)
