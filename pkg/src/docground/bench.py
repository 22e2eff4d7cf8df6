"""Scoring predictions on the grounding/referring bench.

Short answers are scored by normalized exact match, long answers by BLEU-4,
and every task whose answer carries grounded spans additionally by F1_all:
a predicted span is a hit when its text equals a ground-truth span's text and
the two boxes overlap by more than the IoU threshold, with each span used at
most once (maximum bipartite matching). Counts are pooled over all samples
of a group before precision and recall are taken.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .dataset import Sample
from .geometry import BBox, iou
from .markup import MarkupError, extract_spans, parse, serialize, strip_grounding
from .taxonomy import ACC_TASKS, BENCH_TASKS, BLEU_TASKS, GROUNDED_OUTPUT_TASKS, AnswerClass, TaskKind
from .textnorm import NORMALIZATION_VERSION, normalize_text

ANSWER_MARKER = "Answer:"
DEFAULT_IOU = 0.5

Span = tuple[str, BBox]


# ---------------------------------------------------------------------------
# F1_all
# ---------------------------------------------------------------------------


def _max_matching(adj: list[list[int]], n_right: int) -> int:
    match_right = [-1] * n_right

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adj[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] == -1 or augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    return sum(augment(u, [False] * n_right) for u in range(len(adj)))


def match_spans(pred: Sequence[Span], gt: Sequence[Span], threshold: float = DEFAULT_IOU) -> int:
    """True positives: size of a maximum matching over admissible (pred, gt) pairs."""
    gt_norm = [normalize_text(t) for t, _ in gt]
    adj = []
    for text, pbox in pred:
        pn = normalize_text(text)
        adj.append([j for j, (_, gbox) in enumerate(gt) if gt_norm[j] == pn and iou(pbox, gbox) > threshold])
    return _max_matching(adj, len(gt))


@dataclass(frozen=True)
class PRF:
    tp: int
    n_pred: int
    n_gt: int

    @property
    def precision(self) -> float:
        return self.tp / self.n_pred if self.n_pred else 1.0

    @property
    def recall(self) -> float:
        return self.tp / self.n_gt if self.n_gt else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.n_pred + other.n_pred, self.n_gt + other.n_gt)


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"IoU threshold {threshold} outside (0, 1]")


def f1_all(
    pred: Sequence[Span], gt: Sequence[Span], threshold: float = DEFAULT_IOU
) -> tuple[float, float, float]:
    """(precision, recall, F1) of predicted grounded spans against ground truth.

    An empty side counts as fully precise (no predictions) or fully
    recalled (nothing to find).
    """
    _check_threshold(threshold)
    c = PRF(match_spans(pred, gt, threshold), len(pred), len(gt))
    return c.precision, c.recall, c.f1


# ---------------------------------------------------------------------------
# answers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtractedAnswer:
    answer: str
    reasoning: str | None
    no_marker: bool = False
    spans: tuple[Span, ...] = ()
    parsed: bool = True


def _visible(raw: str) -> tuple[str, tuple[Span, ...], bool]:
    try:
        doc = parse(raw, strict=False, allow_bare=True)
    except MarkupError:
        return "", (), False
    return strip_grounding(doc), tuple(extract_spans(doc)), True


def extract_answer(raw: str, answer_class: AnswerClass | str) -> ExtractedAnswer:
    """Split a model output into the scored answer and, for GR, the reasoning.

    Unparseable output yields an empty answer and no spans.
    """
    cls = AnswerClass(answer_class)
    text, spans, ok = _visible(raw)
    if not ok:
        return ExtractedAnswer("", None, cls is AnswerClass.GR, (), False)
    if cls is AnswerClass.GR:
        cut = text.rfind(ANSWER_MARKER)
        if cut < 0:
            return ExtractedAnswer(text.strip(), None, True, spans)
        return ExtractedAnswer(text[cut + len(ANSWER_MARKER) :].strip(), text[:cut], False, spans)
    return ExtractedAnswer(text.strip(), None, False, spans)


def exact_match(answer: str, gt_answer: str) -> int:
    return int(normalize_text(answer) == normalize_text(gt_answer))


# ---------------------------------------------------------------------------
# BLEU-4
# ---------------------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: str, references: Sequence[str]) -> float:
    """Sentence BLEU-4 over whitespace tokens.

    Orders with no clipped match use add-one smoothing ``(m + 1) / (t + 1)``;
    brevity is measured against the closest reference length (shorter wins
    ties).
    """
    if isinstance(references, str):
        raise TypeError("references must be a sequence of strings, not a string")
    if not references:
        raise ValueError("bleu4 needs at least one reference")
    cand = candidate.split()
    if not cand:
        return 0.0
    refs = [r.split() for r in references]
    log_sum = 0.0
    for n in range(1, 5):
        counts = _ngrams(cand, n)
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= _ngrams(r, n)
        matches = sum(min(c, max_ref[g]) for g, c in counts.items())
        total = sum(counts.values())
        p = matches / total if matches > 0 else (matches + 1) / (total + 1)
        log_sum += math.log(p)
    c = len(cand)
    r = min((abs(len(x) - c), len(x)) for x in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / 4)


# ---------------------------------------------------------------------------
# corpus evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    output: str


@dataclass
class ReportRow:
    task: str
    doc_type: str  # "all" for the pooled row
    n: int = 0
    correct: int = 0
    bleu_sum: float = 0.0
    counts: PRF = field(default_factory=lambda: PRF(0, 0, 0))
    no_marker: int = 0

    @property
    def acc(self) -> float | None:
        return self.correct / self.n if TaskKind(self.task) in ACC_TASKS and self.n else None

    @property
    def bleu(self) -> float | None:
        return self.bleu_sum / self.n if TaskKind(self.task) in BLEU_TASKS and self.n else None

    @property
    def grounded(self) -> bool:
        return TaskKind(self.task) in GROUNDED_OUTPUT_TASKS

    def to_dict(self) -> dict:
        acc, bleu = self.acc, self.bleu
        d = {"task": self.task, "doc_type": self.doc_type, "n": self.n}
        if acc is not None:
            d["acc"] = acc
            d["acc_pct"] = 100.0 * acc
        if bleu is not None:
            d["bleu4"] = bleu
            d["bleu4_x100"] = 100.0 * bleu
        if self.grounded:
            c = self.counts
            d.update(
                precision=c.precision,
                recall=c.recall,
                f1_all=c.f1,
                tp=c.tp,
                n_pred_spans=c.n_pred,
                n_gt_spans=c.n_gt,
            )
        if self.no_marker:
            d["no_marker"] = self.no_marker
        return d


@dataclass
class EvalReport:
    config: dict
    rows: list[ReportRow]
    unknown_ids: list[str] = field(default_factory=list)
    missing_predictions: int = 0
    unscored: int = 0  # ground-truth samples outside the seven bench tasks
    sweep: list[tuple[float, float]] | None = None

    def row(self, task: TaskKind | str, doc_type: str = "all") -> ReportRow:
        task = TaskKind(task).value
        for r in self.rows:
            if r.task == task and r.doc_type == doc_type:
                return r
        raise KeyError((task, doc_type))

    def to_dict(self) -> dict:
        d = {
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
            "unknown_ids": self.unknown_ids,
            "missing_predictions": self.missing_predictions,
            "unscored": self.unscored,
        }
        if self.sweep is not None:
            d["sweep"] = [{"iou": t, "f1_all": f} for t, f in self.sweep]
        return d


def _pred_map(preds: Mapping[str, str] | Iterable[PredictionRecord]) -> dict[str, str]:
    if isinstance(preds, Mapping):
        return dict(preds)
    out: dict[str, str] = {}
    for p in preds:
        out.setdefault(p.id, p.output)  # first prediction per id wins
    return out


def _gt_spans(s: Sample) -> list[Span]:
    return extract_spans(s.answer)


def evaluate(
    preds: Mapping[str, str] | Iterable[PredictionRecord],
    gts: Sequence[Sample],
    threshold: float = DEFAULT_IOU,
) -> EvalReport:
    """Per task x doc-type scores; missing predictions score as empty output."""
    _check_threshold(threshold)
    pred = _pred_map(preds)
    gt_ids = {s.id for s in gts}
    rows: dict[tuple[str, str], ReportRow] = {}
    missing = unscored = 0
    for s in gts:
        if s.task not in BENCH_TASKS:
            unscored += 1
            continue
        raw = pred.get(s.id)
        if raw is None:
            missing += 1
            raw = ""
        got = extract_answer(raw, s.answer_class)
        want = extract_answer(serialize(s.answer), s.answer_class)
        counts = PRF(0, 0, 0)
        if s.task in GROUNDED_OUTPUT_TASKS:
            gt_spans = _gt_spans(s)
            counts = PRF(match_spans(got.spans, gt_spans, threshold), len(got.spans), len(gt_spans))
        correct = exact_match(got.answer, want.answer) if s.task in ACC_TASKS else 0
        bleu = bleu4(got.answer, [want.answer]) if s.task in BLEU_TASKS else 0.0
        for doc in (s.doc_type.value, "all"):
            row = rows.setdefault((s.task.value, doc), ReportRow(s.task.value, doc))
            row.n += 1
            row.correct += correct
            row.bleu_sum += bleu
            row.counts = row.counts + counts
            row.no_marker += got.no_marker
    order = {t.value: i for i, t in enumerate(BENCH_TASKS)}
    doc_order = {"poster": 0, "chart": 1, "pdf": 2, "all": 3}
    ordered = sorted(rows.values(), key=lambda r: (order[r.task], doc_order.get(r.doc_type, 9)))
    return EvalReport(
        config={
            "iou_threshold": threshold,
            "iou_comparison": "greater-than",
            "normalization": NORMALIZATION_VERSION,
            "f1_averaging": "micro",
            "bleu": "mean sentence BLEU-4, add-one smoothing on zero-match orders",
        },
        rows=ordered,
        unknown_ids=sorted(set(pred) - gt_ids),
        missing_predictions=missing,
        unscored=unscored,
    )


def threshold_sweep(
    preds: Mapping[str, str] | Iterable[PredictionRecord],
    gts: Sequence[Sample],
    thresholds: Sequence[float],
    *,
    tasks: Iterable[TaskKind | str] | None = None,
) -> list[tuple[float, float]]:
    """Pooled F1_all over grounded-output tasks at each threshold.

    Raises:
        ValueError: thresholds not strictly increasing or outside (0, 1].
    """
    for t in thresholds:
        _check_threshold(t)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly increasing: {list(thresholds)}")
    wanted = GROUNDED_OUTPUT_TASKS if tasks is None else {TaskKind(t) for t in tasks} & GROUNDED_OUTPUT_TASKS
    pred = _pred_map(preds)
    pairs = []
    for s in gts:
        if s.task not in wanted:
            continue
        got = extract_answer(pred.get(s.id, ""), s.answer_class)
        pairs.append((got.spans, _gt_spans(s)))
    out = []
    for t in thresholds:
        total = PRF(0, 0, 0)
        for p, g in pairs:
            total = total + PRF(match_spans(p, g, t), len(p), len(g))
        out.append((t, total.f1))
    return out


# ---------------------------------------------------------------------------
# text table
# ---------------------------------------------------------------------------


def _fmt(v: float | None, scale: float = 1.0, digits: int = 1) -> str:
    return "-" if v is None else f"{v * scale:.{digits}f}"


def format_table(report: EvalReport | dict) -> str:
    """Aligned plain-text table, one line per task and doc type.

    Accepts a report or its ``to_dict()`` form, so saved JSON reports can be
    re-rendered.
    """
    d = report.to_dict() if isinstance(report, EvalReport) else report
    header = ("Task", "Doc", "N", "Acc", "BLEU-4", "P", "R", "F1_all")
    lines = [header]
    for r in d["rows"]:
        lines.append(
            (
                r["task"],
                r["doc_type"],
                str(r["n"]),
                _fmt(r.get("acc"), 100.0),
                _fmt(r.get("bleu4"), 100.0),
                _fmt(r.get("precision"), 1.0, 3),
                _fmt(r.get("recall"), 1.0, 3),
                _fmt(r.get("f1_all"), 1.0, 3),
            )
        )
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    text = [
        "  ".join(cell.ljust(w) if i < 2 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths)))
        for row in lines
    ]
    cfg = d["config"]
    text.insert(
        0,
        f"IoU > {cfg['iou_threshold']}  normalization {cfg['normalization']}  F1 averaging {cfg['f1_averaging']}",
    )
    if d.get("sweep"):
        text.append("")
        text.append("IoU sweep: " + "  ".join(f"{e['iou']:g}:{e['f1_all']:.3f}" for e in d["sweep"]))
    if d.get("unknown_ids"):
        text.append(f"unknown prediction ids: {len(d['unknown_ids'])}")
    if d.get("missing_predictions"):
        text.append(f"missing predictions: {d['missing_predictions']}")
    return "\n".join(text) + "\n"


__all__ = [
    "EvalReport",
    "ExtractedAnswer",
    "PRF",
    "PredictionRecord",
    "ReportRow",
    "bleu4",
    "evaluate",
    "exact_match",
    "extract_answer",
    "f1_all",
    "format_table",
    "match_spans",
    "threshold_sweep",
]
