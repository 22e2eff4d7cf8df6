"""Task grid: question form (grounded / plain) x answer form (GA, GR, GO, PA)."""

from __future__ import annotations

import enum

from .markup import GroundedText


class DocType(str, enum.Enum):
    POSTER = "poster"
    CHART = "chart"
    PDF = "pdf"


class InputClass(str, enum.Enum):
    GQ = "GQ"  # question carries at least one box
    PQ = "PQ"


class AnswerClass(str, enum.Enum):
    GA = "GA"  # short grounded answer
    GR = "GR"  # grounded reasoning then "Answer: ..."
    GO = "GO"  # open-ended grounded answer
    PA = "PA"  # plain answer


class TaskKind(str, enum.Enum):
    GA = "Ga"
    GR = "Gr"
    GO = "Go"
    RT = "Rt"
    GRA = "GRa"
    GRR = "GRr"
    GRO = "GRo"
    PLAIN_QA = "PlainQA"


TASK_GRID: dict[tuple[InputClass, AnswerClass], TaskKind] = {
    (InputClass.PQ, AnswerClass.GA): TaskKind.GA,
    (InputClass.PQ, AnswerClass.GR): TaskKind.GR,
    (InputClass.PQ, AnswerClass.GO): TaskKind.GO,
    (InputClass.PQ, AnswerClass.PA): TaskKind.PLAIN_QA,
    (InputClass.GQ, AnswerClass.GA): TaskKind.GRA,
    (InputClass.GQ, AnswerClass.GR): TaskKind.GRR,
    (InputClass.GQ, AnswerClass.GO): TaskKind.GRO,
    (InputClass.GQ, AnswerClass.PA): TaskKind.RT,
}

BENCH_TASKS = (
    TaskKind.GA,
    TaskKind.GR,
    TaskKind.GO,
    TaskKind.RT,
    TaskKind.GRA,
    TaskKind.GRR,
    TaskKind.GRO,
)
ACC_TASKS = frozenset({TaskKind.GA, TaskKind.GR, TaskKind.RT, TaskKind.GRA, TaskKind.GRR})
BLEU_TASKS = frozenset({TaskKind.GO, TaskKind.GRO})
GROUNDED_OUTPUT_TASKS = frozenset(
    {TaskKind.GA, TaskKind.GR, TaskKind.GO, TaskKind.GRA, TaskKind.GRR, TaskKind.GRO}
)

TASK_FAMILY = {
    TaskKind.GA: "grounding",
    TaskKind.GR: "grounding",
    TaskKind.GO: "grounding",
    TaskKind.RT: "referring",
    TaskKind.GRA: "grounding+referring",
    TaskKind.GRR: "grounding+referring",
    TaskKind.GRO: "grounding+referring",
    TaskKind.PLAIN_QA: "plain",
}


def input_class(question: GroundedText) -> InputClass:
    return InputClass.GQ if question.has_boxes else InputClass.PQ


def classify_task(question: GroundedText, answer_class: AnswerClass | str) -> TaskKind:
    return TASK_GRID[(input_class(question), AnswerClass(answer_class))]
