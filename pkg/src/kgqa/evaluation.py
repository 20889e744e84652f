"""Decomposition accuracy, NER accuracy and answer precision/recall/F1/accuracy.

All scores are percentages.  F1 is the harmonic mean of the aggregate
(macro-averaged) precision and recall, not an average of per-record F1.
"""

from __future__ import annotations

import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .executor import Pipeline, PipelineError
from .mrdcpq import Decomposition, DatasetRecord, serialize


class LengthMismatch(ValueError):
    pass


class EmptySplit(ValueError):
    pass


def _check_lengths(pred, gold):
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predictions for {len(gold)} gold items")


def _pct(numerator: float, denominator: int) -> float:
    return 100.0 * numerator / denominator if denominator else 0.0


def normalize_decomposition(d) -> str:
    text = d if isinstance(d, str) else serialize(d)
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def tda(pred: Sequence[Optional[Decomposition]], gold: Sequence[Decomposition]) -> float:
    """Share of exact matches after NFC, case-folding and whitespace collapse.

    ``None`` predictions (decomposer failures) count as misses.
    """
    _check_lengths(pred, gold)
    hits = sum(1 for p, g in zip(pred, gold)
               if p is not None and normalize_decomposition(p) == normalize_decomposition(g))
    return _pct(hits, len(gold))


def ner_accuracy(pred: Sequence[set], gold: Sequence[set]) -> float:
    _check_lengths(pred, gold)
    return _pct(sum(1 for p, g in zip(pred, gold) if set(p) == set(g)), len(gold))


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def record_scores(pred: set, gold: set) -> tuple[float, float]:
    """Per-record (precision, recall) as fractions, with the empty-set conventions."""
    overlap = len(pred & gold)
    if not pred:
        precision = 1.0 if not gold else 0.0
    else:
        precision = overlap / len(pred)
    if not gold:
        recall = 1.0 if not pred else 0.0
    else:
        recall = overlap / len(gold)
    return precision, recall


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tda: Optional[float] = None
    ner_accuracy: Optional[float] = None
    per_question: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def answer_metrics(pred: Sequence[set], gold: Sequence[set]) -> Metrics:
    _check_lengths(pred, gold)
    per_question = []
    for p, g in zip(pred, gold):
        precision, recall = record_scores(set(p), set(g))
        per_question.append({"precision": 100.0 * precision, "recall": 100.0 * recall,
                             "exact": set(p) == set(g)})
    n = len(per_question)
    precision = sum(r["precision"] for r in per_question) / n if n else 0.0
    recall = sum(r["recall"] for r in per_question) / n if n else 0.0
    accuracy = _pct(sum(r["exact"] for r in per_question), n)
    return Metrics(precision, recall, harmonic_f1(precision, recall), accuracy,
                   per_question=per_question)


def format_table(m: Metrics, label: str = "kgqa") -> str:
    """Plain-text table with Precision / Recall / F1 Score / Accuracy columns."""
    header = f"{'':<12}{'Precision':>12}{'Recall':>12}{'F1 Score':>12}{'Accuracy':>12}"
    row = (f"{label:<12}{m.precision:>11.2f}%{m.recall:>11.2f}%{m.f1:>11.2f}%"
           f"{m.accuracy:>11.2f}%")
    lines = [header, row]
    if m.tda is not None:
        lines.append(f"TDA: {m.tda:.2f}%")
    if m.ner_accuracy is not None:
        lines.append(f"NER accuracy: {m.ner_accuracy:.2f}%")
    return "\n".join(lines)


def _normalize_answers(values) -> set[str]:
    return {" ".join(unicodedata.normalize("NFC", v).split()) for v in values}


def _run_one(pipeline: Pipeline, record: DatasetRecord) -> dict:
    try:
        report = pipeline.answer(record.question)
        error = None
    except PipelineError as exc:
        report = exc.report
        error = exc.to_dict()
    return {
        "id": record.id,
        "question": record.question,
        "decomposition": report.decomposition,
        "entities": {lr.chosen for lr in report.links},
        "answers": _normalize_answers(report.answers),
        "error": error,
        "report": report.to_dict(),
    }


def run_eval(dataset: Sequence[DatasetRecord], pipeline: Pipeline, split: Optional[str] = "test",
             jobs: int = 1) -> Metrics:
    records = [r for r in dataset if split is None or r.split == split]
    if not records:
        raise EmptySplit(f"no records in split {split!r}")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda r: _run_one(pipeline, r), records))
    else:
        outcomes = [_run_one(pipeline, r) for r in records]

    metrics = answer_metrics([o["answers"] for o in outcomes], [r.gold_answers for r in records])
    metrics.tda = tda([o["decomposition"] for o in outcomes], [r.gold_decomposition for r in records])
    with_entities = [(o, r) for o, r in zip(outcomes, records) if r.gold_entities]
    if with_entities:
        metrics.ner_accuracy = ner_accuracy([o["entities"] for o, _ in with_entities],
                                            [r.gold_entity_iris for _, r in with_entities])
    for row, outcome, record in zip(metrics.per_question, outcomes, records):
        row.update({
            "id": record.id,
            "question": record.question,
            "predicted": sorted(outcome["answers"]),
            "gold": sorted(record.gold_answers),
            "error": outcome["error"],
        })
    return metrics
