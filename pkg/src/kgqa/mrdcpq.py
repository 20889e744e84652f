"""Decomposed-question meaning representations: model, text format, dataset loader.

Canonical text form::

    #1 Tehran ; #2 city #1 ; #3 area code #2

Each step is ``#k payload`` with at most one trailing back-reference.  The
parser also accepts the right-to-left rendering (``city 1#``) and steps
without leading indexes (``Masir Eshgh; Actors 1#; Number 2#``).
"""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

from .store import Iri

AGGREGATE_KEYWORDS = {"count": "COUNT", "number": "COUNT"}
SPLITS = ("train", "dev", "test")

_INDEX_RE = re.compile(r"#(\d+)")
_REF_RE = re.compile(r"#(\d+)|(\d+)#")


def normalize_text(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass(frozen=True)
class Anchor:
    index: int
    text: str


@dataclass(frozen=True)
class Hop:
    index: int
    phrase: str
    ref: int


@dataclass(frozen=True)
class Aggregate:
    index: int
    ref: int
    fn: str = "COUNT"


DecompStep = Union[Anchor, Hop, Aggregate]


@dataclass(frozen=True)
class Decomposition:
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, index: int) -> DecompStep:
        """Step by its 1-based index."""
        return self.steps[index - 1]

    @property
    def anchors(self) -> list[Anchor]:
        return [s for s in self.steps if isinstance(s, Anchor)]

    def __str__(self):
        return serialize(self)


class FormatError(ValueError):
    def __init__(self, step: Optional[int], reason: str):
        where = f"step {step}: " if step is not None else ""
        super().__init__(where + reason)
        self.step = step
        self.reason = reason


def _parse_step(chunk: str, position: int):
    tokens = chunk.split()
    index = None
    if tokens and _INDEX_RE.fullmatch(tokens[0]):
        index = int(tokens[0][1:])
        tokens = tokens[1:]
    label = index if index is not None else position
    refs = [i for i, tok in enumerate(tokens) if _REF_RE.fullmatch(tok)]
    if len(refs) > 1:
        raise FormatError(label, "multiple references in one step")
    ref = None
    if refs:
        if refs[0] != len(tokens) - 1:
            raise FormatError(label, "reference must trail the payload")
        m = _REF_RE.fullmatch(tokens[-1])
        ref = int(m.group(1) or m.group(2))
        tokens = tokens[:-1]
    if not tokens:
        raise FormatError(label, "empty payload")
    return index, tokens, ref


def parse_decomposition(text: str) -> Decomposition:
    chunks = [part.strip() for part in normalize_text(text).split(";")]
    if chunks and chunks[-1] == "":
        chunks.pop()
    if not chunks:
        raise FormatError(None, "empty decomposition")
    parsed = []
    explicit = None
    for position, chunk in enumerate(chunks, 1):
        if not chunk:
            raise FormatError(position, "empty payload")
        index, tokens, ref = _parse_step(chunk, position)
        has_index = index is not None
        if explicit is None:
            explicit = has_index
        elif explicit != has_index:
            raise FormatError(position, "steps mix explicit and implicit indexes")
        parsed.append((index if has_index else position, tokens, ref))

    seen = set()
    for expected, (index, _, _) in enumerate(parsed, 1):
        if index in seen:
            raise FormatError(index, "duplicate index")
        seen.add(index)
        if index != expected:
            raise FormatError(index, f"gap in indexes: expected #{expected}")

    steps = []
    for index, tokens, ref in parsed:
        if ref is not None and ref >= index:
            raise FormatError(index, f"forward reference to #{ref}")
        if ref is not None and ref < 1:
            raise FormatError(index, f"invalid reference #{ref}")
        head = tokens[0].casefold()
        if ref is not None and head in AGGREGATE_KEYWORDS:
            if len(tokens) > 1:
                raise FormatError(index, "aggregate step takes only a reference")
            steps.append(Aggregate(index, ref, AGGREGATE_KEYWORDS[head]))
        elif ref is not None:
            steps.append(Hop(index, " ".join(tokens), ref))
        else:
            steps.append(Anchor(index, " ".join(tokens)))
    return Decomposition(steps)


def format_step(step: DecompStep) -> str:
    if isinstance(step, Anchor):
        return f"#{step.index} {normalize_text(step.text)}"
    if isinstance(step, Hop):
        return f"#{step.index} {normalize_text(step.phrase)} #{step.ref}"
    return f"#{step.index} {step.fn} #{step.ref}"


def serialize(d: Decomposition) -> str:
    return " ; ".join(format_step(s) for s in d.steps)


def validate(d: Decomposition) -> list[str]:
    """Every structural violation in ``d``; an empty list means valid."""
    problems = []
    steps = list(d.steps)
    if len(steps) < 2:
        problems.append("decomposition needs at least 2 steps")
    for expected, step in enumerate(steps, 1):
        if step.index != expected:
            problems.append(f"step {expected} has index {step.index}")
    if steps and not isinstance(steps[0], Anchor):
        problems.append("step 1 must be Anchor")
    referenced = set()
    for step in steps:
        if isinstance(step, Anchor):
            if not step.text.strip():
                problems.append(f"step {step.index} has empty text")
            continue
        if isinstance(step, Hop) and not step.phrase.strip():
            problems.append(f"step {step.index} has empty phrase")
        if isinstance(step, Aggregate) and step.fn != "COUNT":
            problems.append(f"step {step.index} uses unsupported aggregate {step.fn}")
        if not 1 <= step.ref < step.index:
            problems.append(f"step {step.index} references #{step.ref}, which is not an earlier step")
        referenced.add(step.ref)
    for step in steps[:-1]:
        if step.index not in referenced:
            problems.append(f"step {step.index} unused")
    return problems


# --- dataset ----------------------------------------------------------------

@dataclass
class DatasetRecord:
    id: str
    question: str
    gold_decomposition: Decomposition
    gold_entities: list = field(default_factory=list)
    gold_relations: list = field(default_factory=list)
    gold_answers: set = field(default_factory=set)
    split: str = "train"

    @property
    def gold_entity_iris(self) -> set[Iri]:
        return {iri for _, iri in self.gold_entities}


class RecordError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass
class Dataset:
    records: list
    errors: list

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def split_counts(self) -> dict[str, int]:
        counts = Counter(r.split for r in self.records)
        return {s: counts.get(s, 0) for s in SPLITS}

    def select(self, split: str) -> list[DatasetRecord]:
        return [r for r in self.records if r.split == split]


def _record_from_json(obj, line: int) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise RecordError(line, "record is not a JSON object")
    for key in ("id", "question", "decomposition", "split"):
        if not isinstance(obj.get(key), str) or not obj[key].strip():
            raise RecordError(line, f"missing or empty '{key}'")
    if obj["split"] not in SPLITS:
        raise RecordError(line, f"unknown split {obj['split']!r}")
    try:
        decomposition = parse_decomposition(obj["decomposition"])
    except FormatError as exc:
        raise RecordError(line, f"bad decomposition: {exc}") from None
    problems = validate(decomposition)
    if problems:
        raise RecordError(line, "invalid decomposition: " + "; ".join(problems))
    try:
        entities = [(e["mention"], Iri(e["iri"])) for e in obj.get("entities", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(line, f"bad entities: {exc}") from None
    relations = obj.get("relations", [])
    answers = obj.get("answers", [])
    if not all(isinstance(x, str) for x in relations) or not all(isinstance(x, str) for x in answers):
        raise RecordError(line, "relations and answers must be lists of strings")
    if obj["split"] == "test" and not answers:
        raise RecordError(line, "test records need at least one answer")
    return DatasetRecord(
        id=obj["id"],
        question=normalize_text(obj["question"]),
        gold_decomposition=decomposition,
        gold_entities=entities,
        gold_relations=list(relations),
        gold_answers={normalize_text(a) for a in answers},
        split=obj["split"],
    )


def load_dataset(path) -> Dataset:
    """Read a JSON Lines dataset; bad records are collected, not fatal."""
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(RecordError(line_no, f"invalid JSON: {exc.msg}"))
                continue
            try:
                records.append(_record_from_json(obj, line_no))
            except RecordError as exc:
                errors.append(exc)
    return Dataset(records, errors)


def record_to_json(r: DatasetRecord) -> str:
    return json.dumps({
        "id": r.id,
        "question": r.question,
        "decomposition": serialize(r.gold_decomposition),
        "entities": [{"mention": m, "iri": i.value} for m, i in r.gold_entities],
        "relations": r.gold_relations,
        "answers": sorted(r.gold_answers),
        "split": r.split,
    }, ensure_ascii=False)
