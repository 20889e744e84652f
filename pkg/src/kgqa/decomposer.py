"""Question decomposition: a pattern-based reference decomposer and an adapter for external models.

The reference decomposer covers a controlled question grammar::

    what is the <attr> of (the <rel> of)* <entity>?
    how many <rel> <filler>* <entity>?

plus relations that trail the entity ("... where <entity> was born").
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping

from .adapter import AdapterError, AdapterProtocolError, AdapterSpec
from .mrdcpq import (Aggregate, Anchor, Decomposition, FormatError, Hop, parse_decomposition,
                     validate)
from .store import Iri, KnowledgeGraph

DEFAULT_AGGREGATE_CUES = frozenset({"how many", "number of", "count of"})

DEFAULT_FILLERS = frozenset("""
    what which who whom whose where when is are was were be been the a an of in on at to by for
    from with does do did has have had 's that there it its located play plays played roles role
    give tell me please
""".split())

# surface phrase -> canonical relation phrase; kept only when the canonical
# phrase is in the lexicon
DEFAULT_ALIASES = {
    "born": "place of birth",
    "birthplace": "place of birth",
    "died": "place of death",
    "headquarters": "headquarter",
    "lives": "residence",
}

_PUNCT = "?؟!.,،;:\"'’“”«»()[]"
_POSSESSIVE = re.compile(r"^(.*?)(['’]s)$", re.IGNORECASE)


def fold(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def tokenize(text: str) -> list[str]:
    """Whitespace tokens with edge punctuation removed and possessives split off."""
    out = []
    for raw in unicodedata.normalize("NFC", text).split():
        tok = raw.strip(_PUNCT)
        if not tok:
            continue
        m = _POSSESSIVE.match(tok)
        if m and m.group(1):
            out.extend([m.group(1), "'s"])
        else:
            out.append(tok)
    return out


def _key(text: str) -> tuple:
    return tuple(t.casefold() for t in tokenize(text))


@dataclass
class DecomposerConfig:
    gazetteer: Mapping[str, Iri]
    relation_lexicon: frozenset
    aggregate_cues: frozenset = DEFAULT_AGGREGATE_CUES
    relation_aliases: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_ALIASES))
    fillers: frozenset = DEFAULT_FILLERS

    def __post_init__(self):
        self.gazetteer = {fold(k): v for k, v in self.gazetteer.items()}
        self.relation_lexicon = frozenset(fold(r) for r in self.relation_lexicon)
        self.aggregate_cues = frozenset(fold(c) for c in self.aggregate_cues)
        self.relation_aliases = {fold(k): fold(v) for k, v in self.relation_aliases.items()
                                 if fold(v) in self.relation_lexicon}
        self.fillers = frozenset(fold(f) for f in self.fillers)

    @classmethod
    def from_graph(cls, kg: KnowledgeGraph, **kwargs) -> "DecomposerConfig":
        """Gazetteer from entity labels, lexicon from predicate labels.

        A label shared by several entities maps to the lexicographically
        smallest IRI.
        """
        gazetteer = {}
        for e in reversed(kg.labeled_entities()):
            for label in kg.labels_of(e):
                gazetteer[fold(label)] = e
        lexicon = {label for p in kg.labeled_predicates() for label in kg.labels_of(p)}
        return cls(gazetteer, frozenset(lexicon), **kwargs)

    def phrase_table(self) -> dict[tuple, str]:
        table = {_key(alias): canon for alias, canon in self.relation_aliases.items()}
        table.update({_key(r): r for r in self.relation_lexicon})
        table.pop((), None)
        return table


class DecompositionError(ValueError):
    pass


class NoAnchorFound(DecompositionError):
    def __init__(self, question: str):
        super().__init__(f"no known entity occurs in {question!r}")
        self.question = question


class UnsegmentableRemainder(DecompositionError):
    def __init__(self, text: str, reason: str = "no relation phrase matches"):
        super().__init__(f"{reason}: {text!r}")
        self.text = text


def _occurrences(keys, folded, free):
    """(start, length, key) for every key occurring over free tokens."""
    found = []
    for key in keys:
        n = len(key)
        for start in range(len(folded) - n + 1):
            if tuple(folded[start:start + n]) == key and all(free[start:start + n]):
                found.append((start, n, key))
    return found


def _pick(found):
    # longest, then earliest, then lexicographic
    return min(found, key=lambda f: (-f[1], f[0], f[2]))


def decompose(question: str, cfg: DecomposerConfig) -> Decomposition:
    if not question or not question.strip():
        raise ValueError("question is empty")
    tokens = tokenize(question)
    folded = [t.casefold() for t in tokens]
    free = [True] * len(tokens)

    gaz_keys = {_key(k) for k in cfg.gazetteer} - {()}
    found = _occurrences(gaz_keys, folded, free)
    if not found:
        raise NoAnchorFound(question)
    a_start, a_len, _ = _pick(found)
    anchor_text = " ".join(tokens[a_start:a_start + a_len])
    for i in range(a_start, a_start + a_len):
        free[i] = False

    counting = False
    first = next((i for i, t in enumerate(folded) if free[i] and t not in cfg.fillers), None)
    if first is not None:
        for cue in sorted(cfg.aggregate_cues, key=lambda c: (-len(_key(c)), c)):
            key = _key(cue)
            if tuple(folded[first:first + len(key)]) == key and all(free[first:first + len(key)]):
                counting = True
                for i in range(first, first + len(key)):
                    free[i] = False
                break

    table = cfg.phrase_table()
    relations = []  # (start, canonical phrase)
    while True:
        found = _occurrences(table.keys(), folded, free)
        if not found:
            break
        start, n, key = _pick(found)
        relations.append((start, table[key]))
        for i in range(start, start + n):
            free[i] = False

    leftover = [tokens[i] for i in range(len(tokens)) if free[i] and folded[i] not in cfg.fillers]
    if leftover:
        raise UnsegmentableRemainder(" ".join(leftover))
    if not relations:
        raise UnsegmentableRemainder(question, "no relation phrase found")

    after = sorted((r for r in relations if r[0] > a_start), key=lambda r: r[0])
    before = sorted((r for r in relations if r[0] < a_start), key=lambda r: -r[0])
    steps = [Anchor(1, anchor_text)]
    for phrase in [p for _, p in after + before]:
        steps.append(Hop(len(steps) + 1, phrase, len(steps)))
    if counting:
        steps.append(Aggregate(len(steps) + 1, len(steps)))
    d = Decomposition(steps)
    problems = validate(d)
    if problems:  # unreachable for well-formed configs
        raise DecompositionError("; ".join(problems))
    return d


def decompose_external(question: str, adapter: AdapterSpec) -> Decomposition:
    """Ask an external model for the steps; response is ``{"steps": [...]}``."""
    reply = adapter.call("decompose", {"question": question})
    steps = reply.get("steps")
    if not isinstance(steps, list) or not steps or not all(isinstance(s, str) for s in steps):
        raise AdapterProtocolError("response needs a non-empty 'steps' list of strings")
    try:
        d = parse_decomposition(" ; ".join(steps))
    except FormatError as exc:
        raise AdapterProtocolError(f"adapter steps do not parse: {exc}") from None
    problems = validate(d)
    if problems:
        raise AdapterProtocolError("adapter steps are invalid: " + "; ".join(problems))
    return d


class PatternDecomposer:
    def __init__(self, cfg: DecomposerConfig):
        self.cfg = cfg

    def __call__(self, question: str) -> Decomposition:
        return decompose(question, self.cfg)


class ExternalDecomposer:
    def __init__(self, adapter: AdapterSpec):
        self.adapter = adapter

    def __call__(self, question: str) -> Decomposition:
        return decompose_external(question, self.adapter)


__all__ = [
    "AdapterError",
    "DecomposerConfig",
    "DecompositionError",
    "ExternalDecomposer",
    "NoAnchorFound",
    "PatternDecomposer",
    "UnsegmentableRemainder",
    "decompose",
    "decompose_external",
]
