"""Entity recognition over anchor steps and zero-shot linking.

Linking is two-stage: the top-k entities by normalized Levenshtein
similarity between mention and labels, then a rerank by cosine similarity
between the embedded question and each candidate's abstract.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from . import kernels
from .adapter import AdapterProtocolError, AdapterSpec
from .mrdcpq import Anchor, Decomposition
from .store import Iri, KnowledgeGraph

DEFAULT_K = 5
EMBED_DIM = 256


def fold(text: str) -> str:
    return unicodedata.normalize("NFC", text).casefold()


@dataclass(frozen=True)
class Mention:
    text: str
    step_index: int
    span: tuple


@dataclass(frozen=True)
class Candidate:
    entity: Iri
    string_score: float
    dense_score: Optional[float] = None


@dataclass(frozen=True)
class LinkResult:
    mention: Optional[Mention]
    ranked: tuple

    @property
    def chosen(self) -> Iri:
        return self.ranked[0].entity

    def to_dict(self) -> dict:
        return {
            "step": self.mention.step_index if self.mention else None,
            "mention": self.mention.text if self.mention else None,
            "iri": self.chosen.value,
            "candidates": [
                {"iri": c.entity.value, "string_score": round(c.string_score, 6),
                 "dense_score": None if c.dense_score is None else round(c.dense_score, 6)}
                for c in self.ranked
            ],
        }


class LinkingError(ValueError):
    pass


class NoCandidates(LinkingError):
    pass


class LinkingFailed(LinkingError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step


class DimensionMismatch(ValueError):
    pass


# --- recognition --------------------------------------------------------------

def _is_boundary(text: str, i: int) -> bool:
    return i <= 0 or i >= len(text) or not text[i].isalnum() or not text[i - 1].isalnum()


def _find_label(payload: str, labels) -> Optional[tuple]:
    """Longest label occurring on word boundaries; ties by position then text."""
    base = unicodedata.normalize("NFC", payload)
    folded = base.casefold()
    if len(folded) != len(base):
        folded = base.lower()
    best = None
    for label in labels:
        needle = fold(label)
        if not needle:
            continue
        start = folded.find(needle)
        while start >= 0:
            end = start + len(needle)
            if _is_boundary(folded, start) and _is_boundary(folded, end):
                key = (-len(needle), start, needle)
                if best is None or key < best[0]:
                    best = (key, start, end)
                break
            start = folded.find(needle, start + 1)
    if best is None:
        return None
    return best[1], best[2]


def recognize_entities(d: Decomposition, gazetteer) -> list[Mention]:
    """One mention per anchor step whose payload contains a gazetteer label."""
    labels = list(gazetteer)
    mentions = []
    for step in d.steps:
        if not isinstance(step, Anchor):
            continue
        payload = unicodedata.normalize("NFC", step.text)
        hit = _find_label(payload, labels)
        if hit is not None:
            start, end = hit
            mentions.append(Mention(payload[start:end], step.index, (start, end)))
    return mentions


def recognize_entities_external(d: Decomposition, adapter: AdapterSpec) -> list[Mention]:
    """External NER: ``{"text": payload}`` -> ``{"spans": [[start, end], ...]}``.

    Only the first span per anchor is kept.
    """
    mentions = []
    for step in d.steps:
        if not isinstance(step, Anchor):
            continue
        payload = unicodedata.normalize("NFC", step.text)
        reply = adapter.call("ner", {"text": payload})
        spans = reply.get("spans")
        if not isinstance(spans, list):
            raise AdapterProtocolError("response needs a 'spans' list")
        for span in spans[:1]:
            try:
                start, end = int(span[0]), int(span[1])
            except (TypeError, ValueError, IndexError):
                raise AdapterProtocolError(f"bad span {span!r}") from None
            if not 0 <= start < end <= len(payload):
                raise AdapterProtocolError(f"span {span!r} outside payload")
            mentions.append(Mention(payload[start:end], step.index, (start, end)))
    return mentions


# --- candidate generation -------------------------------------------------------

def string_similarity(a: str, b: str) -> float:
    return kernels.similarity(fold(a), fold(b))


def generate_candidates(m: Mention, kg: KnowledgeGraph, k: int = DEFAULT_K) -> list[Candidate]:
    if k < 1:
        raise ValueError("k must be at least 1")
    entities = kg.labeled_entities()
    if not entities:
        raise NoCandidates("the graph has no labeled entities")
    query = fold(m.text)
    owners, labels = [], []
    for e in entities:
        for label in kg.labels_of(e):
            owners.append(e)
            labels.append(fold(label))
    best: dict[Iri, float] = {}
    for e, score in zip(owners, kernels.similarity_many(query, labels)):
        if score > best.get(e, -1.0):
            best[e] = score
    ranked = sorted(best.items(), key=lambda item: (-item[1], item[0].value))
    return [Candidate(e, score) for e, score in ranked[:k]]


# --- embeddings -------------------------------------------------------------------

class TrigramEmbedder:
    """Hashed character-trigram counts (FNV-1a 64, bucket = hash mod dim), L2-normalized."""

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def __call__(self, text: str) -> tuple:
        counts = kernels.trigram_counts(fold(text), self.dim)
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0:
            return tuple(0.0 for _ in counts)
        return tuple(c / norm for c in counts)


class HttpEmbedder:
    """External embedder: ``{"text": ...}`` -> ``{"vector": [...]}``."""

    def __init__(self, adapter: AdapterSpec):
        self.adapter = adapter

    def __call__(self, text: str) -> tuple:
        reply = self.adapter.call("embed", {"text": text})
        vector = reply.get("vector")
        if not isinstance(vector, list) or not all(isinstance(x, (int, float)) for x in vector):
            raise AdapterProtocolError("response needs a numeric 'vector' list")
        return tuple(float(x) for x in vector)


_reference_embedder = TrigramEmbedder()


def embed(text: str, dim: int = EMBED_DIM) -> tuple:
    if dim == EMBED_DIM:
        return _reference_embedder(text)
    return TrigramEmbedder(dim)(text)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimensionMismatch(f"dimensions differ: {len(u)} vs {len(v)}")
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(x * x for x in v))
    if nu == 0 or nv == 0:
        return 0.0
    value = math.fsum(x * y for x, y in zip(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, value))


# --- reranking ------------------------------------------------------------------

def entity_description(kg: KnowledgeGraph, e: Iri) -> str:
    abstract = kg.abstract_of(e)
    if abstract is not None:
        return abstract
    labels = kg.labels_of(e)
    return min(labels) if labels else e.value


def rerank(question: str, candidates: Sequence[Candidate], kg: KnowledgeGraph,
           embedder=None, mention: Optional[Mention] = None) -> LinkResult:
    if not candidates:
        raise NoCandidates("nothing to rerank")
    embedder = embedder or _reference_embedder
    q = embedder(question)
    scored = [replace(c, dense_score=cosine(q, embedder(entity_description(kg, c.entity))))
              for c in candidates]
    scored.sort(key=lambda c: (-c.dense_score, -c.string_score, c.entity.value))
    return LinkResult(mention, tuple(scored))


@dataclass
class LinkerConfig:
    k: int = DEFAULT_K
    embedder: object = None
    ner_adapter: Optional[AdapterSpec] = None


def link(d: Decomposition, question: str, kg: KnowledgeGraph, gazetteer: Mapping,
         cfg: Optional[LinkerConfig] = None) -> list[LinkResult]:
    """Recognize and link every anchor step; raises LinkingFailed on the first miss."""
    cfg = cfg or LinkerConfig()
    if cfg.ner_adapter is not None:
        mentions = recognize_entities_external(d, cfg.ner_adapter)
    else:
        mentions = recognize_entities(d, gazetteer)
    by_step = {m.step_index: m for m in mentions}
    results = []
    for step in d.anchors:
        m = by_step.get(step.index)
        if m is None:
            raise LinkingFailed(step.index, f"no entity recognized in {step.text!r}")
        try:
            candidates = generate_candidates(m, kg, cfg.k)
        except NoCandidates as exc:
            raise LinkingFailed(step.index, str(exc)) from None
        results.append(rerank(question, candidates, kg, cfg.embedder, m))
    return results
