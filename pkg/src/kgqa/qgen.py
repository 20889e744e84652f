"""Compile a linked decomposition into SPARQL.

Two outputs are produced from the same decomposition: a step-wise plan whose
hop queries contain a SLOT filled at execution time, and one joined BGP
query.  Both must give the same answers; the joined form doubles as the
oracle for the chained executor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from . import kernels
from .adapter import AdapterProtocolError, AdapterSpec
from .linker import LinkResult, fold
from .mrdcpq import Aggregate, Anchor, Decomposition, Hop, serialize, validate
from .sparql import (SLOT, CountSpec, QuerySyntaxError, SelectQuery, TriplePattern,
                     UnsupportedFeature, Var, parse_select, serialize_query)
from .store import Iri, KnowledgeGraph

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class AnchorBind:
    index: int
    entity: Iri


@dataclass(frozen=True)
class HopQuery:
    index: int
    template: SelectQuery
    source: int
    out_var: Var

    def __post_init__(self):
        slots = [(i, j) for i, pat in enumerate(self.template.where)
                 for j, t in enumerate(pat) if t is SLOT]
        if len(slots) != 1 or slots[0][1] != 0:
            raise ValueError("hop template needs exactly one SLOT, in subject position")
        if self.template.is_count or list(self.template.projection) != [self.out_var]:
            raise ValueError("hop template must project exactly its output variable")


@dataclass(frozen=True)
class CountStep:
    index: int
    source: int


PlanStep = Union[AnchorBind, HopQuery, CountStep]


@dataclass(frozen=True)
class QueryPlan:
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def queries(self) -> list[str]:
        out = []
        for step in self.steps:
            if isinstance(step, HopQuery):
                out.append(serialize_query(step.template))
            elif isinstance(step, CountStep):
                out.append(f"COUNT #{step.source}")
        return out

    def to_dicts(self) -> list[dict]:
        rows = []
        for step in self.steps:
            if isinstance(step, AnchorBind):
                rows.append({"step": step.index, "kind": "anchor", "entity": step.entity.value})
            elif isinstance(step, HopQuery):
                rows.append({"step": step.index, "kind": "hop", "source": step.source,
                             "query": serialize_query(step.template)})
            else:
                rows.append({"step": step.index, "kind": "count", "source": step.source})
        return rows


class CompileError(ValueError):
    pass


class UnresolvedRelation(CompileError):
    def __init__(self, phrase: str, best_score: float):
        super().__init__(f"no predicate label matches {phrase!r} (best similarity {best_score:.3f})")
        self.phrase = phrase
        self.best_score = best_score


class UnsupportedShape(CompileError):
    pass


class MissingLink(CompileError):
    def __init__(self, step: int):
        super().__init__(f"anchor step {step} has no linked entity")
        self.step = step


def resolve_relation(phrase: str, kg: KnowledgeGraph, threshold: float = DEFAULT_THRESHOLD) -> Iri:
    """The predicate whose label is most similar to ``phrase``; ties by IRI."""
    best, best_score = None, 0.0
    query = fold(phrase)
    for p in kg.labeled_predicates():
        labels = [fold(label) for label in kg.labels_of(p)]
        score = max(kernels.similarity_many(query, labels))
        if best is None or score > best_score or (score == best_score and p.value < best.value):
            best, best_score = p, score
    if best is None or best_score < threshold:
        raise UnresolvedRelation(phrase, best_score)
    return best


def _check_shape(d: Decomposition):
    problems = validate(d)
    if problems:
        raise UnsupportedShape("invalid decomposition: " + "; ".join(problems))
    if len(d.anchors) != 1:
        raise UnsupportedShape(f"only single-anchor chains compile; found {len(d.anchors)} anchors")


def _links_by_step(d: Decomposition, links: Sequence[LinkResult]) -> dict[int, Iri]:
    table = {}
    for lr in links:
        if lr.mention is not None:
            table[lr.mention.step_index] = lr.chosen
    anchors = d.anchors
    # links without a mention are accepted positionally against the anchors
    loose = [lr for lr in links if lr.mention is None]
    for anchor, lr in zip([a for a in anchors if a.index not in table], loose):
        table[anchor.index] = lr.chosen
    return table


def out_var(index: int) -> Var:
    return Var(f"x{index}")


class RelationResolver:
    """Memoizes phrase -> predicate resolution for one graph and threshold."""

    def __init__(self, kg: KnowledgeGraph, threshold: float = DEFAULT_THRESHOLD):
        self.kg = kg
        self.threshold = threshold
        self._cache: dict[str, Iri] = {}

    def __call__(self, phrase: str) -> Iri:
        key = fold(phrase)
        if key not in self._cache:
            self._cache[key] = resolve_relation(phrase, self.kg, self.threshold)
        return self._cache[key]


def compile_chain(d: Decomposition, links: Sequence[LinkResult], kg: KnowledgeGraph,
                  threshold: float = DEFAULT_THRESHOLD, resolver=None) -> QueryPlan:
    _check_shape(d)
    resolve = resolver or RelationResolver(kg, threshold)
    linked = _links_by_step(d, links)
    steps = []
    for step in d.steps:
        if isinstance(step, Anchor):
            if step.index not in linked:
                raise MissingLink(step.index)
            steps.append(AnchorBind(step.index, linked[step.index]))
        elif isinstance(step, Hop):
            var = out_var(step.index)
            template = SelectQuery([var], [TriplePattern(SLOT, resolve(step.phrase), var)])
            steps.append(HopQuery(step.index, template, step.ref, var))
        else:
            steps.append(CountStep(step.index, step.ref))
    return QueryPlan(steps)


def compile_joined(d: Decomposition, links: Sequence[LinkResult], kg: KnowledgeGraph,
                   threshold: float = DEFAULT_THRESHOLD, resolver=None) -> SelectQuery:
    """One BGP for the whole chain; a terminal COUNT becomes COUNT(DISTINCT ...)."""
    _check_shape(d)
    resolve = resolver or RelationResolver(kg, threshold)
    linked = _links_by_step(d, links)
    anchor = d.anchors[0]
    if anchor.index not in linked:
        raise MissingLink(anchor.index)
    terms = {anchor.index: linked[anchor.index]}
    patterns = []
    count_of = None
    for step in d.steps[1:]:
        if count_of is not None:
            raise UnsupportedShape("COUNT is only supported as the final step of a joined query")
        if isinstance(step, Hop):
            var = out_var(step.index)
            patterns.append(TriplePattern(terms[step.ref], resolve(step.phrase), var))
            terms[step.index] = var
        elif isinstance(step, Aggregate):
            if not isinstance(terms[step.ref], Var):
                raise UnsupportedShape("COUNT directly over the anchor is not supported")
            count_of = terms[step.ref]
    if count_of is not None:
        return SelectQuery(CountSpec(count_of, distinct=True, alias=Var("count")), patterns)
    return SelectQuery([terms[d.steps[-1].index]], patterns, distinct=True)


def compile_external(d: Decomposition, links: Sequence[LinkResult], adapter: AdapterSpec) -> QueryPlan:
    """Plan from an external generator.

    The adapter gets ``{"decomposition": str, "links": [{"step", "iri"}]}`` and
    returns ``{"queries": [str]}``: one entry per non-anchor step, each either
    a hop template using the bare token ``SLOT`` for the previous value, or the
    string ``COUNT``.
    """
    _check_shape(d)
    linked = _links_by_step(d, links)
    payload = {"decomposition": serialize(d),
               "links": [{"step": s, "iri": iri.value} for s, iri in sorted(linked.items())]}
    reply = adapter.call("compile", payload)
    queries = reply.get("queries")
    rest = d.steps[1:]
    if not isinstance(queries, list) or len(queries) != len(rest):
        raise AdapterProtocolError(f"expected {len(rest)} queries in 'queries'")
    anchor = d.steps[0]
    if anchor.index not in linked:
        raise MissingLink(anchor.index)
    steps = [AnchorBind(anchor.index, linked[anchor.index])]
    for step, text in zip(rest, queries):
        if not isinstance(text, str):
            raise AdapterProtocolError("queries must be strings")
        if text.strip().upper() == "COUNT":
            steps.append(CountStep(step.index, step.ref))
            continue
        try:
            template = parse_select(text)
            if template.is_count or len(template.projection) != 1:
                raise ValueError("hop query must project one variable")
            steps.append(HopQuery(step.index, template, step.ref, template.projection[0]))
        except (QuerySyntaxError, UnsupportedFeature, ValueError) as exc:
            raise AdapterProtocolError(f"bad query for step {step.index}: {exc}") from None
    return QueryPlan(steps)


@dataclass
class QgenConfig:
    threshold: float = DEFAULT_THRESHOLD
    adapter: Optional[AdapterSpec] = None
