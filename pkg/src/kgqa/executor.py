"""Sequential plan execution, answer rendering and the end-to-end pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from .adapter import AdapterError
from .decomposer import DecomposerConfig, DecompositionError, NoAnchorFound, PatternDecomposer
from .linker import LinkerConfig, LinkingError, link
from .mrdcpq import Decomposition, serialize
from .qgen import (AnchorBind, CompileError, CountStep, HopQuery, QgenConfig, QueryPlan,
                   RelationResolver, compile_chain, compile_external)
from .sparql import (EndpointError, ResultTable, SelectQuery, TriplePattern, Var, bind_slot,
                     evaluate, remote_query)
from .store import (ABSTRACT_PREDICATE, LABEL_PREDICATE, Iri, KnowledgeGraph, Literal, Node,
                    integer_literal)

log = logging.getLogger(__name__)


# --- backends -----------------------------------------------------------------

class LocalBackend:
    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg

    def select(self, q: SelectQuery) -> ResultTable:
        return evaluate(self.kg, q)

    def labels_of(self, e: Iri) -> set[str]:
        return self.kg.labels_of(e)

    def lexical_graph(self) -> KnowledgeGraph:
        return self.kg


class RemoteBackend:
    """A SPARQL endpoint; blocking calls over one HTTP session."""

    def __init__(self, endpoint: str, timeout: float = 30.0,
                 label_predicate: Optional[str] = None, abstract_predicate: Optional[str] = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.label_predicate = Iri(label_predicate or LABEL_PREDICATE)
        self.abstract_predicate = Iri(abstract_predicate or ABSTRACT_PREDICATE)
        self.session = requests.Session()
        self._lexical: Optional[KnowledgeGraph] = None

    def select(self, q: SelectQuery) -> ResultTable:
        return remote_query(self.endpoint, q, self.timeout, session=self.session)

    def labels_of(self, e: Iri) -> set[str]:
        if self._lexical is not None:
            return self._lexical.labels_of(e)
        label = Var("label")
        table = self.select(SelectQuery([label], [TriplePattern(e, self.label_predicate, label)]))
        return {n.lexical for n in table.column("label") if isinstance(n, Literal)}

    def lexical_graph(self) -> KnowledgeGraph:
        """Local copy of labels, abstracts and predicate names, for linking."""
        if self._lexical is None:
            kg = KnowledgeGraph(label_predicate=self.label_predicate.value,
                                abstract_predicate=self.abstract_predicate.value)
            s, o, p = Var("s"), Var("o"), Var("p")
            for pred in (self.label_predicate, self.abstract_predicate):
                for row in self.select(SelectQuery([s, o], [TriplePattern(s, pred, o)])).rows:
                    kg.insert((row["s"], pred, row["o"]))
            for node in self.select(SelectQuery([p], [TriplePattern(s, p, o)], distinct=True)).column("p"):
                if isinstance(node, Iri):
                    kg.declare_predicate(node)
            self._lexical = kg.freeze()
        return self._lexical


# --- plan execution ---------------------------------------------------------------

@dataclass
class StepResult:
    step_index: int
    values: list

    def to_dict(self, render=None) -> dict:
        render = render or _node_text
        return {"step": self.step_index, "values": [render(v) for v in self.values]}


@dataclass
class Answer:
    values: list
    display: list
    trace: list
    empty_step: Optional[int] = None


class ExecutionError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


class EmptyIntermediate(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"step {step} produced no bindings")
        self.step = step


def _node_text(node: Node) -> str:
    return node.value if isinstance(node, Iri) else node.lexical


def _ordered(values) -> list:
    return sorted(set(values), key=lambda n: n.sort_key)


def run_plan(backend, plan: QueryPlan) -> tuple[list, Optional[int]]:
    """Trace of StepResults and the first non-final step that came back empty."""
    results: dict[int, StepResult] = {}
    empty_step = None
    last = plan.steps[-1].index if plan.steps else None
    for step in plan.steps:
        if isinstance(step, AnchorBind):
            values = [step.entity]
        elif isinstance(step, CountStep):
            values = [integer_literal(len(results[step.source].values))]
        elif isinstance(step, HopQuery):
            found = []
            name = step.out_var.name
            for value in results[step.source].values:
                if not isinstance(value, Iri):
                    continue  # literals cannot be subjects
                try:
                    table = backend.select(bind_slot(step.template, value))
                except EndpointError as exc:
                    raise ExecutionError(step.index, exc) from exc
                found.extend(table.column(name))
            values = _ordered(found)
        else:
            raise TypeError(f"unknown plan step {step!r}")
        results[step.index] = StepResult(step.index, values)
        if not values and step.index != last and empty_step is None:
            empty_step = step.index
    return [results[s.index] for s in plan.steps], empty_step


def compose_answer(values, labels_of) -> list[str]:
    """Display strings: first label (lexicographic) for IRIs, lexical form for literals."""
    if isinstance(labels_of, KnowledgeGraph):
        labels_of = labels_of.labels_of
    out = []
    for v in values:
        if isinstance(v, Iri):
            labels = labels_of(v)
            out.append(min(labels) if labels else v.value)
        else:
            out.append(v.lexical)
    return sorted(out)


def execute_plan(backend, plan: QueryPlan) -> Answer:
    if isinstance(backend, KnowledgeGraph):
        backend = LocalBackend(backend)
    trace, empty_step = run_plan(backend, plan)
    final = trace[-1].values if trace else []
    if empty_step is not None:
        log.info("step %d came back empty", empty_step)
    return Answer(list(final), compose_answer(final, backend.labels_of), trace, empty_step)


# --- pipeline -------------------------------------------------------------------------

STAGES = ("decomposition", "linking", "qgen", "execution")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception, report: Optional["PipelineReport"] = None):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.report = report

    def to_dict(self) -> dict:
        out = {"stage": self.stage, "error": type(self.cause).__name__, "message": str(self.cause)}
        step = getattr(self.cause, "step", None)
        if step is not None:
            out["step"] = step
        return out


@dataclass
class PipelineReport:
    question: str
    decomposition: Optional[Decomposition] = None
    links: list = field(default_factory=list)
    plan: Optional[QueryPlan] = None
    answer: Optional[Answer] = None
    errors: list = field(default_factory=list)

    @property
    def answers(self) -> list[str]:
        return self.answer.display if self.answer else []

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "decomposition": serialize(self.decomposition) if self.decomposition else None,
            "links": [lr.to_dict() for lr in self.links],
            "queries": self.plan.queries() if self.plan else [],
            "trace": [s.to_dict() for s in self.answer.trace] if self.answer else [],
            "answers": self.answers,
            "errors": list(self.errors),
        }


@dataclass
class Components:
    """Stage configuration for :func:`answer_question`."""

    decomposer: Optional[Callable[[str], Decomposition]] = None
    decomposer_config: Optional[DecomposerConfig] = None
    linker: LinkerConfig = field(default_factory=LinkerConfig)
    qgen: QgenConfig = field(default_factory=QgenConfig)


def _stage_of(exc: Exception, default: str) -> str:
    # the pattern decomposer's anchor lookup is gazetteer NER
    if isinstance(exc, (NoAnchorFound, LinkingError)):
        return "linking"
    return default


class Pipeline:
    """Decompose, link, compile and execute; stateless per question."""

    def __init__(self, backend, components: Optional[Components] = None):
        if isinstance(backend, KnowledgeGraph):
            backend = LocalBackend(backend)
        self.backend = backend
        self.components = components or Components()
        self.kg = backend.lexical_graph()
        comp = self.components
        self.decomposer_config = comp.decomposer_config or DecomposerConfig.from_graph(self.kg)
        self.decomposer = comp.decomposer or PatternDecomposer(self.decomposer_config)
        self.gazetteer = self.decomposer_config.gazetteer
        self.resolver = RelationResolver(self.kg, comp.qgen.threshold)

    def decompose(self, question: str) -> Decomposition:
        return self.decomposer(question)

    def link(self, d: Decomposition, question: str):
        return link(d, question, self.kg, self.gazetteer, self.components.linker)

    def compile(self, d: Decomposition, links) -> QueryPlan:
        if self.components.qgen.adapter is not None:
            return compile_external(d, links, self.components.qgen.adapter)
        return compile_chain(d, links, self.kg, resolver=self.resolver)

    def answer(self, question: str) -> PipelineReport:
        report = PipelineReport(question)
        stage = "decomposition"
        try:
            report.decomposition = self.decompose(question)
            stage = "linking"
            report.links = self.link(report.decomposition, question)
            stage = "qgen"
            report.plan = self.compile(report.decomposition, report.links)
            stage = "execution"
            report.answer = execute_plan(self.backend, report.plan)
        except (DecompositionError, LinkingError, CompileError, AdapterError, ExecutionError,
                EndpointError) as exc:
            err = PipelineError(_stage_of(exc, stage), exc, report)
            report.errors.append(err.to_dict())
            raise err from exc
        if report.answer.empty_step is not None:
            cause = EmptyIntermediate(report.answer.empty_step)
            report.errors.append(PipelineError("execution", cause).to_dict())
        return report


def answer_question(question: str, backend, components: Optional[Components] = None) -> PipelineReport:
    return Pipeline(backend, components).answer(question)
