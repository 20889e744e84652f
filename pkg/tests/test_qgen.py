import pytest

from kgqa.linker import Candidate, LinkResult, Mention
from kgqa.mrdcpq import parse_decomposition
from kgqa.qgen import (AnchorBind, CountStep, HopQuery, MissingLink, UnresolvedRelation,
                       UnsupportedShape, compile_chain, compile_joined, resolve_relation)
from kgqa.sparql import SLOT, CountSpec, SelectQuery, TriplePattern, Var, parse_select, serialize_query
from kgqa.store import LABEL_PREDICATE, Iri, KnowledgeGraph, Literal, Triple

E = "http://kg/e/"
P = "http://kg/p/"


def linked(step, iri):
    return LinkResult(Mention("m", step, (0, 1)), (Candidate(Iri(iri), 1.0, 1.0),))


def labeled_predicates(**labels):
    kg = KnowledgeGraph([Triple(Iri(P + k), Iri(LABEL_PREDICATE), Literal(v)) for k, v in labels.items()])
    for k in labels:
        kg.declare_predicate(Iri(P + k))
    return kg


def test_resolve_exact(daei):
    assert resolve_relation("country", daei) == Iri(P + "country")


def test_resolve_closest():
    kg = labeled_predicates(headquarter="headquarter", headCoach="head coach")
    assert resolve_relation("headquarter", kg) == Iri(P + "headquarter")
    assert resolve_relation("headquarters", kg) == Iri(P + "headquarter")


def test_resolve_below_threshold():
    kg = labeled_predicates(country="country", motto="motto")
    with pytest.raises(UnresolvedRelation) as info:
        resolve_relation("zzz", kg)
    assert info.value.best_score < 0.5


def test_resolve_tie_by_iri():
    kg = labeled_predicates(b="same", a="same")
    assert resolve_relation("same", kg) == Iri(P + "a")


def test_reserved_predicates_not_resolved(toy_kg):
    assert resolve_relation("abstract", toy_kg, threshold=0.0) != Iri("http://kg/p/abstract")


def test_digikala_chain(toy_kg):
    d = parse_decomposition("#1 Digikala ; #2 headquarter #1 ; #3 population #2")
    plan = compile_chain(d, [linked(1, E + "Digikala")], toy_kg)
    assert [type(s) for s in plan.steps] == [AnchorBind, HopQuery, HopQuery]
    assert plan.steps[0].entity == Iri(E + "Digikala")
    assert plan.steps[1].template.where[0] == TriplePattern(SLOT, Iri(P + "headquarter"), Var("x2"))
    assert plan.steps[2].template.where[0].p == Iri(P + "population")
    assert [s.source for s in plan.steps[1:]] == [1, 2]
    assert plan.queries()[0] == f"SELECT ?x2 WHERE {{ SLOT <{P}headquarter> ?x2 . }}"


def test_masir_eshgh_count(toy_kg):
    d = parse_decomposition("#1 Masir Eshgh ; #2 actors #1 ; #3 COUNT #2")
    plan = compile_chain(d, [linked(1, E + "Masir_Eshgh")], toy_kg)
    assert [type(s) for s in plan.steps] == [AnchorBind, HopQuery, CountStep]
    assert plan.steps[2] == CountStep(3, 2)


def test_multi_anchor_rejected(toy_kg):
    d = parse_decomposition("#1 A ; #2 B ; #3 country #2")
    with pytest.raises(UnsupportedShape):
        compile_chain(d, [linked(1, E + "A"), linked(2, E + "B")], toy_kg)


def test_missing_link(toy_kg):
    d = parse_decomposition("#1 Tehran ; #2 city #1")
    with pytest.raises(MissingLink):
        compile_chain(d, [], toy_kg)


def test_joined_tehran_shape(toy_kg):
    d = parse_decomposition("#1 Tehran ; #2 city #1 ; #3 area code #2")
    q = compile_joined(d, [linked(1, E + "Tehran")], toy_kg)
    assert q.projection == (Var("x3"),)
    assert q.where == (TriplePattern(Iri(E + "Tehran"), Iri(P + "city"), Var("x2")),
                       TriplePattern(Var("x2"), Iri(P + "areaCode"), Var("x3")))
    assert parse_select(serialize_query(q)) == q


def test_joined_minimal_and_count(toy_kg):
    d = parse_decomposition("#1 Ardabil ; #2 country #1")
    q = compile_joined(d, [linked(1, E + "Ardabil")], toy_kg)
    assert len(q.where) == 1
    d = parse_decomposition("#1 Masir Eshgh ; #2 actors #1 ; #3 COUNT #2")
    q = compile_joined(d, [linked(1, E + "Masir_Eshgh")], toy_kg)
    assert q.projection == CountSpec(Var("x2"), True, Var("count"))


def test_joined_rejects_inner_count(toy_kg):
    d = parse_decomposition("#1 Masir Eshgh ; #2 actors #1 ; #3 COUNT #2 ; #4 country #3")
    with pytest.raises(UnsupportedShape):
        compile_joined(d, [linked(1, E + "Masir_Eshgh")], toy_kg)


def test_hop_template_invariant():
    good = SelectQuery([Var("x")], [TriplePattern(SLOT, Iri(P + "p"), Var("x"))])
    HopQuery(2, good, 1, Var("x"))
    bad = SelectQuery([Var("x")], [TriplePattern(Var("x"), Iri(P + "p"), SLOT)])
    with pytest.raises(ValueError):
        HopQuery(2, bad, 1, Var("x"))


def test_compilation_deterministic(toy_kg):
    d = parse_decomposition("#1 Immanuel Kant ; #2 place of birth #1 ; #3 country #2 ; #4 motto #3")
    links = [linked(1, E + "Immanuel_Kant")]
    assert compile_chain(d, links, toy_kg) == compile_chain(d, links, toy_kg)
    assert len(compile_chain(d, links, toy_kg).steps) == len(d)
