import json

import pytest
import requests
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kgqa.sparql import (SLOT, CountSpec, HttpStatusError, MalformedResponse, NetworkError,
                         QuerySyntaxError, QueryTimeout, ResultTable, SelectQuery, TriplePattern,
                         UnsupportedFeature, Var, bind_slot, evaluate, parse_results, parse_select,
                         remote_query, serialize_query, serialize_results)
from kgqa.store import Iri, KnowledgeGraph, Literal, integer_literal

from _support import fixture_queries, nested_loop_rows, serve, sparql_handler
from strategies import graphs, patterns

E = "http://kg/e/"
P = "http://kg/p/"


def test_parse_single_pattern():
    q = parse_select(f"SELECT ?x WHERE {{ <{E}Digikala> <{P}headquarter> ?x . }}")
    assert q.projection == (Var("x"),)
    assert q.where == (TriplePattern(Iri(E + "Digikala"), Iri(P + "headquarter"), Var("x")),)
    assert not q.distinct


def test_parse_count():
    q = parse_select("SELECT (COUNT(?a) AS ?n) WHERE { <http://e> <http://p> ?a . }")
    assert q.projection == CountSpec(Var("a"), False, Var("n"))
    assert q.result_vars == ["n"]


def test_keywords_case_insensitive_and_optional_dot():
    q = parse_select("select distinct ?x where { ?x <http://p> \"v\"@fa }")
    assert q.distinct
    assert q.where[0].o == Literal("v", lang="fa")


@pytest.mark.parametrize("text", [
    "SELECT ?x WHERE { OPTIONAL { ?x <http://p> ?y . } }",
    "PREFIX ex: <http://e/> SELECT ?x WHERE { ?x <http://p> ?y . }",
    "SELECT ?x WHERE { ?x <http://p> ?y . FILTER(?y) }",
    "SELECT ?x WHERE { { ?x <http://p> ?y . } UNION { ?x <http://q> ?y . } }",
    "SELECT ?x WHERE { ?x <http://p> ?y . } LIMIT 5",
])
def test_unsupported(text):
    with pytest.raises(UnsupportedFeature):
        parse_select(text)


@pytest.mark.parametrize("text", [
    "",
    "SELECT WHERE { ?x <http://p> ?y . }",
    "SELECT ?x { ?x <http://p> ?y . }",
    "SELECT ?x WHERE { }",
    "SELECT ?z WHERE { ?x <http://p> ?y . }",
    'SELECT ?x WHERE { "lit" <http://p> ?x . }',
    "SELECT ?x WHERE { ?x <http://p> ?y . } trailing",
])
def test_syntax_errors(text):
    with pytest.raises(QuerySyntaxError):
        parse_select(text)


def test_syntax_error_position():
    with pytest.raises(QuerySyntaxError) as info:
        parse_select("SELECT ?x WHERE ?x")
    assert info.value.position == 16


@pytest.mark.parametrize("text", fixture_queries())
def test_fixture_queries_round_trip(text):
    q = parse_select(text)
    assert parse_select(serialize_query(q)) == q
    assert serialize_query(parse_select(serialize_query(q))) == serialize_query(q)


def test_slot_round_trip_and_binding():
    q = SelectQuery([Var("x")], [TriplePattern(SLOT, Iri(P + "country"), Var("x"))])
    text = serialize_query(q)
    assert text == f"SELECT ?x WHERE {{ SLOT <{P}country> ?x . }}"
    assert parse_select(text) == q
    bound = bind_slot(q, Iri(E + "Ardabil"))
    assert not bound.has_slot()
    assert bound.where[0].s == Iri(E + "Ardabil")


def test_evaluate_daei_chain(daei):
    t = evaluate(daei, parse_select(f"SELECT ?c WHERE {{ <{E}Ardabil> <{P}country> ?c . }}"))
    assert t.vars == ["c"]
    assert t.rows == [{"c": Iri(E + "Iran")}]


def test_evaluate_chain_join(daei):
    q = parse_select(f"SELECT ?b ?c WHERE {{ <{E}AliDaei> <{P}placeOfBirth> ?b . ?b <{P}country> ?c . }}")
    assert evaluate(daei, q).rows == [{"b": Iri(E + "Ardabil"), "c": Iri(E + "Iran")}]


def test_evaluate_empty_graph():
    q = parse_select("SELECT ?s WHERE { ?s ?p ?o . }")
    assert evaluate(KnowledgeGraph(), q).rows == []


def test_count_over_empty_match_is_zero(daei):
    q = parse_select(f"SELECT (COUNT(?x) AS ?n) WHERE {{ <{E}Iran> <{P}country> ?x . }}")
    assert evaluate(daei, q).rows == [{"n": integer_literal(0)}]


def test_unfilled_slot_rejected(daei):
    q = SelectQuery([Var("x")], [TriplePattern(SLOT, Iri(P + "country"), Var("x"))])
    with pytest.raises(ValueError):
        evaluate(daei, q)


def test_results_json_shapes():
    assert serialize_results(ResultTable(["x"], [])) == '{"head":{"vars":["x"]},"results":{"bindings":[]}}'
    doc = json.loads(serialize_results(ResultTable(["x", "y"], [
        {"x": Iri(E + "Iran"), "y": Literal("Iran", lang="en")}])))
    binding = doc["results"]["bindings"][0]
    assert binding["x"] == {"type": "uri", "value": E + "Iran"}
    assert binding["y"] == {"type": "literal", "value": "Iran", "xml:lang": "en"}
    typed = json.loads(serialize_results(ResultTable(["n"], [{"n": integer_literal(3)}])))
    assert typed["results"]["bindings"][0]["n"]["datatype"].endswith("#integer")


@pytest.mark.parametrize("text", [
    "{not json",
    "[]",
    '{"head": {"vars": ["x"]}}',
    '{"head": {"vars": ["x"]}, "results": {"bindings": [{"y": {"type": "uri", "value": "a"}}]}}',
    '{"head": {"vars": ["x"]}, "results": {"bindings": [{"x": {"type": "bnode", "value": "b0"}}]}}',
])
def test_parse_results_malformed(text):
    with pytest.raises(MalformedResponse):
        parse_results(text)


def test_remote_round_trip_and_wire_format(toy_kg):
    log = []
    with serve(sparql_handler(toy_kg, log)) as base:
        for text in fixture_queries():
            q = parse_select(text)
            assert remote_query(base + "/sparql", q, timeout=5) == evaluate(toy_kg, q)
    assert log[0]["accept"] == "application/sparql-results+json"
    assert log[0]["content_type"] == "application/x-www-form-urlencoded"
    assert "query" in log[0]["form"]


def test_remote_errors(toy_kg):
    q = parse_select("SELECT ?x WHERE { ?x <http://kg/p/country> ?y . }")
    with serve(sparql_handler(toy_kg)) as base:
        with pytest.raises(HttpStatusError) as info:
            remote_query(base + "/fail", q, timeout=5)
        assert info.value.code == 500
        with pytest.raises(MalformedResponse):
            remote_query(base + "/garbage", q, timeout=5)
    with pytest.raises(NetworkError):
        remote_query(base + "/sparql", q, timeout=2)


def test_remote_timeout(monkeypatch):
    def slow(*args, **kwargs):
        raise requests.Timeout("slow")
    monkeypatch.setattr(requests, "post", slow)
    with pytest.raises(QueryTimeout):
        remote_query("http://127.0.0.1:9/sparql", "SELECT ?x WHERE { ?x ?p ?o . }", timeout=0.1)


def _oracle_table(triples, q):
    names = q.result_vars
    sols = nested_loop_rows(list(set(triples)), q.where)
    if q.is_count:
        vals = [s[q.projection.counted.name] for s in sols]
        return {(("n", integer_literal(len(set(vals)) if q.projection.distinct else len(vals))),)}, None
    rows = [tuple((n, s[n]) for n in names) for s in sols]
    return (set(rows) if q.distinct else None), sorted(rows, key=repr)


@st.composite
def queries(draw):
    pats = draw(st.lists(patterns, min_size=1, max_size=3))
    bound = sorted({v.name for pat in pats for v in pat.variables()})
    assume(bound)
    chosen = draw(st.lists(st.sampled_from(bound), min_size=1, max_size=len(bound), unique=True))
    if draw(st.integers(0, 3)) == 0:
        return SelectQuery(CountSpec(Var(chosen[0]), draw(st.booleans()), Var("n")), pats)
    return SelectQuery([Var(n) for n in chosen], pats, draw(st.booleans()))


@settings(max_examples=250, deadline=None)
@given(graphs(50), queries())
def test_evaluate_matches_nested_loop(ts, q):
    kg = KnowledgeGraph(ts)
    got = evaluate(kg, q)
    as_set, as_bag = _oracle_table(ts, q)
    rows = [tuple((n, r[n]) for n in got.vars) for r in got.rows]
    if q.is_count or q.distinct:
        assert set(rows) == as_set and len(rows) == len(as_set)
    else:
        assert sorted(rows, key=repr) == as_bag


@settings(max_examples=100, deadline=None)
@given(graphs(40), queries())
def test_count_equals_row_count(ts, q):
    assume(not q.is_count)
    kg = KnowledgeGraph(ts)
    var = q.projection[0]
    counted = SelectQuery(CountSpec(var, q.distinct, Var("n")), q.where)
    plain = SelectQuery([var], q.where, q.distinct)
    assert evaluate(kg, counted).rows[0]["n"] == integer_literal(len(evaluate(kg, plain).rows))


@settings(max_examples=100, deadline=None)
@given(queries())
def test_query_round_trip(q):
    assert parse_select(serialize_query(q)) == q
