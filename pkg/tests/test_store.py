import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgqa.store import (ABSTRACT_PREDICATE, LABEL_PREDICATE, FrozenGraphError, Iri, KnowledgeGraph,
                        Literal, MalformedLine, Triple, load_graph, parse_ntriples, serialize_ntriples)

from _support import FIXTURES, fixture_path, scan_match
from strategies import graphs, iris, nodes, preds

E = "http://kg/e/"
P = "http://kg/p/"


def test_single_statement():
    triples = parse_ntriples(f"<{E}Tehran> <{P}country> <{E}Iran> .")
    assert triples == [Triple(Iri(E + "Tehran"), Iri(P + "country"), Iri(E + "Iran"))]


def test_empty_document():
    assert parse_ntriples("") == []


def test_comments_and_blank_lines_skipped():
    text = f"# header\n\n<{E}a> <{P}x> \"v\" .\n   \n# done\n"
    assert len(parse_ntriples(text)) == 1


@pytest.mark.parametrize("line, fragment", [
    (f'<{E}A> <{P}x> "v"@fa^^<http://t> .', "language tag"),
    (f"<{E}A> <{P}x> <{E}B>", "terminal"),
    (f'<{E}A> <{P}x> "unterminated .', "unterminated"),
    (f"<{E}A <{P}x> <{E}B> .", ""),
    (f"_:b0 <{P}x> <{E}B> .", "blank"),
])
def test_malformed(line, fragment):
    with pytest.raises(MalformedLine) as info:
        parse_ntriples(line)
    assert info.value.line == 1
    assert fragment in str(info.value)


def test_all_or_nothing_reports_line_number():
    text = f"<{E}a> <{P}x> <{E}b> .\n<{E}a> <{P}x> <{E}b>\n"
    with pytest.raises(MalformedLine) as info:
        parse_ntriples(text)
    assert info.value.line == 2


def test_literal_forms_and_escapes():
    text = (f'<{E}a> <{P}x> "tab\\there \\"q\\"" .\n'
            f'<{E}a> <{P}x> "سلام"@fa .\n'
            f'<{E}a> <{P}x> "5"^^<http://www.w3.org/2001/XMLSchema#integer> .\n')
    objs = [t.object for t in parse_ntriples(text)]
    assert objs[0] == Literal('tab\there "q"')
    assert objs[1] == Literal("سلام", lang="fa")
    assert objs[2].datatype == Iri("http://www.w3.org/2001/XMLSchema#integer")


def test_nfc_normalization():
    decomposed = unicodedata.normalize("NFD", "Königsberg")
    t = parse_ntriples(f'<{E}k> <{P}x> "{decomposed}" .')[0]
    assert t.object.lexical == unicodedata.normalize("NFC", "Königsberg")


def test_literal_subject_rejected():
    with pytest.raises(MalformedLine):
        parse_ntriples(f'"a" <{P}x> <{E}b> .')


def test_insert_idempotent_and_counts():
    kg = KnowledgeGraph()
    t = Triple(Iri(E + "a"), Iri(P + "x"), Iri(E + "b"))
    kg.insert(t)
    assert len(kg) == 1
    kg.insert(t)
    assert len(kg) == 1
    kg.insert(Triple(Iri(E + "a"), Iri(P + "x"), Literal("b")))
    assert len(kg) == 2


def test_label_and_abstract_indexes():
    e = Iri(E + "Tehran")
    kg = KnowledgeGraph()
    assert kg.labels_of(e) == set()
    assert kg.abstract_of(e) is None
    kg.insert(Triple(e, Iri(LABEL_PREDICATE), Literal("Tehran")))
    kg.insert(Triple(e, Iri(LABEL_PREDICATE), Literal("تهران", lang="fa")))
    kg.insert(Triple(e, Iri(ABSTRACT_PREDICATE), Literal("text")))
    assert kg.labels_of(e) == {"Tehran", "تهران"}
    assert kg.abstract_of(e) == "text"


def test_smallest_abstract_wins():
    e = Iri(E + "x")
    kg = KnowledgeGraph([Triple(e, Iri(ABSTRACT_PREDICATE), Literal("b text")),
                         Triple(e, Iri(ABSTRACT_PREDICATE), Literal("a text"))])
    assert kg.abstract_of(e) == "a text"


def test_custom_reserved_predicates():
    e = Iri(E + "x")
    kg = KnowledgeGraph([Triple(e, Iri(P + "name"), Literal("X"))], label_predicate=P + "name")
    assert kg.labels_of(e) == {"X"}


def test_frozen_graph_rejects_inserts(daei):
    with pytest.raises(FrozenGraphError):
        daei.insert(Triple(Iri(E + "a"), Iri(P + "x"), Iri(E + "b")))


def test_match_wildcard():
    ts = [Triple(Iri(E + c), Iri(P + "x"), Iri(E + "z")) for c in "abc"]
    assert KnowledgeGraph(ts).match() == ts


def test_match_daei_chain(daei):
    assert daei.match(Iri(E + "Tehran"), Iri(P + "country")) == []
    assert daei.match(Iri(E + "Ardabil"), Iri(P + "country")) == [
        Triple(Iri(E + "Ardabil"), Iri(P + "country"), Iri(E + "Iran"))]


def test_entities_exclude_predicates(daei):
    assert [e.value for e in daei.labeled_entities()] == [E + "AliDaei", E + "Ardabil", E + "Iran"]
    assert {p.value for p in daei.labeled_predicates()} == {P + "placeOfBirth", P + "country"}


@pytest.mark.parametrize("name", ["daei_chain.nt", "toy_kg.nt", "nearmiss.nt"])
def test_fixture_round_trip(name):
    triples = parse_ntriples(fixture_path(name).read_text(encoding="utf-8"))
    assert set(parse_ntriples(serialize_ntriples(triples))) == set(triples)


def test_load_graph_missing_file():
    with pytest.raises(OSError):
        load_graph(FIXTURES / "absent.nt")


@settings(max_examples=150, deadline=None)
@given(graphs(200), st.one_of(st.none(), iris), st.one_of(st.none(), preds), st.one_of(st.none(), nodes))
def test_match_equals_scan(ts, s, p, o):
    kg = KnowledgeGraph(ts)
    assert kg.match(s, p, o) == scan_match(set(ts), s, p, o)


@settings(max_examples=100, deadline=None)
@given(graphs(80))
def test_index_sizes_agree(ts):
    kg = KnowledgeGraph(ts)
    assert kg.index_sizes() == (len(set(ts)),) * 3
    assert len(kg) == len(set(ts))


@settings(max_examples=100, deadline=None)
@given(graphs(60))
def test_serialize_round_trip(ts):
    assert set(parse_ntriples(serialize_ntriples(ts))) == set(ts)

