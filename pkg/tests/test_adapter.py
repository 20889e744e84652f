import sys
import time

import pytest

from kgqa.adapter import AdapterError, AdapterProtocolError, AdapterSpec, AdapterTimeout
from kgqa.decomposer import decompose_external
from kgqa.executor import Components, Pipeline
from kgqa.linker import HttpEmbedder, LinkerConfig, recognize_entities_external
from kgqa.mrdcpq import Aggregate, parse_decomposition, serialize
from kgqa.qgen import CountStep, HopQuery, QgenConfig, compile_external

from _support import json_handler, serve

ECHO = f'{sys.executable} -c "import json,sys; d=json.load(sys.stdin); print(json.dumps({{\'steps\': [\'#1 \' + d[\'question\'], \'#2 country #1\']}}))"'


def test_parse_specs():
    assert AdapterSpec.parse("http:localhost:9000").target == "http://localhost:9000"
    assert AdapterSpec.parse("extern:./model --flag").kind == "extern"
    for bad in ("pattern", "ftp:x", "http:", "extern"):
        with pytest.raises(ValueError):
            AdapterSpec.parse(bad)


def test_extern_process_round_trip():
    d = decompose_external("Ardabil", AdapterSpec.parse("extern:" + ECHO, timeout=20))
    assert serialize(d) == "#1 Ardabil ; #2 country #1"


def test_extern_failures():
    with pytest.raises(AdapterProtocolError):
        AdapterSpec.parse(f'extern:{sys.executable} -c "print(42)"', 20).call("x", {})
    with pytest.raises(AdapterProtocolError):
        AdapterSpec.parse(f'extern:{sys.executable} -c "import sys; sys.exit(3)"', 20).call("x", {})
    with pytest.raises(AdapterTimeout):
        AdapterSpec.parse(f'extern:{sys.executable} -c "import time; time.sleep(5)"', 0.5).call("x", {})
    with pytest.raises(AdapterError):
        AdapterSpec.parse("extern:/nonexistent/model", 1).call("x", {})


def test_http_decomposer_and_forward_reference():
    replies = {"decompose": lambda p: {"steps": ["Masir Eshgh", "actors #1", "Number #2"]}}
    with serve(json_handler(replies)) as base:
        d = decompose_external("How many actors?", AdapterSpec.parse("http:" + base))
        assert isinstance(d.steps[2], Aggregate)
        replies["decompose"] = lambda p: {"steps": ["#1 country #2", "#2 Iran"]}
        with pytest.raises(AdapterProtocolError):
            decompose_external("x", AdapterSpec.parse("http:" + base))
        replies["decompose"] = lambda p: {"nope": 1}
        with pytest.raises(AdapterProtocolError):
            decompose_external("x", AdapterSpec.parse("http:" + base))


def test_http_status_and_bad_json():
    routes = {"bad": lambda p: (200, "{oops"), "list": lambda p: (200, "[1, 2]"),
              "down": lambda p: (503, "busy")}
    with serve(json_handler(routes)) as base:
        spec = AdapterSpec.parse("http:" + base)
        for route in routes:
            with pytest.raises(AdapterProtocolError):
                spec.call(route, {})


def test_http_timeout():
    def slow(payload):
        time.sleep(1.5)
        return {}

    with serve(json_handler({"slow": slow})) as base:
        with pytest.raises(AdapterTimeout):
            AdapterSpec.parse("http:" + base, timeout=0.3).call("slow", {})


def test_ner_and_embed_routes():
    seen = []

    def ner(payload):
        seen.append(payload)
        return {"spans": [[4, 20]]}

    routes = {"ner": ner, "embed": lambda p: {"vector": [len(p["text"]), 0, 1]}}
    with serve(json_handler(routes)) as base:
        spec = AdapterSpec.parse("http:" + base)
        d = parse_decomposition("#1 The World of Apu film ; #2 Country #1")
        [m] = recognize_entities_external(d, spec)
        assert (m.text, m.span) == ("World of Apu fil", (4, 20))
        assert seen == [{"text": "The World of Apu film"}]
        assert HttpEmbedder(spec)("abcd") == (4.0, 0.0, 1.0)
        routes["ner"] = lambda p: {"spans": [[0, 99]]}
        with pytest.raises(AdapterProtocolError):
            recognize_entities_external(d, spec)


def test_compile_route(toy_kg):
    P = "http://kg/p/"
    got = []

    def compile_(payload):
        got.append(payload)
        return {"queries": [f"SELECT ?v WHERE {{ SLOT <{P}actors> ?v . }}", "COUNT"]}

    with serve(json_handler({"compile": compile_})) as base:
        spec = AdapterSpec.parse("http:" + base)
        comp = Components(linker=LinkerConfig(), qgen=QgenConfig(adapter=spec))
        report = Pipeline(toy_kg, comp).answer("How many actors does Masir Eshgh have?")
        assert report.answers == ["3"]
        d = parse_decomposition("#1 Masir Eshgh ; #2 actors #1 ; #3 COUNT #2")
        links = Pipeline(toy_kg).link(d, "Masir Eshgh")
        plan = compile_external(d, links, spec)
        assert [type(s) for s in plan.steps[1:]] == [HopQuery, CountStep]
    assert got[0]["links"] == [{"step": 1, "iri": "http://kg/e/Masir_Eshgh"}]
