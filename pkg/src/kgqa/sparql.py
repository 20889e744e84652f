"""SELECT/BGP/COUNT subset of SPARQL: parser, evaluator, results JSON, HTTP client.

Grammar::

    SELECT [DISTINCT] (?v ... | (COUNT([DISTINCT] ?v) AS ?n)) WHERE { (term term term .)+ }

Terms are ``?name``, ``<iri>`` or quoted literals with optional ``@lang`` or
``^^<iri>``.  Prefixed names are not accepted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import requests

from .store import Iri, KnowledgeGraph, Literal, Node, format_node, integer_literal

_VAR_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
RESULTS_MEDIA_TYPE = "application/sparql-results+json"


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if not _VAR_NAME.fullmatch(self.name):
            raise ValueError(f"invalid variable name: {self.name!r}")

    def __str__(self):
        return "?" + self.name


class _Slot:
    """Placeholder filled with a previous step's value at execution time."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "SLOT"

    def __reduce__(self):
        return (_Slot, ())


SLOT = _Slot()
Term = Union[Var, Iri, Literal, _Slot]


@dataclass(frozen=True)
class TriplePattern:
    s: Term
    p: Term
    o: Term

    def __post_init__(self):
        if isinstance(self.s, Literal) or isinstance(self.p, Literal):
            raise ValueError("literals may only appear in object position")
        if self.p is SLOT:
            raise ValueError("SLOT may not appear in predicate position")

    def __iter__(self):
        return iter((self.s, self.p, self.o))

    def variables(self) -> list[Var]:
        return [t for t in self if isinstance(t, Var)]


@dataclass(frozen=True)
class CountSpec:
    counted: Var
    distinct: bool = False
    alias: Var = Var("count")


@dataclass(frozen=True)
class SelectQuery:
    projection: Union[tuple, CountSpec]
    where: tuple
    distinct: bool = False

    def __post_init__(self):
        if not isinstance(self.projection, CountSpec):
            object.__setattr__(self, "projection", tuple(self.projection))
            if not self.projection:
                raise ValueError("empty projection")
        object.__setattr__(self, "where", tuple(self.where))
        if not self.where:
            raise ValueError("WHERE clause needs at least one triple pattern")
        seen = {v for pat in self.where for v in pat.variables()}
        needed = [self.projection.counted] if self.is_count else list(self.projection)
        for v in needed:
            if v not in seen:
                raise ValueError(f"projected variable {v} does not occur in WHERE")

    @property
    def is_count(self) -> bool:
        return isinstance(self.projection, CountSpec)

    @property
    def result_vars(self) -> list[str]:
        if self.is_count:
            return [self.projection.alias.name]
        return [v.name for v in self.projection]

    def has_slot(self) -> bool:
        return any(t is SLOT for pat in self.where for t in pat)


@dataclass
class ResultTable:
    vars: list
    rows: list

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def __eq__(self, other):
        return (isinstance(other, ResultTable) and list(self.vars) == list(other.vars)
                and self.rows == other.rows)


# --- parsing ----------------------------------------------------------------

class QuerySyntaxError(ValueError):
    def __init__(self, position: int, expected: str, found: str = ""):
        msg = f"at position {position}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.position = position
        self.expected = expected


class UnsupportedFeature(ValueError):
    def __init__(self, feature: str, position: int):
        super().__init__(f"unsupported SPARQL feature {feature} at position {position}")
        self.feature = feature
        self.position = position


_UNSUPPORTED = {
    "PREFIX", "BASE", "FILTER", "OPTIONAL", "UNION", "LIMIT", "OFFSET", "ORDER", "GROUP",
    "HAVING", "MINUS", "BIND", "VALUES", "SERVICE", "GRAPH", "CONSTRUCT", "ASK", "DESCRIBE",
    "FROM", "INSERT", "DELETE",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<iri><[^<>"\s]*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<punct>[{}().*])
  | (?P<word>[A-Za-z_][A-Za-z0-9_:-]*)
""", re.VERBOSE)

_STRING_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", '"': '"', "\\": "\\", "b": "\b", "f": "\f", "'": "'"}


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: _STRING_ESCAPES.get(m.group(1), m.group(0)), body)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise QuerySyntaxError(pos, "a token", text[pos:pos + 10])
            if m.lastgroup != "ws":
                kind, value = m.lastgroup, m.group()
                if kind == "word" and value.upper() in _UNSUPPORTED:
                    raise UnsupportedFeature(value.upper(), pos)
                self.tokens.append((kind, value, pos))
            pos = m.end()
        self.i = 0

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_word(self, word):
        kind, value, pos = self.next()
        if kind != "word" or value.upper() != word:
            raise QuerySyntaxError(pos, word, value)

    def expect_punct(self, ch):
        kind, value, pos = self.next()
        if value != ch or kind != "punct":
            raise QuerySyntaxError(pos, repr(ch), value)

    def at_word(self, word):
        kind, value, _ = self.peek()
        return kind == "word" and value.upper() == word

    def var(self):
        kind, value, pos = self.next()
        if kind != "var":
            raise QuerySyntaxError(pos, "a variable", value)
        return Var(value[1:])

    def term(self):
        kind, value, pos = self.next()
        if kind == "var":
            return Var(value[1:])
        if kind == "iri":
            try:
                return Iri(value[1:-1])
            except ValueError:
                raise QuerySyntaxError(pos, "a non-empty IRI", value) from None
        if kind == "string":
            lexical = _unescape(value[1:-1])
            nkind, nvalue, _ = self.peek()
            if nkind == "lang":
                self.next()
                if self.peek()[0] == "dtype":
                    raise QuerySyntaxError(self.peek()[2], "'.' or a term", "^^")
                return Literal(lexical, lang=nvalue[1:])
            if nkind == "dtype":
                self.next()
                dkind, dvalue, dpos = self.next()
                if dkind != "iri":
                    raise QuerySyntaxError(dpos, "a datatype IRI", dvalue)
                return Literal(lexical, datatype=Iri(dvalue[1:-1]))
            return Literal(lexical)
        if kind == "word" and value.upper() == "SLOT":
            return SLOT
        raise QuerySyntaxError(pos, "a term", value)

    def parse(self) -> SelectQuery:
        self.expect_word("SELECT")
        distinct = False
        if self.at_word("DISTINCT"):
            self.next()
            distinct = True
        if self.peek()[1] == "(":
            self.next()
            self.expect_word("COUNT")
            self.expect_punct("(")
            count_distinct = False
            if self.at_word("DISTINCT"):
                self.next()
                count_distinct = True
            counted = self.var()
            self.expect_punct(")")
            self.expect_word("AS")
            alias = self.var()
            self.expect_punct(")")
            projection = CountSpec(counted, count_distinct, alias)
        else:
            projection = []
            while self.peek()[0] == "var":
                projection.append(self.var())
            if not projection:
                kind, value, pos = self.peek()
                raise QuerySyntaxError(pos, "a variable or '(COUNT'", value)
        self.expect_word("WHERE")
        self.expect_punct("{")
        patterns = []
        while self.peek()[1] != "}":
            start = self.peek()[2]
            s, p, o = self.term(), self.term(), self.term()
            try:
                patterns.append(TriplePattern(s, p, o))
            except ValueError as exc:
                raise QuerySyntaxError(start, "a valid triple pattern", str(exc)) from None
            kind, value, pos = self.peek()
            if value == ".":
                self.next()
            elif value != "}":
                raise QuerySyntaxError(pos, "'.' or '}'", value)
        if not patterns:
            raise QuerySyntaxError(self.peek()[2], "a triple pattern", "}")
        self.expect_punct("}")
        kind, value, pos = self.peek()
        if kind != "eof":
            raise QuerySyntaxError(pos, "end of query", value)
        try:
            return SelectQuery(projection, patterns, distinct)
        except ValueError as exc:
            raise QuerySyntaxError(0, "projected variables bound in WHERE", str(exc)) from None


def parse_select(text: str) -> SelectQuery:
    return _Parser(text).parse()


def format_term(t: Term) -> str:
    if t is SLOT:
        return "SLOT"
    if isinstance(t, Var):
        return str(t)
    return format_node(t)


def serialize_query(q: SelectQuery) -> str:
    head = "SELECT "
    if q.distinct:
        head += "DISTINCT "
    if q.is_count:
        c = q.projection
        head += f"(COUNT({'DISTINCT ' if c.distinct else ''}{c.counted}) AS {c.alias})"
    else:
        head += " ".join(str(v) for v in q.projection)
    body = " ".join(f"{format_term(a)} {format_term(b)} {format_term(c)} ." for a, b, c in q.where)
    return f"{head} WHERE {{ {body} }}"


def bind_slot(q: SelectQuery, value: Node) -> SelectQuery:
    """Replace SLOT with ``value``."""
    def sub(t):
        return value if t is SLOT else t
    return SelectQuery(q.projection, [TriplePattern(sub(a), sub(b), sub(c)) for a, b, c in q.where],
                       q.distinct)


# --- evaluation -------------------------------------------------------------

def _resolve(term, binding):
    if isinstance(term, Var):
        return binding.get(term.name)
    return term


def _extend(binding: dict, pattern: TriplePattern, triple) -> Optional[dict]:
    out = binding
    for term, value in zip(pattern, triple):
        if isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[term.name] = value
            elif bound != value:
                return None
    return out


def _matches(kg: KnowledgeGraph, pattern: TriplePattern, binding: dict) -> list[dict]:
    s, p, o = (_resolve(t, binding) for t in pattern)
    if isinstance(s, Literal) or isinstance(p, Literal):
        return []
    out = []
    for triple in kg.match(s, p, o):
        ext = _extend(binding, pattern, triple)
        if ext is not None:
            out.append(ext)
    return out


def _row_key(row: dict, names: Sequence[str]):
    return tuple(row[n].sort_key for n in names)


def solve_bgp(kg: KnowledgeGraph, patterns: Sequence[TriplePattern]) -> list[dict]:
    """All solutions of a basic graph pattern (bag semantics).

    Patterns are joined one at a time.  The next pattern is the one with the
    fewest matches given the variables bound so far, preferring patterns that
    share a bound variable so no cross product is formed while avoidable.
    """
    for pat in patterns:
        if SLOT in tuple(pat):
            raise ValueError("cannot evaluate a query with an unfilled SLOT")
    solutions = [{}]
    remaining = list(patterns)
    bound: set[str] = set()
    while remaining and solutions:
        connected = [pat for pat in remaining if any(v.name in bound for v in pat.variables())]
        pool = connected or remaining

        def cost(pat):
            return sum(len(_matches(kg, pat, sol)) for sol in solutions)

        best = min(pool, key=lambda pat: (cost(pat), remaining.index(pat)))
        remaining.remove(best)
        solutions = [ext for sol in solutions for ext in _matches(kg, best, sol)]
        bound.update(v.name for v in best.variables())
    if remaining:
        return []
    return solutions


def evaluate(kg: KnowledgeGraph, q: SelectQuery) -> ResultTable:
    solutions = solve_bgp(kg, q.where)
    if q.is_count:
        spec = q.projection
        values = [sol[spec.counted.name] for sol in solutions]
        n = len(set(values)) if spec.distinct else len(values)
        return ResultTable([spec.alias.name], [{spec.alias.name: integer_literal(n)}])
    names = q.result_vars
    rows = [{n: sol[n] for n in names} for sol in solutions]
    if q.distinct:
        unique = {}
        for row in rows:
            unique.setdefault(tuple(row[n] for n in names), row)
        rows = list(unique.values())
    rows.sort(key=lambda r: _row_key(r, names))
    return ResultTable(names, rows)


# --- results JSON -------------------------------------------------------------

class MalformedResponse(ValueError):
    pass


def _binding(node: Node) -> dict:
    if isinstance(node, Iri):
        return {"type": "uri", "value": node.value}
    out = {"type": "literal", "value": node.lexical}
    if node.lang:
        out["xml:lang"] = node.lang
    elif node.datatype:
        out["datatype"] = node.datatype.value
    return out


def results_to_dict(t: ResultTable) -> dict:
    return {
        "head": {"vars": list(t.vars)},
        "results": {"bindings": [{v: _binding(row[v]) for v in t.vars} for row in t.rows]},
    }


def serialize_results(t: ResultTable) -> str:
    return json.dumps(results_to_dict(t), ensure_ascii=False, separators=(",", ":"))


def _node_from_binding(b) -> Node:
    if not isinstance(b, dict) or "value" not in b or not isinstance(b["value"], str):
        raise MalformedResponse(f"bad binding object: {b!r}")
    kind = b.get("type")
    if kind == "uri":
        return Iri(b["value"])
    if kind in ("literal", "typed-literal"):
        return Literal(b["value"], lang=b.get("xml:lang"), datatype=b.get("datatype"))
    raise MalformedResponse(f"unsupported binding type: {kind!r}")


def parse_results(text: str) -> ResultTable:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedResponse(f"invalid JSON: {exc}") from None
    try:
        names = doc["head"]["vars"]
        bindings = doc["results"]["bindings"]
        if not isinstance(names, list) or not isinstance(bindings, list):
            raise TypeError
        rows = []
        for b in bindings:
            if set(b) != set(names):
                raise MalformedResponse(f"binding does not cover head vars: {sorted(b)}")
            rows.append({n: _node_from_binding(b[n]) for n in names})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedResponse):
            raise
        raise MalformedResponse(f"not a SPARQL results document: {exc}") from None
    return ResultTable(list(names), rows)


# --- remote endpoint ----------------------------------------------------------

class EndpointError(RuntimeError):
    pass


class NetworkError(EndpointError):
    pass


class HttpStatusError(EndpointError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"endpoint returned HTTP {code}")
        self.code = code
        self.body = body


class QueryTimeout(EndpointError):
    pass


def remote_query(endpoint: str, q: Union[SelectQuery, str], timeout: float = 30.0,
                 session: Optional[requests.Session] = None) -> ResultTable:
    """POST a query to a SPARQL endpoint and parse the JSON results."""
    text = q if isinstance(q, str) else serialize_query(q)
    http = session or requests
    try:
        resp = http.post(endpoint, data={"query": text}, timeout=timeout,
                         headers={"Accept": RESULTS_MEDIA_TYPE})
    except requests.Timeout as exc:
        raise QueryTimeout(f"no response from {endpoint} within {timeout}s") from exc
    except requests.RequestException as exc:
        raise NetworkError(str(exc)) from exc
    if resp.status_code != 200:
        raise HttpStatusError(resp.status_code, resp.text[:200])
    return parse_results(resp.text)
