"""In-memory RDF graph with SPO/POS/OSP indexes and an N-Triples subset reader."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional, Union

LABEL_PREDICATE = "http://www.w3.org/2000/01/rdf-schema#label"
ABSTRACT_PREDICATE = "http://kg/p/abstract"
XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"

_BAD_IRI_CHARS = re.compile(r"[\s<>]")
_LANG_RE = re.compile(r"[A-Za-z]+(-[A-Za-z0-9]+)*")


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class Iri:
    value: str

    def __post_init__(self):
        value = nfc(self.value)
        if not value or _BAD_IRI_CHARS.search(value):
            raise ValueError(f"invalid IRI: {self.value!r}")
        object.__setattr__(self, "value", value)

    @property
    def sort_key(self):
        return (0, self.value, "", "")

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Literal:
    lexical: str
    lang: Optional[str] = None
    datatype: Optional[Iri] = None

    def __post_init__(self):
        if self.lang is not None and self.datatype is not None:
            raise ValueError("literal cannot carry both a language tag and a datatype")
        if self.lang is not None and not _LANG_RE.fullmatch(self.lang):
            raise ValueError(f"invalid language tag: {self.lang!r}")
        if isinstance(self.datatype, str):
            object.__setattr__(self, "datatype", Iri(self.datatype))
        object.__setattr__(self, "lexical", nfc(self.lexical))

    @property
    def sort_key(self):
        return (1, self.lexical, self.lang or "", self.datatype.value if self.datatype else "")

    def __str__(self):
        return self.lexical


Node = Union[Iri, Literal]


def integer_literal(value: int) -> Literal:
    return Literal(str(value), datatype=Iri(XSD_INTEGER))


class Triple(NamedTuple):
    subject: Iri
    predicate: Iri
    object: Node

    @property
    def sort_key(self):
        return (self.subject.value, self.predicate.value, self.object.sort_key)


def make_triple(s, p, o) -> Triple:
    if not isinstance(s, Iri) or not isinstance(p, Iri):
        raise TypeError("subject and predicate must be IRIs")
    if not isinstance(o, (Iri, Literal)):
        raise TypeError("object must be an IRI or a Literal")
    return Triple(s, p, o)


class FrozenGraphError(RuntimeError):
    pass


class KnowledgeGraph:
    """Triple set indexed three ways, plus label and abstract lookups.

    Mutable until :meth:`freeze`; afterwards safe to share between readers.
    """

    def __init__(self, triples: Iterable[Triple] = (), label_predicate: str = LABEL_PREDICATE,
                 abstract_predicate: str = ABSTRACT_PREDICATE):
        self.label_predicate = Iri(label_predicate)
        self.abstract_predicate = Iri(abstract_predicate)
        self._spo: dict = {}
        self._pos: dict = {}
        self._osp: dict = {}
        self._labels: dict[Iri, set[str]] = {}
        self._abstracts: dict[Iri, set[str]] = {}
        self._declared_predicates: set[Iri] = set()
        self._size = 0
        self._frozen = False
        for t in triples:
            self.insert(t)

    def insert(self, t: Triple) -> "KnowledgeGraph":
        if self._frozen:
            raise FrozenGraphError("graph is frozen")
        s, p, o = make_triple(*t)
        objects = self._spo.setdefault(s, {}).setdefault(p, set())
        if o in objects:
            return self
        objects.add(o)
        self._pos.setdefault(p, {}).setdefault(o, set()).add(s)
        self._osp.setdefault(o, {}).setdefault(s, set()).add(p)
        self._size += 1
        if isinstance(o, Literal):
            if p == self.label_predicate:
                self._labels.setdefault(s, set()).add(o.lexical)
            elif p == self.abstract_predicate:
                self._abstracts.setdefault(s, set()).add(o.lexical)
        return self

    add = insert

    def declare_predicate(self, p: Iri) -> None:
        """Mark ``p`` as a predicate even if no stored triple uses it."""
        if self._frozen:
            raise FrozenGraphError("graph is frozen")
        self._declared_predicates.add(p)

    def freeze(self) -> "KnowledgeGraph":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __len__(self):
        return self._size

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.match())

    def __contains__(self, t) -> bool:
        s, p, o = t
        return o in self._spo.get(s, {}).get(p, ())

    def index_sizes(self) -> tuple[int, int, int]:
        def count(index):
            return sum(len(leaf) for inner in index.values() for leaf in inner.values())
        return count(self._spo), count(self._pos), count(self._osp)

    def match(self, s: Optional[Iri] = None, p: Optional[Iri] = None,
              o: Optional[Node] = None) -> list[Triple]:
        """Triples agreeing with every bound position, in SPO order."""
        if s is not None:
            by_p = self._spo.get(s)
            if not by_p:
                return []
            if p is not None:
                objs = by_p.get(p, ())
                if o is not None:
                    out = [Triple(s, p, o)] if o in objs else []
                else:
                    out = [Triple(s, p, x) for x in objs]
            elif o is not None:
                out = [Triple(s, x, o) for x in self._osp.get(o, {}).get(s, ())]
            else:
                out = [Triple(s, pp, x) for pp, objs in by_p.items() for x in objs]
        elif p is not None:
            by_o = self._pos.get(p)
            if not by_o:
                return []
            if o is not None:
                out = [Triple(x, p, o) for x in by_o.get(o, ())]
            else:
                out = [Triple(x, p, oo) for oo, subs in by_o.items() for x in subs]
        elif o is not None:
            out = [Triple(x, pp, o) for x, preds in self._osp.get(o, {}).items() for pp in preds]
        else:
            out = [Triple(ss, pp, x) for ss, by_p in self._spo.items()
                   for pp, objs in by_p.items() for x in objs]
        out.sort(key=lambda t: t.sort_key)
        return out

    def count(self, s=None, p=None, o=None) -> int:
        return len(self.match(s, p, o))

    def labels_of(self, e: Iri) -> set[str]:
        return set(self._labels.get(e, ()))

    def abstract_of(self, e: Iri) -> Optional[str]:
        abstracts = self._abstracts.get(e)
        return min(abstracts) if abstracts else None

    def predicates(self) -> list[Iri]:
        return sorted(set(self._pos) | self._declared_predicates, key=lambda i: i.value)

    def labeled_entities(self) -> list[Iri]:
        """Labeled IRIs that never occur as a predicate."""
        preds = set(self._pos) | self._declared_predicates
        return sorted((e for e in self._labels if e not in preds), key=lambda i: i.value)

    def labeled_predicates(self) -> list[Iri]:
        reserved = {self.label_predicate, self.abstract_predicate}
        return [p for p in self.predicates() if p in self._labels and p not in reserved]


# --- N-Triples subset -------------------------------------------------------

class MalformedLine(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _LineScanner:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def fail(self, reason):
        raise MalformedLine(self.lineno, reason)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def iri(self) -> Iri:
        end = self.text.find(">", self.pos + 1)
        if end < 0:
            self.fail("unbalanced '<'")
        raw = self.text[self.pos + 1:end]
        self.pos = end + 1
        try:
            return Iri(raw)
        except ValueError as exc:
            self.fail(str(exc))

    def literal(self) -> Literal:
        self.pos += 1
        buf = []
        while True:
            if self.pos >= len(self.text):
                self.fail("unterminated string literal")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                break
            if ch == "\\":
                nxt = self.text[self.pos + 1:self.pos + 2]
                if nxt in _ESCAPES:
                    buf.append(_ESCAPES[nxt])
                    self.pos += 2
                elif nxt in ("u", "U"):
                    width = 4 if nxt == "u" else 8
                    digits = self.text[self.pos + 2:self.pos + 2 + width]
                    if len(digits) != width or not all(c in "0123456789abcdefABCDEF" for c in digits):
                        self.fail("bad unicode escape")
                    buf.append(chr(int(digits, 16)))
                    self.pos += 2 + width
                else:
                    self.fail(f"bad escape \\{nxt}")
                continue
            buf.append(ch)
            self.pos += 1
        lang = datatype = None
        if self.peek() == "@":
            m = _LANG_RE.match(self.text, self.pos + 1)
            if not m:
                self.fail("bad language tag")
            lang = m.group(0)
            self.pos = m.end()
        if self.text.startswith("^^", self.pos):
            if lang is not None:
                self.fail("literal has both a language tag and a datatype")
            self.pos += 2
            if self.peek() != "<":
                self.fail("datatype must be an IRI")
            datatype = self.iri()
        return Literal("".join(buf), lang=lang, datatype=datatype)

    def term(self, position: str):
        self.skip_ws()
        ch = self.peek()
        if ch == "<":
            return self.iri()
        if ch == '"':
            if position != "object":
                self.fail(f"literal not allowed as {position}")
            return self.literal()
        if ch == "_":
            self.fail("blank nodes are not supported")
        if ch in ("", "."):
            self.fail(f"missing {position}")
        self.fail(f"unexpected character {ch!r} at column {self.pos + 1}")


def parse_ntriples(text: str) -> list[Triple]:
    """Parse an N-Triples document. Raises :class:`MalformedLine` on the first bad line."""
    triples = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sc = _LineScanner(line, lineno)
        s = sc.term("subject")
        p = sc.term("predicate")
        o = sc.term("object")
        sc.skip_ws()
        if sc.peek() != ".":
            sc.fail("missing terminal '.'")
        sc.pos += 1
        sc.skip_ws()
        rest = line[sc.pos:]
        if rest and not rest.startswith("#"):
            sc.fail(f"trailing content {rest!r}")
        triples.append(Triple(s, p, o))
    return triples


def _escape(text: str) -> str:
    return (text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            .replace("\r", "\\r").replace("\t", "\\t"))


def format_node(node: Node) -> str:
    """N-Triples (and SPARQL) surface form of a node."""
    if isinstance(node, Iri):
        return f"<{node.value}>"
    out = f'"{_escape(node.lexical)}"'
    if node.lang:
        out += "@" + node.lang
    elif node.datatype:
        out += f"^^<{node.datatype.value}>"
    return out


def serialize_ntriples(triples: Iterable[Triple]) -> str:
    return "".join(f"{format_node(s)} {format_node(p)} {format_node(o)} .\n" for s, p, o in triples)


def load_graph(path, label_predicate: str = LABEL_PREDICATE,
               abstract_predicate: str = ABSTRACT_PREDICATE) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as fh:
        triples = parse_ntriples(fh.read())
    return KnowledgeGraph(triples, label_predicate, abstract_predicate).freeze()
