"""``kgqa`` command line.

Exit codes: 0 success, 1 pipeline or domain error, 2 usage error.
Settings resolve as flags, then ``KGQA_*`` environment variables, then the
JSON file given by ``--config``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .adapter import AdapterError, AdapterSpec
from .decomposer import DecompositionError, ExternalDecomposer
from .evaluation import EmptySplit, format_table, run_eval
from .executor import Components, LocalBackend, Pipeline, PipelineError, RemoteBackend
from .linker import HttpEmbedder, LinkerConfig, LinkingError, TrigramEmbedder
from .mrdcpq import FormatError, load_dataset, parse_decomposition, serialize, validate
from .qgen import CompileError, QgenConfig, compile_joined
from .sparql import (EndpointError, MalformedResponse, QuerySyntaxError, UnsupportedFeature,
                     evaluate, parse_select, remote_query, serialize_query, serialize_results)
from .store import ABSTRACT_PREDICATE, LABEL_PREDICATE, MalformedLine, load_graph, serialize_ntriples

DEFAULTS = {
    "kg": None,
    "endpoint": None,
    "json": False,
    "jobs": 1,
    "label_pred": LABEL_PREDICATE,
    "abstract_pred": ABSTRACT_PREDICATE,
    "decomposer": "pattern",
    "embedder": "reference",
    "candidates": 5,
    "qgen": "rule",
    "relation_threshold": 0.5,
    "timeout": 30.0,
}
_TYPES = {"json": lambda v: str(v).lower() in ("1", "true", "yes"), "jobs": int, "candidates": int,
          "relation_threshold": float, "timeout": float}


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--kg", help="N-Triples file to load as the local graph")
    g.add_argument("--endpoint", help="remote SPARQL endpoint URL")
    g.add_argument("--json", action="store_const", const=True, help="JSON output")
    g.add_argument("--config", help="JSON file with default settings")
    g.add_argument("--jobs", type=int, help="worker threads for eval")
    g.add_argument("--label-pred", dest="label_pred", help="label predicate IRI")
    g.add_argument("--abstract-pred", dest="abstract_pred", help="abstract predicate IRI")
    g.add_argument("--decomposer", help="pattern | extern:<cmd> | http:<url>")
    g.add_argument("--embedder", help="reference | http:<url>")
    g.add_argument("--candidates", type=int, help="linking candidates per mention (default 5)")
    g.add_argument("--qgen", help="rule | http:<url>")
    g.add_argument("--relation-threshold", dest="relation_threshold", type=float,
                   help="minimum label similarity for relation resolution (default 0.5)")
    g.add_argument("--timeout", type=float, help="seconds for remote calls (default 30)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="kgqa", parents=[common],
                                     description="Multi-hop question answering over an RDF graph.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="validate and summarize an N-Triples file")
    p.add_argument("--out", help="write the normalized graph here")

    p = sub.add_parser("ask", parents=[common], help="answer a question end to end")
    p.add_argument("question")

    for name, text in (("decompose", "decompose a question"),
                       ("link", "recognize and link the anchor entity"),
                       ("compile", "compile a question to SPARQL")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("question_pos", nargs="?", metavar="QUESTION")
        p.add_argument("--question")
        if name != "decompose":
            p.add_argument("--decomposition", help="use this decomposition instead of decomposing")

    p = sub.add_parser("query", parents=[common], help="run a SPARQL SELECT query")
    p.add_argument("--sparql", help="query text")
    p.add_argument("--file", help="read the query from a file")

    p = sub.add_parser("eval", parents=[common], help="score the pipeline on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    return parser


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> dict:
    file_cfg = {}
    config_path = getattr(args, "config", None) or environ.get("KGQA_CONFIG")
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    out = {}
    for key, default in DEFAULTS.items():
        value = getattr(args, key, None)
        if value is None:
            env = environ.get("KGQA_" + key.upper())
            if env is not None:
                value = env
            elif key in file_cfg:
                value = file_cfg[key]
            else:
                value = default
        try:
            out[key] = _TYPES[key](value) if key in _TYPES and value is not None else value
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    if out["candidates"] < 1:
        raise UsageError("--candidates must be at least 1")
    if not 0.0 <= out["relation_threshold"] <= 1.0:
        raise UsageError("--relation-threshold must be within [0, 1]")
    if out["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    return out


def _backend(cfg: dict):
    if bool(cfg["kg"]) == bool(cfg["endpoint"]):
        raise UsageError("give exactly one of --kg or --endpoint")
    if cfg["kg"]:
        try:
            kg = load_graph(cfg["kg"], cfg["label_pred"], cfg["abstract_pred"])
        except OSError as exc:
            raise UsageError(f"cannot read {cfg['kg']}: {exc.strerror}") from None
        return LocalBackend(kg)
    return RemoteBackend(cfg["endpoint"], cfg["timeout"], cfg["label_pred"], cfg["abstract_pred"])


def _adapter(spec: str, cfg: dict):
    try:
        return AdapterSpec.parse(spec, cfg["timeout"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _components(cfg: dict) -> Components:
    comp = Components()
    if cfg["decomposer"] != "pattern":
        comp.decomposer = ExternalDecomposer(_adapter(cfg["decomposer"], cfg))
    embedder = None
    if cfg["embedder"] != "reference":
        if not str(cfg["embedder"]).startswith("http:"):
            raise UsageError("--embedder must be 'reference' or http:<url>")
        embedder = HttpEmbedder(_adapter(cfg["embedder"], cfg))
    comp.linker = LinkerConfig(k=cfg["candidates"], embedder=embedder or TrigramEmbedder())
    adapter = None
    if cfg["qgen"] != "rule":
        if not str(cfg["qgen"]).startswith("http:"):
            raise UsageError("--qgen must be 'rule' or http:<url>")
        adapter = _adapter(cfg["qgen"], cfg)
    comp.qgen = QgenConfig(threshold=cfg["relation_threshold"], adapter=adapter)
    return comp


def _emit(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def _question(args) -> str:
    q = args.question or args.question_pos
    if not q:
        raise UsageError("a question is required")
    return q


def _decomposition(args, pipeline: Pipeline, question: str):
    if getattr(args, "decomposition", None):
        d = parse_decomposition(args.decomposition)
        problems = validate(d)
        if problems:
            raise FormatError(None, "; ".join(problems))
        return d
    return pipeline.decompose(question)


def cmd_ingest(args, cfg) -> int:
    if not cfg["kg"]:
        raise UsageError("ingest needs --kg")
    try:
        kg = load_graph(cfg["kg"], cfg["label_pred"], cfg["abstract_pred"])
    except OSError as exc:
        raise UsageError(f"cannot read {cfg['kg']}: {exc.strerror}") from None
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(serialize_ntriples(kg))
    summary = {"triples": len(kg), "entities": len(kg.labeled_entities()),
               "predicates": len(kg.predicates()), "labeled_predicates": len(kg.labeled_predicates())}
    if cfg["json"]:
        _emit(summary)
    else:
        print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_ask(args, cfg) -> int:
    pipeline = Pipeline(_backend(cfg), _components(cfg))
    try:
        report = pipeline.answer(args.question)
    except PipelineError as exc:
        if cfg["json"]:
            _emit(exc.report.to_dict())
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg["json"]:
        _emit(report.to_dict())
    else:
        for line in report.answers:
            print(line)
    if not report.answers:
        print("no answer: " + "; ".join(e["message"] for e in report.errors), file=sys.stderr)
        return 1
    return 0


def cmd_decompose(args, cfg) -> int:
    question = _question(args)
    comp = _components(cfg)
    if comp.decomposer is not None:
        d = comp.decomposer(question)
    else:
        d = Pipeline(_backend(cfg), comp).decompose(question)
    if cfg["json"]:
        _emit({"question": question, "decomposition": serialize(d),
               "steps": [type(s).__name__.lower() for s in d.steps]})
    else:
        print(serialize(d))
    return 0


def cmd_link(args, cfg) -> int:
    question = _question(args)
    pipeline = Pipeline(_backend(cfg), _components(cfg))
    d = _decomposition(args, pipeline, question)
    links = pipeline.link(d, question)
    if cfg["json"]:
        _emit({"question": question, "decomposition": serialize(d),
               "links": [lr.to_dict() for lr in links]})
    else:
        for lr in links:
            print(f"#{lr.mention.step_index}\t{lr.mention.text}\t{lr.chosen.value}")
    return 0


def cmd_compile(args, cfg) -> int:
    question = _question(args)
    pipeline = Pipeline(_backend(cfg), _components(cfg))
    d = _decomposition(args, pipeline, question)
    links = pipeline.link(d, question)
    plan = pipeline.compile(d, links)
    joined = None
    if pipeline.components.qgen.adapter is None:
        joined = serialize_query(compile_joined(d, links, pipeline.kg, resolver=pipeline.resolver))
    if cfg["json"]:
        _emit({"question": question, "decomposition": serialize(d), "plan": plan.to_dicts(),
               "joined": joined})
    else:
        for row in plan.to_dicts():
            detail = row.get("entity") or row.get("query") or f"COUNT #{row['source']}"
            print(f"#{row['step']}\t{detail}")
        if joined:
            print(f"joined\t{joined}")
    return 0


def cmd_query(args, cfg) -> int:
    if bool(args.sparql) == bool(args.file):
        raise UsageError("give exactly one of --sparql or --file")
    text = args.sparql
    if args.file:
        try:
            with open(args.file, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.file}: {exc.strerror}") from None
    q = parse_select(text)
    if bool(cfg["kg"]) == bool(cfg["endpoint"]):
        raise UsageError("give exactly one of --kg or --endpoint")
    if cfg["endpoint"]:
        table = remote_query(cfg["endpoint"], q, cfg["timeout"])
    else:
        table = evaluate(_backend(cfg).kg, q)
    print(serialize_results(table))
    return 0


def cmd_eval(args, cfg) -> int:
    dataset = load_dataset(args.dataset)
    for err in dataset.errors:
        print(f"warning: {args.dataset}: {err}", file=sys.stderr)
    pipeline = Pipeline(_backend(cfg), _components(cfg))
    metrics = run_eval(dataset.records, pipeline, args.split, cfg["jobs"])
    if cfg["json"]:
        out = metrics.to_dict()
        out["split_counts"] = dataset.split_counts()
        _emit(out)
    else:
        print(format_table(metrics))
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "ask": cmd_ask,
    "decompose": cmd_decompose,
    "link": cmd_link,
    "compile": cmd_compile,
    "query": cmd_query,
    "eval": cmd_eval,
}

DOMAIN_ERRORS = (PipelineError, DecompositionError, LinkingError, CompileError, AdapterError,
                 EndpointError, MalformedResponse, QuerySyntaxError, UnsupportedFeature, FormatError,
                 MalformedLine, EmptySplit)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad usage
    try:
        cfg = resolve_settings(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kgqa: error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        if getattr(args, "json", None):
            _emit({"errors": [{"error": type(exc).__name__, "message": str(exc)}]})
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
