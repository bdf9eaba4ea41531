"""``obskit`` command-line entry point.

Exit codes: 0 success, 1 domain failure (invalid program, property
violated, query unanswerable), 2 usage or configuration error. Results go
to stdout, diagnostics to stderr; ``--json`` makes stdout a single JSON
document.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import measure_lang as ml
from . import nffg as nf

OK, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json or text is None:
        out = json.dumps(payload, indent=2, sort_keys=True, default=str)
    else:
        out = text
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from None


def _load_graph(path: str) -> nf.NfFg:
    try:
        return nf.load(json.loads(_read(path)))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    except (nf.SchemaError, nf.DanglingLink, nf.CyclicDecomposition) as exc:
        raise UsageError(f"{path}: {type(exc).__name__}: {exc}") from None


# -- measure -----------------------------------------------------------------------

def cmd_measure(args) -> int:
    text = _read(args.file)
    try:
        spec = ml.parse_unchecked(text)
    except ml.MeasureSyntaxError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        if args.json:
            _emit(args, {"ok": False, "errors": [{"kind": "SyntaxError", "line": exc.line,
                                                  "col": exc.col, "message": str(exc)}]})
        return FAIL
    diags = ml.validate(spec)
    for d in diags:
        print(d.format(args.file), file=sys.stderr)
    payload: dict = {"ok": not diags,
                     "errors": [{"kind": d.kind, "name": d.name, "line": d.line, "col": d.col,
                                 "message": d.message} for d in diags]}
    text_lines = []
    if args.action == "parse":
        payload["ast"] = ml.to_json(spec)
    else:
        text_lines.append(f"{args.file}: {len(spec.measurements)} measurements, "
                          f"{len(spec.zones)} zones, {len(spec.reactions)} reactions, "
                          f"{len(diags)} errors")
    if args.nffg:
        rep = ml.bind(spec, _load_graph(args.nffg))
        payload["binding"] = {**rep.to_dict(), "unresolved_count": len(rep.unresolved)}
        for var, name in rep.unresolved:
            print(f"{args.file}: unresolved target {name!r} for {var}", file=sys.stderr)
        text_lines.append(f"{len(rep.unresolved)} unresolved")
        if not rep.ok:
            payload["ok"] = False
    if args.action == "parse":
        _emit(args, payload)
    else:
        _emit(args, payload, "\n".join(text_lines))
    return OK if payload["ok"] else FAIL


# -- graph -------------------------------------------------------------------------

def cmd_graph(args) -> int:
    g = _load_graph(args.nffg)
    if args.property in ("isolate", "traverse") and not args.mb:
        raise UsageError(f"--property {args.property} needs --mb")
    prop = {"reach": lambda: nf.Reachability(args.src, args.dst),
            "isolate": lambda: nf.Isolation(args.src, args.dst, args.mb),
            "traverse": lambda: nf.NodeTraversal(args.src, args.dst, args.mb)}[args.property]()
    try:
        v = nf.check(g, prop)
    except nf.UnknownNode as exc:
        raise UsageError(f"unknown node {exc.args[0]!r}") from None
    payload = {"property": args.property, "src": args.src, "dst": args.dst, "mb": args.mb,
               **v.to_dict()}
    word = "holds" if v.holds else "violated"
    text = f"{args.property} {args.src}->{args.dst}: {word}"
    if v.witness:
        text += "\nwitness: " + " -> ".join(v.witness)
    _emit(args, payload, text)
    return OK if v.holds else FAIL


# -- query -------------------------------------------------------------------------

def cmd_query(args) -> int:
    from .metric_store import MetricStore
    from .query_engine import QueryEngine, QueryRequest, UnknownMetric, UnknownTarget

    g = _load_graph(args.graph)
    if args.store:
        if not Path(args.store).exists():
            raise UsageError(f"{args.store}: no such store")
        store = MetricStore.load(args.store)
    else:
        store = MetricStore()
    target = args.target
    for sep in ("->", ","):
        if sep in target:
            target = tuple(x.strip() for x in target.split(sep, 1))
            break
    try:
        res = QueryEngine().query(QueryRequest(args.metric, target, args.t0, args.t1), g, store)
    except UnknownMetric as exc:
        raise UsageError(f"unknown metric {exc.args[0]!r}") from None
    except UnknownTarget as exc:
        print(f"unknown target {exc.args[0]!r}", file=sys.stderr)
        if args.json:
            _emit(args, {"value": None, "error": f"UnknownTarget: {exc.args[0]}"})
        return FAIL
    payload = {"metric": args.metric, "target": args.target, **res.to_dict()}
    for gap in res.gaps:
        print(f"missing primitive: {gap.to_dict()}", file=sys.stderr)
    _emit(args, payload, f"{args.metric}({args.target}) = {res.value} {res.unit}")
    return OK if res.value is not None else FAIL


# -- broker ------------------------------------------------------------------------

def cmd_broker(args) -> int:
    from .broker import TcpBroker, parse_address

    try:
        listen = parse_address(args.listen)
        parent = parse_address(args.parent) if args.parent else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        tb = TcpBroker(args.name, listen, parent, args.ping_interval)
    except OSError as exc:
        raise UsageError(f"cannot start broker: {exc}") from None
    host, port = tb.address
    print(json.dumps({"broker": args.name, "address": f"{host}:{port}"}), flush=True)
    try:
        tb.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        tb.stop()
    return OK


# -- sim ---------------------------------------------------------------------------

def cmd_sim(args) -> int:
    from .metric_store import MetricStore
    from .sim import ConfigError, run_scenario

    out_dir = None
    if args.out and not args.out.endswith(".json"):
        out_dir, args.out = args.out, None
    try:
        rep = run_scenario(args.config, seed=args.seed, store=MetricStore(), out=out_dir)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    d = rep.to_dict()
    _emit(args, json.loads(rep.to_json()))
    checks = d.get("checks", {})
    return OK if all(checks.values()) else FAIL


# -- argument parsing --------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                   help="print a single JSON document on stdout")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the RNG seed")
    p.add_argument("--out", default=argparse.SUPPRESS,
                   help="write output to this file (sim: directory for report and metrics)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="obskit", parents=[common],
                                 description="Programmable observability toolkit")
    sub = ap.add_subparsers(dest="group", required=True)

    m = sub.add_parser("measure", help="parse or check a MEASURE program")
    msub = m.add_subparsers(dest="action", required=True)
    for name in ("parse", "check"):
        q = msub.add_parser(name, parents=[common])
        q.add_argument("file")
        q.add_argument("--nffg", help="bind measurement targets against this NF-FG")
        q.set_defaults(fn=cmd_measure)

    g = sub.add_parser("graph", help="topology property checks")
    gsub = g.add_subparsers(dest="action", required=True)
    q = gsub.add_parser("check", parents=[common])
    q.add_argument("nffg")
    q.add_argument("--property", required=True, choices=["reach", "isolate", "traverse"])
    q.add_argument("--src", required=True)
    q.add_argument("--dst", required=True)
    q.add_argument("--mb")
    q.set_defaults(fn=cmd_graph)

    b = sub.add_parser("broker", help="run a TCP broker")
    bsub = b.add_subparsers(dest="action", required=True)
    q = bsub.add_parser("run", parents=[common])
    q.add_argument("--listen", default=":7000")
    q.add_argument("--parent", help="parent broker host:port")
    q.add_argument("--name", default="broker")
    q.add_argument("--ping-interval", type=float, default=None)
    q.set_defaults(fn=cmd_broker)

    qq = sub.add_parser("query", help="run an aggregation query")
    qsub = qq.add_subparsers(dest="action", required=True)
    q = qsub.add_parser("run", parents=[common])
    q.add_argument("--metric", required=True)
    q.add_argument("--target", required=True, help="node or graph id, or SRC->DST")
    q.add_argument("--graph", required=True, help="NF-FG JSON")
    q.add_argument("--store", help="metric store (JSON lines)")
    q.add_argument("--t0", type=float, default=float("-inf"))
    q.add_argument("--t1", type=float, default=float("inf"))
    q.set_defaults(fn=cmd_query)

    s = sub.add_parser("sim", help="run a scenario")
    ssub = s.add_subparsers(dest="action", required=True)
    q = ssub.add_parser("run", parents=[common])
    q.add_argument("config", help="scenario TOML or JSON")
    q.set_defaults(fn=cmd_sim)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    for k, default in (("json", False), ("seed", None), ("out", None)):
        if not hasattr(args, k):
            setattr(args, k, default)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"obskit: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
