"""Recursive queries over forwarding-graph facts.

A small positive Datalog: rules ``head :- body.`` over the ground facts
``node/1``, ``link/2`` and ``sub/2`` of an NF-FG, evaluated bottom-up with
the semi-naive strategy. Arguments starting with an upper-case letter or
``_`` are variables; everything else (lower-case names, numbers, quoted
strings) is a constant. Body literals are separated by ``,`` or ``;``
(both mean AND); ``<-`` is accepted for ``:-``.

Builtins are body literals named ``fn_*``:

=========================  ==============================================
``fn_add(X, Y, Z)``        Z = X + Y (also ``fn_sub``, ``fn_mul``, ``fn_div``)
``fn_min(X, Y, Z)``        Z = min(X, Y) (also ``fn_max``, ``fn_avg``)
``fn_lt(X, Y)``            X < Y (also ``le``, ``gt``, ``ge``, ``eq``, ``ne``)
=========================  ==============================================

On top sits a query layer: named libraries pair a rule set with an
aggregation recipe and answer metric requests (``avg_cpu``, ``e2e_delay``)
by decomposing them into primitive metric-store lookups.
"""

from __future__ import annotations

import hashlib
import math
import operator
import re
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import nffg as nf
from .metric_store import MetricStore

# -- terms, atoms, rules ---------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


def is_var(t) -> bool:
    return isinstance(t, Var)


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple

    @property
    def is_builtin(self) -> bool:
        return self.pred.startswith("fn_")

    def variables(self) -> set:
        return {a for a in self.args if is_var(a)}

    def __str__(self):
        return f"{self.pred}({', '.join(_fmt_term(a) for a in self.args)})"


def _fmt_term(t) -> str:
    if is_var(t):
        return t.name
    if isinstance(t, str) and re.fullmatch(r"[a-z][A-Za-z0-9_]*", t):
        return t
    if isinstance(t, str):
        return "'" + t.replace("\\", "\\\\").replace("'", "\\'") + "'"
    return repr(t)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple

    def __str__(self):
        return f"{self.head} :- {', '.join(map(str, self.body))}." if self.body else f"{self.head}."


class UnsafeRule(ValueError):
    pass


class InvalidRule(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


class DatalogSyntaxError(ValueError):
    pass


_ARITH = {"fn_add": operator.add, "fn_sub": operator.sub, "fn_mul": operator.mul,
          "fn_div": operator.truediv, "fn_min": min, "fn_max": max,
          "fn_avg": lambda a, b: (a + b) / 2.0}
_TESTS = {"fn_lt": operator.lt, "fn_le": operator.le, "fn_gt": operator.gt,
          "fn_ge": operator.ge, "fn_eq": operator.eq, "fn_ne": operator.ne}


def check_rule(rule: Rule) -> None:
    """Range restriction: head and builtin inputs must be bound by the body."""
    bound: set = set()
    for lit in rule.body:
        if not lit.is_builtin:
            bound |= lit.variables()
    pending = [lit for lit in rule.body if lit.is_builtin]
    for lit in pending:
        if lit.pred not in _ARITH and lit.pred not in _TESTS:
            raise InvalidRule(f"unknown builtin {lit.pred}")
        want = 3 if lit.pred in _ARITH else 2
        if len(lit.args) != want:
            raise InvalidRule(f"{lit.pred} takes {want} arguments")
    progress = True
    while pending and progress:
        progress = False
        for lit in list(pending):
            ins = lit.args[:2]
            if all(not is_var(a) or a in bound for a in ins):
                if lit.pred in _ARITH and is_var(lit.args[2]):
                    bound.add(lit.args[2])
                pending.remove(lit)
                progress = True
    if pending:
        raise UnsafeRule(f"unbound builtin input in rule {rule}")
    free = rule.head.variables() - bound
    if free:
        raise UnsafeRule(f"head variable(s) {sorted(v.name for v in free)} not bound in {rule}")


# -- parser ----------------------------------------------------------------------

_TOK = re.compile(r"""
    (?P<ws>\s+|%[^\n]*|\#[^\n]*)
  | (?P<imp>:-|<-|←)
  | (?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>'(?:\\.|[^'\\])*'|"(?:\\.|[^"\\])*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)
  | (?P<punct>[(),;.])
""", re.VERBOSE)


def _lex(text: str) -> list:
    out, pos = [], 0
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            line = text.count("\n", 0, pos) + 1
            raise DatalogSyntaxError(f"line {line}: unexpected {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(0), text.count("\n", 0, pos) + 1))
        pos = m.end()
    out.append(("eof", "", text.count("\n") + 1))
    return out


class _DParser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind: str, text: str | None = None):
        k, t, line = self.toks[self.i]
        if k != kind or (text is not None and t != text):
            raise DatalogSyntaxError(f"line {line}: expected {text or kind}, found {t or 'end of input'!r}")
        self.i += 1
        return t

    def term(self):
        k, t, line = self.peek()
        self.i += 1
        if k == "num":
            return float(t) if any(c in t for c in ".eE") else int(t)
        if k == "str":
            return re.sub(r"\\(.)", r"\1", t[1:-1])
        if k == "name":
            return Var(t) if (t[0].isupper() or t[0] == "_") else t
        raise DatalogSyntaxError(f"line {line}: expected a term, found {t!r}")

    def atom(self) -> Atom:
        pred = self.take("name")
        args = []
        if self.peek()[1] == "(":
            self.take("punct", "(")
            if self.peek()[1] != ")":
                args.append(self.term())
                while self.peek()[1] == ",":
                    self.i += 1
                    args.append(self.term())
            self.take("punct", ")")
        return Atom(pred, tuple(args))

    def program(self) -> list[Rule]:
        rules = []
        while self.peek()[0] != "eof":
            head = self.atom()
            body = []
            if self.peek()[0] == "imp":
                self.i += 1
                body.append(self.atom())
                while self.peek()[1] in (",", ";"):
                    self.i += 1
                    body.append(self.atom())
            self.take("punct", ".")
            rules.append(Rule(head, tuple(body)))
        return rules


def parse_program(text: str) -> list[Rule]:
    """Parse rules (and ground facts written as bodiless rules)."""
    rules = _DParser(text).program()
    for r in rules:
        if r.body:
            check_rule(r)
        elif r.head.variables():
            raise UnsafeRule(f"fact with variables: {r.head}")
    return rules


def parse_atom(text: str) -> Atom:
    p = _DParser(text.rstrip().rstrip("."))
    a = p.atom()
    if p.peek()[0] != "eof":
        raise DatalogSyntaxError(f"trailing input after atom in {text!r}")
    return a


# -- evaluation ------------------------------------------------------------------

Relation = set  # of argument tuples


def _facts_db(facts) -> dict[str, Relation]:
    db: dict[str, set] = defaultdict(set)
    atoms = facts.atoms if isinstance(facts, nf.DatalogFacts) else facts
    for a in atoms:
        if isinstance(a, Atom):
            db[a.pred].add(a.args)
        else:
            db[a[0]].add(tuple(a[1:]))
    return db


class _Index:
    """Hash indexes over relations keyed by bound argument positions."""

    def __init__(self):
        self._cache: dict = {}

    def lookup(self, name: str, rel: Relation, positions: tuple, key: tuple):
        if not positions:
            return rel
        ck = (name, id(rel), positions)
        idx = self._cache.get(ck)
        if idx is None:
            idx = defaultdict(list)
            for tup in rel:
                idx[tuple(tup[p] for p in positions)].append(tup)
            self._cache[ck] = idx
        return idx.get(key, ())


def _match(atom: Atom, tup: tuple, env: dict) -> dict | None:
    if len(tup) != len(atom.args):
        return None
    out = env
    for a, v in zip(atom.args, tup):
        if is_var(a):
            cur = out.get(a, _MISSING)
            if cur is _MISSING:
                if out is env:
                    out = dict(env)
                out[a] = v
            elif cur != v:
                return None
        elif a != v:
            return None
    return out


_MISSING = object()


def _order_body(body: tuple) -> list:
    """Ordinary atoms first (as written), builtins once their inputs are bound."""
    ordinary = [b for b in body if not b.is_builtin]
    builtins = [b for b in body if b.is_builtin]
    return ordinary + builtins


def _solve(body: list, rels: list, index: _Index, env: dict):
    if not body:
        yield env
        return
    lit, rest = body[0], body[1:]
    if lit.is_builtin:
        vals = [env.get(a, a) if is_var(a) else a for a in lit.args]
        try:
            if lit.pred in _TESTS:
                if _TESTS[lit.pred](vals[0], vals[1]):
                    yield from _solve(rest, rels[1:], index, env)
                return
            res = _ARITH[lit.pred](vals[0], vals[1])
        except (TypeError, ZeroDivisionError):
            return
        out = lit.args[2]
        if is_var(out) and out not in env:
            yield from _solve(rest, rels[1:], index, {**env, out: res})
        elif (env.get(out) if is_var(out) else out) == res:
            yield from _solve(rest, rels[1:], index, env)
        return
    name, rel = rels[0]
    positions, key = [], []
    for i, a in enumerate(lit.args):
        if not is_var(a):
            positions.append(i)
            key.append(a)
        elif a in env:
            positions.append(i)
            key.append(env[a])
    for tup in index.lookup(name, rel, tuple(positions), tuple(key)):
        e2 = _match(lit, tup, env)
        if e2 is not None:
            yield from _solve(rest, rels[1:], index, e2)


def _ground(head: Atom, env: dict) -> tuple:
    return tuple(env[a] if is_var(a) else a for a in head.args)


@dataclass
class EvalStats:
    iterations: int = 0
    derived: int = 0


def evaluate(program: Iterable[Rule], facts, max_iterations: int = 10_000,
             stats: EvalStats | None = None) -> dict[str, Relation]:
    """Least fixpoint of ``program`` over ``facts`` (semi-naive).

    Returns every relation, base and derived, as ``{pred: set of tuples}``.
    """
    rules = []
    db = _facts_db(facts)
    for r in program:
        if not r.body:
            if r.head.variables():
                raise UnsafeRule(f"fact with variables: {r.head}")
            db[r.head.pred].add(r.head.args)
            continue
        check_rule(r)
        rules.append((r, _order_body(r.body)))
    idb = {r.head.pred for r, _ in rules}
    total: dict[str, set] = defaultdict(set, {k: set(v) for k, v in db.items()})
    # first round: naive over the base facts
    delta: dict[str, set] = defaultdict(set)
    index = _Index()
    for r, body in rules:
        rels = [(b.pred, total.get(b.pred, set())) for b in body]
        for env in _solve(body, rels, index, {}):
            t = _ground(r.head, env)
            if t not in total[r.head.pred]:
                delta[r.head.pred].add(t)
    it = 1
    while any(delta.values()):
        if it >= max_iterations:
            raise NonTermination(f"no fixpoint after {max_iterations} iterations")
        for p, ts in delta.items():
            total[p] |= ts
        new: dict[str, set] = defaultdict(set)
        index = _Index()
        for r, body in rules:
            idb_pos = [i for i, b in enumerate(body) if not b.is_builtin and b.pred in idb]
            for i in idb_pos:
                d = delta.get(body[i].pred)
                if not d:
                    continue
                rels = [(f"{b.pred}#d" if j == i else b.pred, d if j == i else total.get(b.pred, set()))
                        for j, b in enumerate(body)]
                for env in _solve(body, rels, index, {}):
                    t = _ground(r.head, env)
                    if t not in total[r.head.pred]:
                        new[r.head.pred].add(t)
        delta = new
        it += 1
    if stats is not None:
        stats.iterations = it
        stats.derived = sum(len(v) for k, v in total.items()) - sum(len(v) for v in db.values())
    return dict(total)


def eval(program: Iterable[Rule], facts, query: Atom | str, max_iterations: int = 10_000) -> set[Atom]:
    """Atoms of ``query``'s predicate that unify with its pattern."""
    if isinstance(query, str):
        query = parse_atom(query)
    rels = evaluate(program, facts, max_iterations)
    out = set()
    for tup in rels.get(query.pred, ()):
        if _match(query, tup, {}) is not None:
            out.add(Atom(query.pred, tup))
    return out


# -- query libraries -------------------------------------------------------------

class UnknownMetric(KeyError):
    pass


class UnknownTarget(KeyError):
    pass


@dataclass(frozen=True)
class MissingPrimitive:
    subject: str
    metric: str

    def to_dict(self) -> dict:
        return {"subject": self.subject, "metric": self.metric}


COMBINERS = {
    "max": max,
    "min": min,
    "mean": lambda xs: math.fsum(xs) / len(xs),
}

DESCENDANT_RULES = """
desc(X, Y) :- sub(X, Y).
desc(X, Y) :- sub(X, Z), desc(Z, Y).
"""

REACH_RULES = """
reach(X, Y) :- link(X, Y).
reach(X, Y) :- link(X, Z), reach(Z, Y).
"""


@dataclass(frozen=True)
class Aggregation:
    """How a library turns derived atoms and primitives into one number.

    ``kind`` is ``leaf_mean`` (expand the target through the ``expand``
    predicate and average ``primitive`` over leaf VNFs) or ``path_sum``
    (sum ``primitive`` over links of each src->dst path, then combine
    parallel paths with ``combiner``).
    """

    kind: str
    primitive: str
    unit: str = ""
    combiner: str = "max"
    expand: str = "desc"
    reach: str = "reach"

    def __post_init__(self):
        if self.kind not in ("leaf_mean", "path_sum"):
            raise InvalidRule(f"unknown aggregation kind {self.kind!r}")
        if self.combiner not in COMBINERS:
            raise InvalidRule(f"unknown combiner {self.combiner!r}")


@dataclass(frozen=True)
class QueryLibrary:
    name: str
    rules: tuple
    aggregation: Aggregation


@dataclass(frozen=True)
class QueryRequest:
    metric: str
    target: object  # node/graph id or (src, dst)
    t0: float = -math.inf
    t1: float = math.inf


@dataclass
class QueryResult:
    value: float | None
    unit: str
    leaves: list
    trace: dict
    gaps: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "unit": self.unit,
                "leaves": [list(x) for x in self.leaves], "trace": self.trace,
                "gaps": [g.to_dict() for g in self.gaps]}


def _fingerprint(g: nf.NfFg) -> str:
    h = hashlib.sha1()
    for a in sorted(map(repr, nf.to_facts(g).atoms)):
        h.update(a.encode())
    return h.hexdigest()


class QueryEngine:
    """Library registry plus a cache of derived relations per graph version."""

    def __init__(self, max_iterations: int = 10_000):
        self.max_iterations = max_iterations
        self._libs: dict[str, QueryLibrary] = {}
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.cache_hits = 0
        self.register_library("avg_cpu", DESCENDANT_RULES,
                              Aggregation("leaf_mean", "cpu", unit="percent"))
        self.register_library("e2e_delay", REACH_RULES,
                              Aggregation("path_sum", "delay", unit="ms"))

    def register_library(self, name: str, rules, aggregation: Aggregation | Mapping) -> None:
        if isinstance(rules, str):
            rules = parse_program(rules)
        rules = tuple(rules)
        for r in rules:
            if r.body:
                check_rule(r)
        if isinstance(aggregation, Mapping):
            aggregation = Aggregation(**aggregation)
        with self._lock:
            self._libs[name] = QueryLibrary(name, rules, aggregation)
            self._cache = {k: v for k, v in self._cache.items() if k[0] != name}

    def libraries(self) -> list[str]:
        return sorted(self._libs)

    def derived(self, name: str, g: nf.NfFg) -> dict:
        lib = self._libs[name]
        key = (name, g.id, _fingerprint(g))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        rels = evaluate(lib.rules, nf.to_facts(g), self.max_iterations)
        with self._lock:
            self._cache[key] = rels
        return rels

    def query(self, req: QueryRequest, g: nf.NfFg, store: MetricStore) -> QueryResult:
        lib = self._libs.get(req.metric)
        if lib is None:
            raise UnknownMetric(req.metric)
        agg = lib.aggregation
        rels = self.derived(req.metric, g)
        if agg.kind == "leaf_mean":
            return self._leaf_mean(req, g, store, agg, rels)
        return self._path_sum(req, g, store, agg, rels)

    def _leaf_mean(self, req, g, store, agg, rels) -> QueryResult:
        target = req.target
        kinds = {n.id: n.kind for h in g.walk() for n in h.nodes.values()}
        if target == g.id:
            roots = sorted(g.nodes)
        elif target in kinds:
            roots = [target]
        else:
            raise UnknownTarget(target)
        children = defaultdict(list)
        for parent, child in rels.get("sub", ()):
            children[parent].append(child)
        expand = defaultdict(set)
        for x, y in rels.get(agg.expand, ()):
            expand[x].add(y)
        leaves = set()
        for r in roots:
            cand = expand.get(r, set()) | {r}
            leaves |= {y for y in cand if not children.get(y)}
        leaves = sorted(y for y in leaves if kinds.get(y, "vnf") == "vnf")
        vals, gaps = [], []
        for leaf in leaves:
            res = store.query_range(agg.primitive, {"node": leaf}, req.t0, req.t1, agg="avg")
            if res.empty:
                gaps.append(MissingPrimitive(leaf, agg.primitive))
            else:
                vals.append((leaf, res.value))

        def tree(n):
            return {"node": n, "children": [tree(c) for c in sorted(children.get(n, ()))]}

        trace = {"target": target, "tree": [tree(r) for r in roots]}
        value = math.fsum(v for _, v in vals) / len(vals) if vals else None
        return QueryResult(value, agg.unit, vals, trace, gaps)

    def _path_sum(self, req, g, store, agg, rels) -> QueryResult:
        try:
            src, dst = req.target
        except (TypeError, ValueError):
            raise UnknownTarget(f"{req.target!r} is not a (src, dst) pair") from None
        level = next((h for h in g.walk() if src in h.nodes and dst in h.nodes), None)
        if level is None:
            raise UnknownTarget(f"no graph level holds both {src} and {dst}")
        trace = {"target": [src, dst], "level": level.id, "paths": []}
        if src != dst and (src, dst) not in rels.get(agg.reach, ()):
            return QueryResult(None, agg.unit, [], trace, [MissingPrimitive(f"{src}->{dst}", "path")])
        found = nf.paths(level, src, dst)
        link_vals: dict = {}
        gaps, sums = [], []
        for path in found.paths:
            total, complete, hops = [], True, []
            for a, b in zip(path, path[1:]):
                if (a, b) not in link_vals:
                    res = store.query_range(agg.primitive, {"src": a, "dst": b}, req.t0, req.t1, agg="avg")
                    link_vals[(a, b)] = None if res.empty else res.value
                    if res.empty:
                        gaps.append(MissingPrimitive(f"{a}->{b}", agg.primitive))
                v = link_vals[(a, b)]
                hops.append([a, b, v])
                if v is None:
                    complete = False
                else:
                    total.append(v)
            s = math.fsum(total) if complete else None
            trace["paths"].append({"path": path, "links": hops, "sum": s})
            if complete:
                sums.append(s)
        trace["truncated"] = found.truncated
        if not found.paths:
            gaps.append(MissingPrimitive(f"{src}->{dst}", "path"))
        value = COMBINERS[agg.combiner](sums) if sums else None
        leaves = [[f"{a}->{b}", v] for (a, b), v in sorted(link_vals.items()) if v is not None]
        return QueryResult(value, agg.unit, leaves, trace, gaps)
