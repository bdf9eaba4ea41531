"""Hierarchical forwarding graphs: loading, fact extraction, path search and
topology property checks.

Document format (JSON)::

    {"id": "svc",
     "nodes": [{"id": "fw", "kind": "vnf", "attrs": {}}, ...],
     "links": [{"src": "sap1", "dst": "fw", "attrs": {}}, ...],
     "decompositions": {"fw": "fw-impl"},
     "children": [{"id": "fw-impl", "nodes": [...], ...}]}

A decomposed node is realized by the child graph it names; ``children`` may
nest to any depth, and a decomposition may reference any graph declared
anywhere in the document.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

NODE_KINDS = ("vnf", "sap", "port")
DEFAULT_MAX_PATHS = 10_000


class SchemaError(ValueError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class DanglingLink(ValueError):
    pass


class CyclicDecomposition(ValueError):
    pass


class UnknownNode(KeyError):
    def __str__(self):
        return f"unknown node {self.args[0]!r}"


@dataclass(frozen=True)
class Node:
    id: str
    kind: str = "vnf"
    attrs: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    attrs: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass
class NfFg:
    """One level of a forwarding graph plus its decomposed sub-graphs.

    ``decompositions`` maps a node id of this graph to the child graph that
    realizes it; the child graphs themselves are in ``children``.
    """

    id: str
    nodes: dict[str, Node] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)
    decompositions: dict[str, "NfFg"] = field(default_factory=dict)

    def __post_init__(self):
        self._succ: dict[str, list[str]] | None = None

    def successors(self, node_id: str) -> list[str]:
        if self._succ is None:
            succ: dict[str, set[str]] = {n: set() for n in self.nodes}
            for ln in self.links:
                succ[ln.src].add(ln.dst)
            self._succ = {k: sorted(v) for k, v in succ.items()}
        return self._succ[node_id]

    def walk(self):
        """Yield this graph and every graph below it, depth first."""
        yield self
        for nid in sorted(self.decompositions):
            yield from self.decompositions[nid].walk()

    def leaves(self, node_id: str) -> list[str]:
        """Undecomposed nodes realizing ``node_id`` (itself if a leaf)."""
        child = self.decompositions.get(node_id)
        if child is None:
            return [node_id]
        out = []
        for nid in sorted(child.nodes):
            out.extend(child.leaves(nid))
        return out

    def find(self, node_id: str) -> "NfFg | None":
        """The graph, at any depth, that declares ``node_id``."""
        for g in self.walk():
            if node_id in g.nodes:
                return g
        return None

    def to_document(self) -> dict:
        children = []
        seen = set()
        for g in self.decompositions.values():
            if g.id not in seen:
                seen.add(g.id)
                children.append(g.to_document())
        return {
            "id": self.id,
            "nodes": [{"id": n.id, "kind": n.kind, "attrs": dict(n.attrs)}
                      for n in self.nodes.values()],
            "links": [{"src": ln.src, "dst": ln.dst, "attrs": dict(ln.attrs)} for ln in self.links],
            "decompositions": {k: g.id for k, g in self.decompositions.items()},
            "children": children,
        }


def load(document: Union[dict, str, Path]) -> NfFg:
    """Build an :class:`NfFg` from a parsed document or a JSON file path."""
    if isinstance(document, (str, Path)):
        with open(document, encoding="utf-8") as fh:
            document = json.load(fh)
    registry: dict[str, dict] = {}
    _collect(document, "$", registry)
    root_id = document["id"]

    edges = {gid: list(doc.get("decompositions", {}).values()) for gid, (doc, _) in registry.items()}
    _check_acyclic(root_id, edges)

    built: dict[str, NfFg] = {}

    def build(gid: str) -> NfFg:
        if gid in built:
            return built[gid]
        doc, path = registry[gid]
        g = NfFg(gid)
        for i, nd in enumerate(doc.get("nodes", [])):
            npath = f"{path}.nodes[{i}]"
            if not isinstance(nd, dict) or not isinstance(nd.get("id"), str) or not nd["id"]:
                raise SchemaError(npath, "node needs a non-empty string 'id'")
            kind = nd.get("kind", "vnf")
            if kind not in NODE_KINDS:
                raise SchemaError(npath, f"kind must be one of {NODE_KINDS}, got {kind!r}")
            if nd["id"] in g.nodes:
                raise SchemaError(npath, f"duplicate node id {nd['id']!r}")
            g.nodes[nd["id"]] = Node(nd["id"], kind, dict(nd.get("attrs") or {}))
        for i, ld in enumerate(doc.get("links", [])):
            lpath = f"{path}.links[{i}]"
            if not isinstance(ld, dict) or "src" not in ld or "dst" not in ld:
                raise SchemaError(lpath, "link needs 'src' and 'dst'")
            for end in ("src", "dst"):
                if ld[end] not in g.nodes:
                    raise DanglingLink(f"{lpath}: {end} {ld[end]!r} not a node of graph {gid!r}")
            g.links.append(Link(ld["src"], ld["dst"], dict(ld.get("attrs") or {})))
        for nid, child in (doc.get("decompositions") or {}).items():
            if nid not in g.nodes:
                raise SchemaError(f"{path}.decompositions", f"{nid!r} is not a node of {gid!r}")
            g.decompositions[nid] = build(child)
        built[gid] = g
        return g

    return build(root_id)


def _collect(doc, path: str, registry: dict) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(path, "graph must be an object")
    gid = doc.get("id")
    if not isinstance(gid, str) or not gid:
        raise SchemaError(path, "graph needs a non-empty string 'id'")
    if gid in registry:
        raise SchemaError(path, f"duplicate graph id {gid!r}")
    for key, typ in (("nodes", list), ("links", list), ("decompositions", dict), ("children", list)):
        if key in doc and not isinstance(doc[key], typ):
            raise SchemaError(f"{path}.{key}", f"must be a {typ.__name__}")
    registry[gid] = (doc, path)
    for i, child in enumerate(doc.get("children", [])):
        _collect(child, f"{path}.children[{i}]", registry)
    for nid, child in (doc.get("decompositions") or {}).items():
        if not isinstance(child, str):
            raise SchemaError(f"{path}.decompositions.{nid}", "must name a child graph id")


def _check_acyclic(root: str, edges: dict) -> None:
    state: dict[str, int] = {}

    def visit(gid: str, trail: list[str]) -> None:
        if gid not in edges:
            raise SchemaError("$", f"decomposition references unknown graph {gid!r}")
        if state.get(gid) == 1:
            raise CyclicDecomposition(" -> ".join(trail + [gid]))
        if state.get(gid) == 2:
            return
        state[gid] = 1
        for child in edges[gid]:
            visit(child, trail + [gid])
        state[gid] = 2

    visit(root, [])


# -- Datalog facts ------------------------------------------------------------

Fact = tuple


@dataclass
class DatalogFacts:
    """Ground atoms over ``node/1``, ``link/2`` and ``sub/2``."""

    atoms: list[Fact] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def as_set(self) -> set[Fact]:
        return set(self.atoms)

    def by_predicate(self, name: str) -> list[Fact]:
        return [a for a in self.atoms if a[0] == name]


def to_facts(g: NfFg) -> DatalogFacts:
    """Project ``g`` and all of its sub-graphs onto ground facts."""
    atoms: list[Fact] = []
    seen_graphs = set()
    for graph in g.walk():
        if graph.id in seen_graphs:
            continue
        seen_graphs.add(graph.id)
        atoms.extend(("node", nid) for nid in graph.nodes)
        atoms.extend(("link", ln.src, ln.dst) for ln in graph.links)
        for parent, child in graph.decompositions.items():
            atoms.extend(("sub", parent, cid) for cid in child.nodes)
    return DatalogFacts(atoms)


def from_facts(facts: Iterable[Fact], graph_id: str = "g") -> NfFg:
    """Rebuild a graph whose fact projection equals ``facts``.

    Level structure is recovered from ``sub``; each decomposed node gets a
    child graph named ``<node>.sub``.
    """
    facts = list(facts)
    nodes = [a[1] for a in facts if a[0] == "node"]
    links = [(a[1], a[2]) for a in facts if a[0] == "link"]
    subs = [(a[1], a[2]) for a in facts if a[0] == "sub"]
    parent_of = {c: p for p, c in subs}
    level: dict[str | None, NfFg] = {None: NfFg(graph_id)}
    for p in dict.fromkeys(p for p, _ in subs):
        level[p] = NfFg(f"{p}.sub")
    for n in nodes:
        level[parent_of.get(n)].nodes[n] = Node(n)
    for s, d in links:
        level[parent_of.get(s)].links.append(Link(s, d))
    for p, _ in subs:
        level[parent_of.get(p)].decompositions[p] = level[p]
    return level[None]


# -- paths and properties -----------------------------------------------------

@dataclass
class PathResult:
    paths: list[list[str]]
    truncated: bool = False

    def __len__(self):
        return len(self.paths)


def _require(g: NfFg, *ids: str) -> None:
    for i in ids:
        if i not in g.nodes:
            raise UnknownNode(i)


def _transit_ok(g: NfFg, nid: str, src: str, dst: str) -> bool:
    # SAPs are endpoints only: never interior hops
    return nid in (src, dst) or g.nodes[nid].kind != "sap"


def iter_paths(g: NfFg, src: str, dst: str, avoid: frozenset = frozenset()):
    """Yield simple src->dst paths in lexicographic order of node ids."""
    _require(g, src, dst)
    if src == dst:
        yield [src]
        return
    path = [src]
    on_path = {src}
    stack = [iter(g.successors(src))]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            on_path.discard(path.pop())
            continue
        if nxt in on_path or nxt in avoid:
            continue
        if nxt == dst:
            yield path + [dst]
            continue
        if not _transit_ok(g, nxt, src, dst):
            continue
        path.append(nxt)
        on_path.add(nxt)
        stack.append(iter(g.successors(nxt)))


def paths(g: NfFg, src: str, dst: str, max_paths: int = DEFAULT_MAX_PATHS) -> PathResult:
    """All simple directed paths from ``src`` to ``dst`` (first ``max_paths``)."""
    out = []
    for p in iter_paths(g, src, dst):
        if len(out) == max_paths:
            return PathResult(out, truncated=True)
        out.append(p)
    return PathResult(out)


@dataclass(frozen=True)
class Reachability:
    src: str
    dst: str


@dataclass(frozen=True)
class Isolation:
    """No src->dst path passes through ``mb``."""

    src: str
    dst: str
    mb: str


@dataclass(frozen=True)
class NodeTraversal:
    """Every src->dst path passes through ``mb``."""

    src: str
    dst: str
    mb: str


Property = Union[Reachability, Isolation, NodeTraversal]


@dataclass
class Verdict:
    holds: bool
    witness: list[str] | None = None

    def to_dict(self) -> dict:
        return {"holds": self.holds, "witness": self.witness}


def check(g: NfFg, prop: Property) -> Verdict:
    """Evaluate a topology property.

    Witnesses: for Reachability the first path found; for Isolation a path
    through the middlebox when violated; for NodeTraversal a path avoiding
    it when violated. With no src->dst path at all, Isolation and
    NodeTraversal both hold vacuously.
    """
    if isinstance(prop, Reachability):
        _require(g, prop.src, prop.dst)
        p = _shortest(g, prop.src, prop.dst, avoid=frozenset())
        return Verdict(p is not None, p)
    _require(g, prop.src, prop.dst, prop.mb)
    if isinstance(prop, NodeTraversal):
        if prop.mb in (prop.src, prop.dst):
            return Verdict(True, None)
        p = _shortest(g, prop.src, prop.dst, avoid=frozenset({prop.mb}))
        return Verdict(p is None, p)
    if isinstance(prop, Isolation):
        for p in iter_paths(g, prop.src, prop.dst):
            if prop.mb in p:
                return Verdict(False, p)
        return Verdict(True, None)
    raise TypeError(f"unsupported property {prop!r}")


def _shortest(g: NfFg, src: str, dst: str, avoid: frozenset) -> list[str] | None:
    if src == dst:
        return [src]
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.successors(u):
            if v in prev or v in avoid:
                continue
            if v != dst and not _transit_ok(g, v, src, dst):
                continue
            prev[v] = u
            if v == dst:
                out = [v]
                while prev[out[-1]] is not None:
                    out.append(prev[out[-1]])
                return out[::-1]
            queue.append(v)
    return None
