import math
import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from obskit import nffg as nf
from obskit import query_engine as qe
from obskit.metric_store import MetricPoint, MetricStore
from conftest import CORPUS

TC = qe.parse_program("""
desc(X, Y) :- sub(X, Y).
desc(X, Y) :- sub(X, Z), desc(Z, Y).
""")


def atoms(s):
    return sorted(map(str, s))


def test_descendants_include_grandchildren():
    g = nf.load(CORPUS / "graphs/three_layer.json")
    got = qe.eval(TC, nf.to_facts(g), "desc(X, Y)")
    pairs = {a.args for a in got}
    assert ("vnf1-1", "vnf1-1b-x") in pairs and ("vnf1-1", "vnf1-1b") in pairs
    assert ("vnf1-1b", "vnf1-1b-x") in pairs


def test_empty_program_returns_matching_facts():
    facts = [("link", "a", "b"), ("link", "b", "c"), ("node", "a")]
    assert atoms(qe.eval([], facts, "link(a, Y)")) == ["link(a, b)"]


def test_rule_order_irrelevant():
    facts = nf.to_facts(nf.load(CORPUS / "graphs/three_layer.json"))
    assert qe.eval(TC, facts, "desc(X, Y)") == qe.eval(TC[::-1], facts, "desc(X, Y)")


def test_parser_variants():
    a = qe.parse_program("p(X) :- q(X), r(X).")
    b = qe.parse_program("p(X) <- q(X); r(X).  % comment")
    c = qe.parse_program("# comment\np(X) ← q(X), r(X).")
    assert a == b == c
    (r,) = qe.parse_program("p('Upper Case', 3).")
    assert r.head.args == ("Upper Case", 3)
    with pytest.raises(qe.DatalogSyntaxError):
        qe.parse_program("p(X :- q(X).")


def test_unsafe_rules():
    with pytest.raises(qe.UnsafeRule):
        qe.evaluate(qe.parse_program("p(X, Y) :- q(X)."), [])
    with pytest.raises(qe.UnsafeRule):
        qe.evaluate(qe.parse_program("p(X) :- q(Y), fn_lt(X, 3)."), [])
    with pytest.raises(qe.InvalidRule):
        qe.evaluate(qe.parse_program("p(X) :- q(X), fn_pow(X, 2, Y)."), [])


def test_builtins():
    prog = qe.parse_program("""
        total(N, S) :- cpu(N, A), mem(N, B), fn_add(A, B, S).
        hot(N) :- total(N, S), fn_gt(S, 100).
    """)
    facts = [("cpu", "a", 60), ("mem", "a", 50), ("cpu", "b", 10), ("mem", "b", 20)]
    rels = qe.evaluate(prog, facts)
    assert rels["total"] == {("a", 110), ("b", 30)} and rels["hot"] == {("a",)}


def test_nontermination_guard():
    prog = qe.parse_program("n(Y) :- n(X), fn_add(X, 1, Y).")
    with pytest.raises(qe.NonTermination):
        qe.evaluate(prog, [("n", 0)], max_iterations=50)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), max_size=40),
       st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), max_size=10))
def test_closure_matches_networkx_and_is_monotone(edges, extra):
    prog = qe.parse_program(qe.REACH_RULES)
    facts = [("link", a, b) for a, b in edges]
    got = qe.evaluate(prog, facts).get("reach", set())
    G = nx.DiGraph(edges)
    G.add_nodes_from(range(13))
    ref = {(a, b) for a in G for b in nx.descendants(G, a)}
    ref |= {(a, a) for a in G if _on_cycle(G, a)}
    assert got == ref
    more = qe.evaluate(prog, facts + [("link", a, b) for a, b in extra]).get("reach", set())
    assert got <= more
    assert qe.evaluate(prog, facts).get("reach", set()) == got


def _on_cycle(G, a):
    return any(G.has_edge(b, a) and (b == a or nx.has_path(G, a, b)) for b in G.predecessors(a))


# -- query layer --------------------------------------------------------------------

def cpu_store(values: dict) -> MetricStore:
    s = MetricStore()
    for node, vs in values.items():
        for k, v in enumerate(vs):
            s.put(MetricPoint("cpu", v, 1000 * k, {"node": node}))
    return s


def test_avg_cpu_examples():
    eng = qe.QueryEngine()
    leaf = nf.load({"id": "g", "nodes": [{"id": "x"}], "links": []})
    assert eng.query(qe.QueryRequest("avg_cpu", "x"), leaf, cpu_store({"x": [40]})).value == 40
    g = nf.load(CORPUS / "graphs/two_leaf.json")
    store = MetricStore.load(CORPUS / "graphs/two_leaf_metrics.jsonl")
    res = eng.query(qe.QueryRequest("avg_cpu", "svc1"), g, store)
    assert res.value == 50 and res.unit == "percent" and not res.gaps
    assert res.trace["tree"][0]["node"] == "svc1"


def test_avg_cpu_reports_missing_leaves():
    g = nf.load(CORPUS / "graphs/two_leaf.json")
    res = qe.QueryEngine().query(qe.QueryRequest("avg_cpu", "svc1"), g, cpu_store({"leaf1": [30]}))
    assert res.value == 30 and [x.subject for x in res.gaps] == ["leaf2"]


def delay_store(delays: dict) -> MetricStore:
    s = MetricStore()
    for (a, b), v in delays.items():
        s.put(MetricPoint("delay", v, 0, {"src": a, "dst": b}))
    return s


def test_e2e_delay_chain():
    g = nf.load({"id": "c", "nodes": [{"id": i} for i in "abc"],
                 "links": [{"src": "a", "dst": "b"}, {"src": "b", "dst": "c"}]})
    res = qe.QueryEngine().query(qe.QueryRequest("e2e_delay", ("a", "c")), g,
                                 delay_store({("a", "b"): 2.0, ("b", "c"): 3.0}))
    assert res.value == 5.0 and res.unit == "ms"


def test_parallel_path_combiners():
    g = nf.load(CORPUS / "graphs/diamond.json")
    store = delay_store({("a", "fw"): 2.0, ("fw", "c"): 3.0, ("a", "raw"): 3.0, ("raw", "c"): 4.0})
    eng = qe.QueryEngine()
    assert eng.query(qe.QueryRequest("e2e_delay", ("a", "c")), g, store).value == 7.0
    eng.register_library("best_delay", qe.REACH_RULES,
                         {"kind": "path_sum", "primitive": "delay", "unit": "ms", "combiner": "min"})
    assert eng.query(qe.QueryRequest("best_delay", ("a", "c")), g, store).value == 5.0


def test_unknown_metric_and_target():
    eng = qe.QueryEngine()
    g = nf.load(CORPUS / "graphs/two_leaf.json")
    with pytest.raises(qe.UnknownMetric):
        eng.query(qe.QueryRequest("nope", "svc1"), g, MetricStore())
    with pytest.raises(qe.UnknownTarget):
        eng.query(qe.QueryRequest("avg_cpu", "ghost"), g, MetricStore())


def test_derived_cache():
    eng = qe.QueryEngine()
    g = nf.load(CORPUS / "graphs/two_leaf.json")
    store = MetricStore.load(CORPUS / "graphs/two_leaf_metrics.jsonl")
    eng.query(qe.QueryRequest("avg_cpu", "svc1"), g, store)
    eng.query(qe.QueryRequest("avg_cpu", "net"), g, store)
    assert eng.cache_hits == 1


# -- random hierarchical graphs against flatten oracles ----------------------------

def random_hierarchy(rng: random.Random, max_nodes=1000, max_depth=4):
    """Document with nested decompositions, plus the flat list of leaf VNFs."""
    count = [0]
    leaves = []

    def level(gid, depth):
        width = rng.randint(1, 10 if depth else 40)
        nodes, children, decomp = [], [], {}
        for _ in range(width):
            if count[0] >= max_nodes:
                break
            count[0] += 1
            nid = f"n{count[0]}"
            kind = "sap" if depth == 0 and rng.random() < 0.1 else "vnf"
            nodes.append({"id": nid, "kind": kind})
            if kind == "vnf" and depth < max_depth - 1 and rng.random() < 0.6:
                child = level(f"{nid}.sub", depth + 1)
                if child["nodes"]:
                    decomp[nid] = child["id"]
                    children.append(child)
                    continue
            if kind == "vnf":
                leaves.append(nid)
        links = [{"src": a["id"], "dst": b["id"]} for a, b in zip(nodes, nodes[1:])]
        return {"id": gid, "nodes": nodes, "links": links, "decompositions": decomp, "children": children}

    return level("root", 0), leaves


def test_avg_cpu_equals_flatten_oracle_on_random_graphs():
    rng = random.Random(7)
    eng = qe.QueryEngine()
    for _ in range(200):
        doc, leaves = random_hierarchy(rng, max_nodes=rng.choice([20, 200, 1000]))
        vals = {leaf: [rng.uniform(0, 100) for _ in range(rng.randint(1, 3))] for leaf in leaves}
        res = eng.query(qe.QueryRequest("avg_cpu", "root"), nf.load(doc), cpu_store(vals))
        if not leaves:
            assert res.value is None
            continue
        ref = math.fsum(math.fsum(v) / len(v) for v in vals.values()) / len(vals)
        assert res.value == pytest.approx(ref, abs=1e-9)


def test_e2e_delay_equals_path_sum_on_random_chains():
    rng = random.Random(8)
    eng = qe.QueryEngine()
    for _ in range(200):
        n = rng.randint(2, 60)
        ids = [f"x{i}" for i in range(n)]
        doc = {"id": "chain", "nodes": [{"id": i} for i in ids],
               "links": [{"src": a, "dst": b} for a, b in zip(ids, ids[1:])]}
        delays = {(a, b): rng.uniform(0.1, 20) for a, b in zip(ids, ids[1:])}
        i, j = sorted(rng.sample(range(n), 2))
        res = eng.query(qe.QueryRequest("e2e_delay", (ids[i], ids[j])), nf.load(doc), delay_store(delays))
        ref = math.fsum(delays[(ids[k], ids[k + 1])] for k in range(i, j))
        assert res.value == pytest.approx(ref, abs=1e-9)
