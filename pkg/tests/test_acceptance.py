"""Acceptance criteria 1-10, one test each.

Each test records a PASS or FAIL line (with its wall time) that is printed
in the pytest terminal summary; run ``python tests/test_acceptance.py`` to
see only these lines.
"""

import json
import math
import random
import sys
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import pytest

from obskit import broker as bk
from obskit import delaymon as dm
from obskit import measure_lang as ml
from obskit import nffg as nf
from obskit import query_engine as qe
from obskit import ratemon as rm
from obskit import sim
from obskit.cli import main as cli_main
from obskit.metric_store import MetricPoint, MetricStore
from obskit.special import chi2_ppf, erfinv, norm_ppf, t_ppf
from obskit.zone_engine import ZoneEngine

from conftest import ACCEPTANCE, CORPUS, read
from oracle_tables import CHI2_PPF, ERFINV, NORM_PPF, T_PPF
from test_delaymon import oracle_H, oracle_n
from test_nffg import oracle_paths, random_graph
from test_query_engine import cpu_store, delay_store, random_hierarchy

SCEN = CORPUS / "scenarios"


@contextmanager
def criterion(n: int, title: str, limit: float):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - t0
        assert elapsed < limit, f"runtime {elapsed:.1f}s exceeds {limit}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - t0
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f}s)"
        ACCEPTANCE[n] = line
        print(line)


# 1 -------------------------------------------------------------------------------

def _feed(engine, var, values, t0_ms, step_ms=1000):
    for k, v in enumerate(values):
        engine.ingest(MetricPoint(var, v, t0_ms + k * step_ms))


def test_criterion_01_measure_corpus():
    with criterion(1, "MEASURE corpus parses, round-trips and fires the expected reactions", 1.0):
        fig24 = ml.parse(read("cpu_latency.measure"))
        age = ml.parse(read("liveness_age.measure"))
        for spec in (fig24, age):
            assert ml.parse(ml.serialize(spec)) == spec

        e = ZoneEngine(fig24)
        _feed(e, "m1", [8.0] * 300, 1000)            # latency under 10 for 5 minutes
        _feed(e, "m2", [0.80] * 60, 241_000)         # CPU under 90% for the last minute
        assert e.evaluate(300_000) == [] and {"z2", "z3"} <= e.active
        _feed(e, "m1", [8.0] * 60, 301_000)
        _feed(e, "m2", [0.97] * 60, 301_000)         # CPU crosses 90%
        (cpu,) = e.evaluate(360_000)
        assert (cpu.action, cpu.topic, cpu.args["msg"]) == ("Publish", "alarm", "Warning CPU")
        _feed(e, "m1", [15.0] * 300, 361_000)        # latency crosses 10
        _feed(e, "m2", [0.97] * 300, 361_000)
        (lat,) = e.evaluate(660_000)
        assert (lat.action, lat.topic, lat.args["msg"]) == ("Publish", "alarm", "Warning latency")

        e = ZoneEngine(age)
        e.ingest(MetricPoint("m1", 3.0, 0))
        assert e.evaluate(20_000) == [] and e.active == {"z2"}
        (dead,) = e.evaluate(31_000)                 # 31 s without a result
        assert dead.action == "Publish" and dead.positional[0] == "alarm"
        assert dead.to_dict()["trigger"] == "z2->z1"


# 2 -------------------------------------------------------------------------------

def test_criterion_02_delay_precision():
    with criterion(2, "precision (0.90, 0.10): hit rates in [0.87, 0.94], cost decreasing", 120.0):
        rep = sim.run_scenario(SCEN / "precision.toml").to_dict()
        cells = rep["cells"]
        assert [c["shape"] for c in cells] == [1, 10, 50, 100]
        assert all(c["repetitions"] == 2000 for c in cells)
        for c in cells:
            assert 0.87 <= c["hit_rate"] <= 0.94, c
        costs = [c["mean_cost"] for c in cells]
        assert all(a > b for a, b in zip(costs, costs[1:])), costs


# 3 -------------------------------------------------------------------------------

def test_criterion_03_change_detection():
    with criterion(3, "change detection rows (0.95|0.99, 0.99, 0.05)", 300.0):
        r1 = sim.run_scenario(SCEN / "table2_row1.toml").to_dict()
        r5 = sim.run_scenario(SCEN / "table2_row5.toml").to_dict()
        for r in (r1, r5):
            assert r["total_changes"] == 1999
            assert r["valid"] + r["small"] + r["invalid"] == 1999
            assert abs(r["avg_samples"] / r["predicted_samples"] - 1.0) <= 0.25, r
        assert r1["valid_detection_rate"] >= 0.98
        assert r1["false_alarm_rate"] <= 0.035
        assert r5["false_alarm_rate"] <= 0.010


# 4 -------------------------------------------------------------------------------

def test_criterion_04_ratemon_ordering():
    with criterion(4, "RateMon detection/cost ordering over zeta, hb and T_p", 300.0):
        rep = sim.run_scenario(SCEN / "ratemon_sweep.toml").to_dict()
        cells = {(c["tp"], c["hb"], c["zeta"]): c for c in rep["cells"]}
        sweep = [cells[(10.0, 30.0, z)] for z in (1.2, 1.8, 2.4, 3.0)]
        det = [c["detection_ratio"] for c in sweep]
        cost = [c["sampling_cost"] for c in sweep]
        assert all(a <= b for a, b in zip(det, det[1:])), det
        assert all(a <= b for a, b in zip(cost, cost[1:])), cost
        assert cells[(10.0, 30.0, 1.8)]["detection_ratio"] >= cells[(10.0, 300.0, 1.8)]["detection_ratio"]
        assert cells[(100.0, 30.0, 1.8)]["detection_ratio"] >= 0.9


# 5 -------------------------------------------------------------------------------

def test_criterion_05_next_interval_endpoints():
    with criterion(5, "next_interval endpoints exact and strictly monotone", 10.0):
        rng = random.Random(5)
        grid = np.linspace(0.0, 1.0, 1000)
        for _ in range(100):
            lb = 10 ** rng.uniform(-3, 0)
            hb = lb * 10 ** rng.uniform(0.5, 4)
            pol = rm.ScalingPolicy(lb=lb, hb=hb, zeta=rng.uniform(0.3, 5))
            assert abs(rm.next_interval(0.0, pol) - hb) <= 1e-9 * max(1.0, hb)
            assert abs(rm.next_interval(1.0, pol) - lb) <= 1e-9 * max(1.0, lb)
            ts = [rm.next_interval(float(r), pol) for r in grid]
            assert all(a > b for a, b in zip(ts, ts[1:]))


# 6 -------------------------------------------------------------------------------

def _size_depth(doc, depth=1):
    sub = [_size_depth(c, depth + 1) for c in doc.get("children", ())]
    return len(doc["nodes"]) + sum(n for n, _ in sub), max([depth] + [d for _, d in sub])


def test_criterion_06_query_oracle():
    with criterion(6, "recursive avg_cpu and e2e_delay equal flatten/path-sum oracles", 120.0):
        rng = random.Random(606)
        eng = qe.QueryEngine()
        shapes = []
        for _ in range(200):
            doc, leaves = random_hierarchy(rng, max_nodes=rng.choice([50, 300, 1000]))
            g = nf.load(doc)
            shapes.append(_size_depth(doc))
            vals = {leaf: [rng.uniform(0, 100) for _ in range(rng.randint(1, 3))] for leaf in leaves}
            res = eng.query(qe.QueryRequest("avg_cpu", "root"), g, cpu_store(vals))
            if not leaves:
                assert res.value is None
                continue
            ref = math.fsum(math.fsum(v) / len(v) for v in vals.values()) / len(vals)
            assert abs(res.value - ref) <= 1e-9
        assert max(n for n, _ in shapes) == 1000 and max(d for _, d in shapes) == 4
        for _ in range(200):
            n = rng.randint(2, 80)
            ids = [f"x{i}" for i in range(n)]
            doc = {"id": "chain", "nodes": [{"id": i} for i in ids],
                   "links": [{"src": a, "dst": b} for a, b in zip(ids, ids[1:])]}
            delays = {(a, b): rng.uniform(0.1, 20) for a, b in zip(ids, ids[1:])}
            i, j = sorted(rng.sample(range(n), 2))
            res = eng.query(qe.QueryRequest("e2e_delay", (ids[i], ids[j])), nf.load(doc),
                            delay_store(delays))
            ref = math.fsum(delays[(ids[k], ids[k + 1])] for k in range(i, j))
            assert abs(res.value - ref) <= 1e-9


# 7 -------------------------------------------------------------------------------

def test_criterion_07_topology_oracle():
    with criterion(7, "topology verdicts equal exhaustive path enumeration on 500 digraphs", 60.0):
        rng = random.Random(707)
        for _ in range(500):
            g, G, kinds = random_graph(rng)
            s, d, m = (rng.choice(list(G)) for _ in range(3))
            paths = oracle_paths(G, kinds, s, d)
            reach = nf.check(g, nf.Reachability(s, d))
            assert reach.holds == bool(paths)
            if reach.holds:
                assert reach.witness in paths
            iso = nf.check(g, nf.Isolation(s, d, m))
            assert iso.holds == (not any(m in p for p in paths))
            if not iso.holds:
                assert iso.witness in paths and m in iso.witness
            trav = nf.check(g, nf.NodeTraversal(s, d, m))
            assert trav.holds == all(m in p for p in paths)
            if not trav.holds:
                assert trav.witness in paths and m not in trav.witness


# 8 -------------------------------------------------------------------------------

def test_criterion_08_broker_locality():
    with criterion(8, "broker locality, single parent crossing, exactly-once, UnknownDestination", 30.0):
        fab = bk.InProcFabric()
        fab.add_broker("R")
        fab.add_broker("A", "R")
        fab.add_broker("B", "R")
        a1, a2 = fab.add_client("a1", "A"), fab.add_client("a2", "A")
        b1 = fab.add_client("b1", "B")

        # (a) same-broker SEND and PUB
        a2.subscribe("alarm/congestion")
        before = fab.total_link_frames()
        a1.send("a2", "local")
        a1.publish("alarm/congestion", "local")
        assert fab.total_link_frames() == before
        assert len(a2.messages(bk.Command.DELIVER)) == 1
        assert len(a2.messages(bk.Command.DELIVER_PUB)) == 1

        # (b) cross-sibling SEND
        up, down = len(fab.link("A").frames), len(fab.link("B").frames)
        a1.send("b1", "across")
        assert [f.command for _, f in fab.link("A").frames[up:]] == [bk.Command.SEND]
        assert [f.command for _, f in fab.link("B").frames[down:]] == [bk.Command.SEND]
        assert [f.text for f in b1.messages(bk.Command.DELIVER)] == ["across"]

        # (c) 10 000 publications, 5 subscribers spread over the tree
        pub = fab.add_client("pub", "B")
        subs = [fab.add_client(f"s{i}", b) for i, b in enumerate("AABRR")]
        for s in subs:
            s.subscribe("metrics/*")
        for i in range(10_000):
            pub.publish("metrics/ratemon.risk", str(i))
        for s in subs:
            got = Counter(f.text for f in s.messages(bk.Command.DELIVER_PUB))
            assert len(got) == 10_000 and set(got.values()) == {1}

        # (d) unregistered destination
        a1.send("nobody", "?")
        (err,) = a1.messages(bk.Command.ERROR)
        assert err.text == "UnknownDestination:nobody"


# 9 -------------------------------------------------------------------------------

def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300) if b else abs(a)


def test_criterion_09_numerical_kernels():
    with criterion(9, "special-function tables to 1e-6 and worked sample sizes 387 / 1022", 30.0):
        for table in (ERFINV, NORM_PPF, T_PPF, CHI2_PPF):
            assert len(table) >= 20
        assert all(_rel(erfinv(x), ref) <= 1e-6 for x, ref in ERFINV)
        assert all(_rel(norm_ppf(q), ref) <= 1e-6 for q, ref in NORM_PPF)
        assert all(_rel(t_ppf(q, df), ref) <= 1e-6 for q, df, ref in T_PPF)
        assert all(_rel(chi2_ppf(q, df), ref) <= 1e-6 for q, df, ref in CHI2_PPF)
        H = dm.required_samples(dm.PrecisionRequirement(0.95, 0.1), dm.BatchStats(50, 1.0, 0.25))
        n = dm.mean_change_samples(dm.ChangeRequirement(0.95, 0.99, 1.1), dm.BatchStats(100, 1.0, 0.25))
        assert H == oracle_H(0.95, 0.1, 1.0, 0.5) == 387
        assert n == oracle_n(0.95, 0.99, 1.1, 1.0, 0.5) == 1022


# 10 ------------------------------------------------------------------------------

def test_criterion_10_pipeline(tmp_path, capsys):
    with criterion(10, "sim run elastic router: ScaleOut and Troubleshoot, alarms published and stored", 120.0):
        out = tmp_path / "run"
        rc = cli_main(["sim", "run", str(SCEN / "elastic_router.toml"), "--json", "--out", str(out)])
        doc = json.loads(capsys.readouterr().out)
        assert rc == 0
        seq = [(t["from"], t["to"]) for t in doc["transitions"]]
        assert ("Normal", "ScaleOut") in seq and ("Normal", "Troubleshoot") in seq
        assert seq.index(("Normal", "ScaleOut")) < seq.index(("Normal", "Troubleshoot"))
        assert doc["checks"] == {"all_alarms_published": True, "all_alarms_persisted": True}
        assert doc["alarm_count"] > 0
        # the persisted store, reloaded from disk, holds every alarm on its topic
        store = MetricStore.load(out / "metrics.jsonl")
        stored = {(s.tags["id"], s.tags["topic"]) for s in store.series() if s.metric == "alarm"}
        assert stored == {(a["id"], a["topic"]) for a in doc["alarms"]}
        assert {a["topic"] for a in doc["alarms"]} >= {"alarm/congestion", "alarm/overload"}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
