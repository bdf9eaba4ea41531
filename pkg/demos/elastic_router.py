"""Run the elastic-router monitoring pipeline and print what happened.

    python demos/elastic_router.py [--seed N]
"""

import argparse
from collections import Counter
from pathlib import Path

from obskit.metric_store import MetricStore
from obskit.sim import run_scenario

ROOT = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=None)
args = ap.parse_args()

store = MetricStore()
rep = run_scenario(ROOT / "corpus" / "scenarios" / "elastic_router.toml", seed=args.seed, store=store)
d = rep.to_dict()
print(f"seed {d['seed']}: {d['alarm_count']} alarms", dict(Counter(a["topic"] for a in d["alarms"])))
for t in d["transitions"]:
    print(f"  t={t['t']:6.1f}s  {t['from']:>12} -> {t['to']:<12} risks={t['risks']}")
print("checks:", d["checks"])
print("samples per port:", d["samples"])
print("stored series:", store.metrics())
