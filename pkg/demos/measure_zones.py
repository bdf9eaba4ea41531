"""Parse a MEASURE program and drive its zones with a synthetic CPU stream.

    python demos/measure_zones.py
"""

from pathlib import Path

from obskit import measure_lang as ml
from obskit.metric_store import MetricPoint
from obskit.zone_engine import ZoneEngine

ROOT = Path(__file__).resolve().parents[1]

spec = ml.parse((ROOT / "corpus" / "cpu_latency.measure").read_text())
print(ml.serialize(spec))

engine = ZoneEngine(spec)
# CPU load climbs from 80% to 97% over four minutes, one sample per second
for k in range(240):
    t_ms = (k + 1) * 1000
    engine.ingest(MetricPoint("m2", 0.80 + 0.17 * k / 239, t_ms))
    if t_ms % 10_000 == 0:
        for ev in engine.evaluate(t_ms):
            print(f"t={t_ms / 1000:5.0f}s  {ev.to_dict()['trigger']}: {ev.action} {ev.args}")
print("active zones:", sorted(engine.active))
