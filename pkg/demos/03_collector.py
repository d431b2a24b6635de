"""
Collecting submissions from many devices
========================================

The collector keeps one sample per (device, build host). A more complete
run replaces a less complete one, repeats are rejected, and everything is
recorded in an append-only log that can be replayed.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from decwatt.collector import LOG_NAME, CollectorStore
from decwatt.synth import synthetic_submission

rng = np.random.default_rng(0)
data = Path(tempfile.mkdtemp())
store = CollectorStore(data / "live", salt="demo")

# %%
for completeness in (0.5, 0.5, 1.0, 0.25):
    sub = synthetic_submission(rng, "Galaxy A70", "R58M12345", completeness=completeness)
    print(f"completeness {completeness:4.2f} -> {store.ingest(sub).verdict}")

print(store.ingest(b'{"profile": {}}').reasons[:2])

# %%
for i in range(20):
    store.ingest(synthetic_submission(rng, f"Model {i % 5}", f"SN{i}", completeness=float(rng.uniform(0.2, 1))))
for row in store.completeness_report()[:5]:
    print(row)
store.close()

# %%
# Replaying the log into an empty directory reproduces the index exactly.
copy = CollectorStore.replay(data / "live" / LOG_NAME, data / "copy", salt="demo")
copy.close()
print("identical:", (data / "live" / "index.jsonl").read_bytes() == (data / "copy" / "index.jsonl").read_bytes())
