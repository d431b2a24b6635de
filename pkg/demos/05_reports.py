"""
Rankings and charts
===================

Every chart is written next to a CSV holding the same numbers, so a figure
can always be checked against its table.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from decwatt.pipeline import flatten, merge_by_model, save_aggregates
from decwatt.report import main as report
from decwatt.report import top_ranking
from decwatt.synth import fleet_decoders, synthetic_submission

rng = np.random.default_rng(7)
exports = [
    synthetic_submission(rng, f"Phone {i}", f"S{i}-{k}", decoders=fleet_decoders(rng, 4)).to_dict()
    for i in range(12)
    for k in range(2)
]
aggregates = merge_by_model(flatten(exports))
for row in top_ranking(aggregates, "play", "hd", 5):
    print(f"{row.rank}. {row.model:9s} {row.decoder:28s} {row.value:.3f} ± {row.std:.3f} %/h")

# %%
out = Path(tempfile.mkdtemp())
save_aggregates(out / "aggregates.jsonl", aggregates)
report(["--in", str(out / "aggregates.jsonl"), "top", "--res", "hd", "--n", "10", "--out", str(out)])
report(["--in", str(out / "aggregates.jsonl"), "scatter", "--model", "Phone 3", "--out", str(out)])
print(sorted(p.name for p in out.iterdir()))
print((out / "scatter_Phone_3.csv").read_text())
