"""
Campaigns that span several charge cycles
=========================================

A handset with many decoders runs out of battery before the campaign ends.
The session engine suspends below the usable window, saves a checkpoint and
carries on after the operator recharges.
"""

# %%
import tempfile
from pathlib import Path

from decwatt import SessionCheckpoint, SimConfig, SimDecoder, SimDevice, run_campaign
from decwatt.assets import sequence_assets

decoders = tuple(
    SimDecoder(f"omx.vendor.avc.{i}", "H.264", "hardware", 260.0 + 20 * i, 50.0 + 10 * i) for i in range(6)
)
config = SimConfig(capacity=3000.0, initial_charge=1500.0, screen_current=90.0, decoders=decoders, noise=20.0)
device = SimDevice(config)
assets = sequence_assets("H.264")
path = Path(tempfile.mkdtemp()) / "campaign.jsonl"

# %%
cycle = 0
checkpoint = None
while True:
    cycle += 1
    submission, checkpoint = run_campaign(device, device, assets, checkpoint, checkpoint_path=path)
    print(f"cycle {cycle}: {len(submission.records):2d}/{submission.available_pairs} pairs, status {submission.status}")
    if submission.status == "complete":
        break
    print(f"   suspended at {checkpoint.suspended_level}%: {checkpoint.suspend_reason}")
    device.recharge(90)
    checkpoint = SessionCheckpoint.load(path)

# %%
# The checkpoint is plain JSON lines; the first line holds the campaign context.
print(path.read_text().splitlines()[0][:120], "...")
