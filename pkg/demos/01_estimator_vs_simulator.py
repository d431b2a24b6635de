"""
Estimating decoder power from battery steps
===========================================

A phone only reports its battery in whole percent. This demo drives a
simulated handset whose true currents are known and checks how close the
estimator gets using nothing but those coarse level changes.
"""

# %%
from decwatt import SimConfig, SimDecoder, SimDevice, ground_truth, measure_decoder, measure_screen_baseline
from decwatt.assets import sequence_assets

decoder = SimDecoder("omx.qcom.video.decoder.avc", "H.264", "hardware", decode_current=310.0, true_speed=140.0)
config = SimConfig(capacity=4000.0, initial_charge=3600.0, screen_current=85.0, decoders=(decoder,))
device = SimDevice(config)

# %%
# First the display alone: screen on, nothing decoding.
screen = measure_screen_baseline(device)
print(f"screen baseline  {screen:.4f} %/h   (true {85 / 4000 * 100:.4f})")

# %%
# Then loop-decode each built-in sequence until the level drops 3 points.
for asset in sequence_assets("H.264"):
    rec = measure_decoder(device, device, decoder.descriptor, asset, screen)
    truth = ground_truth(config, decoder, asset)
    m = rec.metrics
    print(
        f"{asset.name:10s} play {m.delta_play:7.4f} %/h (true {truth.delta_play:7.4f})"
        f"  decode {m.delta_decode:6.1f} mA (true {truth.delta_decode:.1f})"
        f"  speed {m.speed:6.2f} fps"
    )

# %%
# Errors come from detecting each level change up to one poll late, so
# they shrink as the window gets longer.
err = abs(m.delta_decode - 310.0) / 310.0
print(f"window {rec.window.duration / 60:.1f} min, decode error {err:.3%}, one poll is {1 / rec.window.duration:.3%}")
