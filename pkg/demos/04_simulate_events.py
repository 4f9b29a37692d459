"""End-to-end run: synthetic event stream -> preprocessing -> placed
simulation -> prediction and energy estimate.

A moving blob of events is synthesized on a 128x128 sensor, denoised,
downsampled to 32x32, binned into 1 ms frames, and fed to the quantized,
placed gesture net on both engines.
"""

import numpy as np

from snndeploy.events import bin_frames, denoise, downsample, frames_to_spikes, make_events
from snndeploy.fixtures import make_gesture_net
from snndeploy.lowering import lower
from snndeploy.partition import partition
from snndeploy.quantize import PtqConfig, ptq_quantize_graph
from snndeploy.sim import estimate_energy, run

OVERRIDES = {"lif_1": 900, "lif_3": 900, "lif_6": 980, "lif_10": 16, "input": 17}
TIMESTEPS = 100

rng = np.random.default_rng(0)
rows = []
t = 0
for step in range(3000):
    t += int(rng.integers(20, 60))
    cx = 30 + int(60 * step / 3000)  # blob sweeping across the sensor
    x = int(np.clip(cx + rng.integers(-3, 4), 0, 127))
    y = int(np.clip(64 + rng.integers(-3, 4), 0, 127))
    rows.append((t, x, y, int(rng.integers(0, 2))))
evs = make_events(rows)
print(f"synthesized {len(evs)} events over {t / 1000:.0f} ms")

evs = denoise(evs)
print(f"after denoise: {len(evs)} events")
frames = bin_frames(downsample(evs, 4), bin_ms=1, shape=(2, 32, 32))
train = frames_to_spikes(frames, max_timesteps=TIMESTEPS)
print(f"{frames.num_frames} frames -> {train.total_spikes()} input spikes")

net = lower(ptq_quantize_graph(make_gesture_net(), PtqConfig()), max_timesteps=TIMESTEPS)
pl = partition(net, overrides=OVERRIDES)

for engine in ("reference_dense", "placed_int8"):
    res = run(net, pl if engine == "placed_int8" else None, train,
              engine=engine, max_timesteps=TIMESTEPS)
    note = " (no output spikes)" if res.no_output_spikes else ""
    print(f"{engine:>16}: class {res.predicted_class}{note}, "
          f"{res.total_spikes_recorded} spikes, {res.runtime_s:.2f} s")

print(f"energy at 1 ms/frame: {estimate_energy(TIMESTEPS)} mJ "
      f"({estimate_energy(1)} mJ/frame)")
