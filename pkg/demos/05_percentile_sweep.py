"""Why percentile calibration matters: one weight outlier ruins p=100.

A single weight at 100x the median magnitude drags the max-based scale
factor down so far that ordinary weights lose almost all precision.
Calibrating the scale at the 99th percentile instead clips the outlier
and keeps everything else faithful, which the sweep metric (output
spike-train agreement against the float reference) makes visible.
"""

import numpy as np

from snndeploy import ir
from snndeploy.events import SpikeTrain
from snndeploy.quantize import percentile_sweep

SIZE = 16
TIMESTEPS = 30

w = np.full((SIZE, SIZE), 0.5)
w[0, SIZE - 1] = 50.0  # the outlier: 100x the median magnitude

g = ir.validate(
    ir.Graph(
        nodes={
            "in": ir.Input(shape=(1, 1, SIZE)),
            "flat": ir.Flatten(),
            "l": ir.Linear(weights=w),
            "n": ir.LIF(tau=2.0, r=2.0, v_leak=0.0, threshold=1.0),
            "out": ir.Output(shape=SIZE),
        },
        edges=[("in", "flat"), ("flat", "l"), ("l", "n"), ("n", "out")],
    )
)

rng = np.random.default_rng(3)
times = [np.empty(0, dtype=np.int64) for _ in range(SIZE)]
for n in range(SIZE - 1):  # the outlier's input neuron stays silent
    fire = rng.random(TIMESTEPS) < 0.25
    times[n] = np.nonzero(fire)[0].astype(np.int64)
train = SpikeTrain(size=SIZE, times=times)

rows = percentile_sweep(g, train, [90, 95, 99, 99.9, 100], max_timesteps=TIMESTEPS)
print("percentile  agreement with float reference")
for r in rows:
    bar = "#" * int(round(40 * r["metric"]))
    print(f"{r['percentile']:>9}   {r['metric']:.3f}  {bar}")
best = max(rows, key=lambda r: r["metric"])
print(f"\nbest calibration percentile: {best['percentile']}")
