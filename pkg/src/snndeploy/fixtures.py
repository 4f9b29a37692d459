"""Bundled fixture networks used by tests, demos, and the CLI smoke path."""

from __future__ import annotations

import numpy as np

from .ir import (
    LIF,
    Conv2d,
    Flatten,
    Graph,
    Input,
    Linear,
    Output,
    SumPool2d,
    validate,
)

# Decay beta = 0.93 under Euler-forward: alpha = 1 - dt/tau  =>  tau = 1/0.07.
GESTURE_TAU = 1.0 / 0.07


def _lif(tau: float = GESTURE_TAU, threshold: float = 1.0) -> LIF:
    # r = tau so that the input coupling (dt/tau) * r is exactly 1.
    return LIF(tau=tau, r=tau, v_leak=0.0, threshold=threshold)


def make_gesture_net(seed: int = 7, weight_scale: float = 0.5) -> Graph:
    """11-class gesture classifier topology with seeded random weights.

    Chain: Input(2,32,32) -> Conv(5x5,s2,p1) -> LIF -> Conv(3x3,s1,p1) -> LIF
    -> SumPool(2x2) -> Conv(3x3,s1,p1) -> LIF -> SumPool(2x2) -> Flatten
    -> Linear(72->256) -> LIF -> Linear(256->11) -> LIF -> Output(11).
    25,504 parameters in total.
    """
    rng = np.random.default_rng(seed)

    def w(*shape):
        return rng.uniform(-weight_scale, weight_scale, size=shape)

    nodes = {
        "input": Input(shape=(2, 32, 32)),
        "0": Conv2d(weights=w(16, 2, 5, 5), stride=(2, 2), padding=(1, 1)),
        "1": _lif(),
        "2": Conv2d(weights=w(16, 16, 3, 3), stride=(1, 1), padding=(1, 1)),
        "3": _lif(),
        "4": SumPool2d(kernel=(2, 2), stride=(2, 2)),
        "5": Conv2d(weights=w(8, 16, 3, 3), stride=(1, 1), padding=(1, 1)),
        "6": _lif(),
        "7": SumPool2d(kernel=(2, 2), stride=(2, 2)),
        "8": Flatten(),
        "9": Linear(weights=w(256, 72)),
        "10": _lif(),
        "11": Linear(weights=w(11, 256)),
        "12": _lif(),
        "output": Output(shape=11),
    }
    order = ["input"] + [str(i) for i in range(13)] + ["output"]
    edges = list(zip(order[:-1], order[1:]))
    g = Graph(
        nodes=nodes,
        edges=edges,
        metadata={"name": "gesture-net", "timestep_ms": "1"},
    )
    return validate(g)


# Expected (C, H, W) / flat shapes of the fixture, keyed by node id.
GESTURE_NET_SHAPES = {
    "input": (2, 32, 32),
    "0": (16, 15, 15),
    "1": (16, 15, 15),
    "2": (16, 15, 15),
    "3": (16, 15, 15),
    "4": (16, 7, 7),
    "5": (8, 7, 7),
    "6": (8, 7, 7),
    "7": (8, 3, 3),
    "8": 72,
    "9": 256,
    "10": 256,
    "11": 11,
    "12": 11,
    "output": 11,
}

GESTURE_NET_PARAMETERS = 25504
