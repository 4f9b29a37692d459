"""Shared builders and independent brute-force oracles for the test suite.

The oracles here are deliberately naive (plain Python loops, dense
matrices) and never call into the code paths they check.
"""

from __future__ import annotations

import numpy as np
import pytest

from snndeploy import ir
from snndeploy.events import SpikeTrain


# ---------------------------------------------------------------------------
# graph builders


def lif_node(size=None, tau=2.0, threshold=1.0, r=None):
    r = tau if r is None else r  # coupling (dt/tau)*r == 1 by default
    if size is None:
        return ir.LIF(tau=tau, r=r, v_leak=0.0, threshold=threshold)
    return ir.LIF(
        tau=np.full(size, tau),
        r=np.full(size, r),
        v_leak=np.zeros(size),
        threshold=np.full(size, threshold),
    )


def linear_chain_graph(layer_sizes, weights, thresholds=None, tau=2.0):
    """Input -> Flatten -> (Linear -> LIF)* -> Output over flat layer sizes."""
    n_in = layer_sizes[0]
    nodes = {"in": ir.Input(shape=(1, 1, n_in)), "flat": ir.Flatten()}
    order = ["in", "flat"]
    for i, w in enumerate(weights):
        thr = 1.0 if thresholds is None else thresholds[i]
        nodes[f"l{i}"] = ir.Linear(weights=w)
        nodes[f"n{i}"] = lif_node(tau=tau, threshold=thr)
        order += [f"l{i}", f"n{i}"]
    nodes["out"] = ir.Output(shape=layer_sizes[-1])
    order.append("out")
    g = ir.Graph(nodes=nodes, edges=list(zip(order[:-1], order[1:])))
    return ir.validate(g)


def random_linear_chain(rng, n_layers=None, max_width=8, tau=2.0, weight_scale=1.0):
    n_layers = n_layers or rng.integers(2, 5)
    sizes = [int(rng.integers(2, max_width + 1)) for _ in range(n_layers + 1)]
    weights = [
        rng.normal(0, weight_scale, (sizes[i + 1], sizes[i])) for i in range(n_layers)
    ]
    return linear_chain_graph(sizes, weights, tau=tau), sizes


def random_input_train(rng, size, timesteps, rate=0.3) -> SpikeTrain:
    times = []
    for _ in range(size):
        fire = rng.random(timesteps) < rate
        times.append(np.nonzero(fire)[0].astype(np.int64))
    return SpikeTrain(size=size, times=times)


# ---------------------------------------------------------------------------
# brute-force linear-map oracles (plain loops, no shared code with lowering)


def dense_conv_matrix_oracle(weights, in_shape, stride, padding, dilation):
    ci_, ih, iw = in_shape
    oc, ic, kh, kw = weights.shape
    assert ic == ci_
    oh = (ih + 2 * padding[0] - dilation[0] * (kh - 1) - 1) // stride[0] + 1
    ow = (iw + 2 * padding[1] - dilation[1] * (kw - 1) - 1) // stride[1] + 1
    m = np.zeros((oc * oh * ow, ic * ih * iw))
    for co in range(oc):
        for yo in range(oh):
            for xo in range(ow):
                row = co * oh * ow + yo * ow + xo
                for cin in range(ic):
                    for ky in range(kh):
                        for kx in range(kw):
                            yi = yo * stride[0] - padding[0] + ky * dilation[0]
                            xi = xo * stride[1] - padding[1] + kx * dilation[1]
                            if 0 <= yi < ih and 0 <= xi < iw:
                                col = cin * ih * iw + yi * iw + xi
                                m[row, col] += weights[co, cin, ky, kx]
    return m, (oc, oh, ow)


def dense_pool_matrix_oracle(kernel, stride, padding, in_shape):
    c, ih, iw = in_shape
    kh, kw = kernel
    oh = (ih + 2 * padding[0] - kh) // stride[0] + 1
    ow = (iw + 2 * padding[1] - kw) // stride[1] + 1
    m = np.zeros((c * oh * ow, c * ih * iw))
    for ch in range(c):
        for yo in range(oh):
            for xo in range(ow):
                row = ch * oh * ow + yo * ow + xo
                for ky in range(kh):
                    for kx in range(kw):
                        yi = yo * stride[0] - padding[0] + ky
                        xi = xo * stride[1] - padding[1] + kx
                        if 0 <= yi < ih and 0 <= xi < iw:
                            m[row, ch * ih * iw + yi * iw + xi] += 1.0
    return m, (c, oh, ow)


def denoise_oracle(events, spatial_px, window_us):
    """O(n^2) all-pairs neighborhood filter."""
    keep = []
    n = len(events)
    for i in range(n):
        ok = False
        for j in range(n):
            if i == j:
                continue
            if (
                abs(int(events["x"][i]) - int(events["x"][j])) <= spatial_px
                and abs(int(events["y"][i]) - int(events["y"][j])) <= spatial_px
                and abs(int(events["t"][i]) - int(events["t"][j])) <= window_us
            ):
                ok = True
                break
        keep.append(ok)
    return events[np.asarray(keep, dtype=bool)]


def percentile_oracle(values, p):
    """Sort-based linear-interpolation percentile."""
    a = sorted(float(v) for v in values)
    if len(a) == 1:
        return a[0]
    pos = (p / 100.0) * (len(a) - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    frac = pos - lo
    return a[lo] * (1 - frac) + a[hi] * frac


@pytest.fixture(scope="session")
def gesture_net():
    from snndeploy.fixtures import make_gesture_net

    return make_gesture_net()
