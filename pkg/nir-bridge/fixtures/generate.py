"""Generate NIR-style HDF5 fixtures for the bridge tests.

Layout follows the NIR reference serialization: a root group ``node``
holding a ``type`` tag, a ``nodes`` group (one subgroup per node with a
``type`` dataset plus parameter datasets) and an ``edges`` string table.

Usage: python3 generate.py <output-dir>
"""

import sys

import h5py
import numpy as np

from snndeploy import ir
from snndeploy.fixtures import make_gesture_net


def start(path):
    f = h5py.File(path, "w")
    root = f.create_group("node")
    root.create_dataset("type", data=b"NIRGraph")
    return f, root.create_group("nodes"), root


def add(nodes, nid, nir_type, **datasets):
    g = nodes.create_group(nid)
    g.create_dataset("type", data=nir_type.encode())
    for k, v in datasets.items():
        g.create_dataset(k, data=v)
    return g


def write_edges(root, edges):
    root.create_dataset("edges", data=np.array(edges, dtype="S16"))


def lif_datasets(node, size):
    def expand(v):
        return np.broadcast_to(np.atleast_1d(np.asarray(v, dtype=np.float64)), (size,))

    return {
        "tau": expand(node.tau),
        "r": expand(node.r),
        "v_leak": expand(node.v_leak),
        "v_threshold": expand(node.threshold),
    }


def gesture(path):
    g = make_gesture_net()
    shapes = ir.infer_shapes(g)
    f, nodes, root = start(path)
    for nid, node in g.nodes.items():
        if isinstance(node, ir.Input):
            add(nodes, nid, "Input", shape=np.asarray(node.shape, dtype=np.int64))
        elif isinstance(node, ir.Conv2d):
            add(
                nodes, nid, "Conv2d",
                weight=node.weights.astype(np.float64),
                bias=np.zeros(node.weights.shape[0]),
                stride=np.asarray(node.stride, dtype=np.int64),
                padding=np.asarray(node.padding, dtype=np.int64),
                dilation=np.asarray(node.dilation, dtype=np.int64),
                groups=np.int64(1),
            )
        elif isinstance(node, ir.Linear):
            add(nodes, nid, "Linear", weight=node.weights.astype(np.float64))
        elif isinstance(node, ir.SumPool2d):
            add(
                nodes, nid, "SumPool2d",
                kernel_size=np.asarray(node.kernel, dtype=np.int64),
                stride=np.asarray(node.stride, dtype=np.int64),
                padding=np.asarray(node.padding, dtype=np.int64),
            )
        elif isinstance(node, ir.Flatten):
            add(nodes, nid, "Flatten", start_dim=np.int64(0), end_dim=np.int64(-1))
        elif isinstance(node, ir.LIF):
            add(nodes, nid, "LIF", **lif_datasets(node, ir.shape_size(shapes[nid])))
        elif isinstance(node, ir.Output):
            add(nodes, nid, "Output", shape=np.asarray([node.shape], dtype=np.int64))
    write_edges(root, g.edges)
    f.close()


def recurrent(path):
    f, nodes, root = start(path)
    add(nodes, "input", "Input", shape=np.asarray([1, 1, 4], dtype=np.int64))
    add(nodes, "r0", "CubaLIF",
        tau_mem=np.ones(4), tau_syn=np.ones(4), r=np.ones(4),
        v_leak=np.zeros(4), v_threshold=np.ones(4), w_rec=np.eye(4))
    add(nodes, "output", "Output", shape=np.asarray([4], dtype=np.int64))
    write_edges(root, [("input", "r0"), ("r0", "output")])
    f.close()


def quantized(path):
    rng = np.random.default_rng(5)
    scales = [1 / 127.0, 1 / 64.0]
    w_int = [
        rng.integers(-127, 128, (6, 8)).astype(np.int8),
        rng.integers(-127, 128, (3, 6)).astype(np.int8),
    ]
    f, nodes, root = start(path)
    add(nodes, "input", "Input", shape=np.asarray([1, 1, 8], dtype=np.int64))
    add(nodes, "flat", "Flatten", start_dim=np.int64(0), end_dim=np.int64(-1))
    order = ["input", "flat"]
    for i, (s, wi) in enumerate(zip(scales, w_int)):
        g = add(nodes, f"l{i}", "Linear", weight=wi.astype(np.float64) * s)
        g.create_dataset("scale", data=np.float64(s))
        g.create_dataset("w_int", data=wi)
        size = wi.shape[0]
        add(nodes, f"n{i}", "LIF",
            tau=np.full(size, 2.0), r=np.full(size, 2.0),
            v_leak=np.zeros(size), v_threshold=np.full(size, 1.0))
        order += [f"l{i}", f"n{i}"]
    add(nodes, "output", "Output", shape=np.asarray([3], dtype=np.int64))
    order.append("output")
    write_edges(root, list(zip(order[:-1], order[1:])))
    f.close()


def badlif(path):
    f, nodes, root = start(path)
    add(nodes, "input", "Input", shape=np.asarray([1, 1, 2], dtype=np.int64))
    add(nodes, "flat", "Flatten", start_dim=np.int64(0), end_dim=np.int64(-1))
    add(nodes, "l", "Linear", weight=np.ones((2, 2)))
    add(nodes, "n", "LIF", tau=np.full(2, 2.0), v_leak=np.zeros(2),
        v_threshold=np.ones(2))  # "r" missing on purpose
    add(nodes, "output", "Output", shape=np.asarray([2], dtype=np.int64))
    write_edges(root, [("input", "flat"), ("flat", "l"), ("l", "n"), ("n", "output")])
    f.close()


def biased(path):
    f, nodes, root = start(path)
    add(nodes, "input", "Input", shape=np.asarray([1, 1, 2], dtype=np.int64))
    add(nodes, "flat", "Flatten", start_dim=np.int64(0), end_dim=np.int64(-1))
    add(nodes, "l", "Affine", weight=np.ones((2, 2)), bias=np.array([0.5, 0.0]))
    add(nodes, "n", "LIF", tau=np.full(2, 2.0), r=np.full(2, 2.0),
        v_leak=np.zeros(2), v_threshold=np.ones(2))
    add(nodes, "output", "Output", shape=np.asarray([2], dtype=np.int64))
    write_edges(root, [("input", "flat"), ("flat", "l"), ("l", "n"), ("n", "output")])
    f.close()


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "."
    gesture(f"{out}/gesture.h5")
    recurrent(f"{out}/recurrent.h5")
    quantized(f"{out}/quantized.h5")
    badlif(f"{out}/badlif.h5")
    biased(f"{out}/biased.h5")
    print("fixtures written to", out)
