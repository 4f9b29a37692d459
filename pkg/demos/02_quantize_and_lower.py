"""Quantize the gesture net to int8 and lower it to a chip network.

Quantization maps each layer's weights onto 8-bit integers with a
per-layer scale factor and multiplies the downstream firing thresholds by
the same factor, so the spiking dynamics are preserved by construction.
Lowering then fuses each weight layer (plus any pooling/flatten between
spike layers) into a single explicit synapse-list projection.
"""

import numpy as np

from snndeploy import ir
from snndeploy.fixtures import make_gesture_net
from snndeploy.lowering import lower
from snndeploy.quantize import PtqConfig, ptq_quantize_graph

g = make_gesture_net()
qg = ptq_quantize_graph(g, PtqConfig(percentile=100))

print("per-layer quantization")
for nid, node in qg.nodes.items():
    if isinstance(node, ir.WEIGHT_NODE_TYPES):
        q = node.quant
        print(f"  node {nid:>2}: scale {q.scale:.6f}, "
              f"int range [{q.int_weights.min()}, {q.int_weights.max()}]")
for nid, node in qg.nodes.items():
    if isinstance(node, ir.LIF):
        thr = float(np.atleast_1d(node.threshold)[0])
        print(f"  LIF  {nid:>2}: threshold co-scaled to {thr:.3f}")

net = lower(qg)
print()
print("lowered network")
for p in net.populations:
    print(f"  population {p.id:<8} kind={p.kind:<16} size={p.size}")
for pr in net.projections:
    print(f"  projection {pr.pre} -> {pr.post}: {len(pr.synapses)} synapses "
          f"({pr.kind}, {'int8' if pr.quantized else 'float'})")
