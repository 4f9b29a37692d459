"""Build the bundled gesture-recognition network and inspect its structure.

The fixture is a seven-layer convolutional spiking net over 2x32x32
event-frame input (two polarity channels).  This walks the layer table,
the inferred activation shapes, and the parameter/byte accounting.
"""

from snndeploy import ir
from snndeploy.fixtures import make_gesture_net

g = make_gesture_net()
shapes = ir.infer_shapes(g)

print("layer table")
print(f"{'node':>6}  {'type':<10} {'output shape':<14} params")
for nid, node in g.nodes.items():
    shape = shapes[nid]
    params = node.weights.size if isinstance(node, ir.WEIGHT_NODE_TYPES) else 0
    print(f"{nid:>6}  {type(node).__name__:<10} {str(shape):<14} {params or ''}")

total = ir.count_parameters(g)
print()
print(f"total parameters : {total}")
print(f"fp32 model bytes : {ir.model_size_bytes(g)}")
print("int8 model bytes : same count x 1 byte after quantization "
      f"({total} B, a 4x reduction)")
