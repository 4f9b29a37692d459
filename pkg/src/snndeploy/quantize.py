"""Weight quantization with firing-threshold co-scaling.

Two pipelines produce chip-ready 8-bit weights:

* :func:`ptq_quantize_graph` - post-training: per layer, the scale factor
  is ``lambda = 127 / P(p)`` where ``P(p)`` is the p-th percentile of the
  absolute weights; thresholds of each downstream LIF are multiplied by
  the same factor to preserve spiking behavior.
* :func:`qat_finalize_graph` - training-aware graphs already carry integer
  weights plus a stored step size S per layer; thresholds are divided by S
  and the integer weights are used as-is (no further weight scaling).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import ir
from .errors import QuantizationError

INT8_MIN, INT8_MAX = -128, 127
TARGET_MAX = 127.0


@dataclass(frozen=True)
class PtqConfig:
    percentile: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.percentile <= 100.0):
            raise QuantizationError(
                f"percentile must be in (0, 100], got {self.percentile}"
            )


def percentile(abs_weights, p: float) -> float:
    """Linear-interpolation percentile of a flat weight-magnitude sample."""
    a = np.asarray(abs_weights, dtype=np.float64).ravel()
    if a.size == 0:
        raise QuantizationError("cannot take a percentile of an empty weight list")
    if not (0.0 < p <= 100.0):
        raise QuantizationError(f"percentile must be in (0, 100], got {p}")
    return float(np.percentile(a, p, method="linear"))


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with halves away from zero (sign-symmetric)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def ptq_scale_layer(w: np.ndarray, cfg: PtqConfig) -> tuple[np.ndarray, float]:
    """Quantize one weight tensor; returns (int8 weights, scale factor)."""
    w = np.asarray(w, dtype=np.float64)
    pw = percentile(np.abs(w), cfg.percentile)
    if pw == 0.0:
        raise QuantizationError(
            "weight scale undefined: percentile of |W| is zero "
            "(all-zero weights or percentile below the nonzero mass)"
        )
    lam = TARGET_MAX / pw
    q = np.clip(round_half_away(lam * w), INT8_MIN, INT8_MAX).astype(np.int8)
    return q, lam


def _governing_weight_node(g: ir.Graph, lif_id: str) -> str:
    """Nearest upstream weight node, passing through SumPool/Flatten only."""
    nid = lif_id
    while True:
        preds = g.predecessors(nid)
        if not preds:
            raise QuantizationError(f"LIF node {lif_id!r} has no upstream weight node")
        nid = preds[0]
        node = g.nodes[nid]
        if isinstance(node, ir.WEIGHT_NODE_TYPES):
            return nid
        if not isinstance(node, (ir.SumPool2d, ir.Flatten)):
            raise QuantizationError(
                f"LIF node {lif_id!r} has no upstream weight node "
                f"(hit {type(node).__name__} {nid!r})"
            )


def _scale_lif(node: ir.LIF, scale: float, lif_id: str) -> ir.LIF:
    # dividing by the stored step size keeps PTQ and QAT bit-identical
    v_leak = node.v_leak
    if np.any(v_leak != 0):
        warnings.warn(
            f"LIF node {lif_id!r} has nonzero v_leak; scaling it with the weights "
            f"to preserve dynamics",
            stacklevel=3,
        )
        v_leak = v_leak / scale
    return ir.LIF(tau=node.tau, r=node.r, v_leak=v_leak, threshold=node.threshold / scale)


def ptq_quantize_graph(g: ir.Graph, cfg: PtqConfig) -> ir.Graph:
    """Attach int8 weights + scales to every weight node and co-scale all
    downstream LIF thresholds.  Input must be full precision."""
    ir.validate(g)
    for nid, node in g.nodes.items():
        if isinstance(node, ir.WEIGHT_NODE_TYPES) and node.quant is not None:
            raise QuantizationError(
                f"node {nid!r} already carries quantization data; PTQ expects a "
                f"full-precision graph"
            )
    out = g
    scales: dict[str, float] = {}
    for nid, node in g.nodes.items():
        if not isinstance(node, ir.WEIGHT_NODE_TYPES):
            continue
        q, lam = ptq_scale_layer(node.weights, cfg)
        scales[nid] = 1.0 / lam
        record = ir.QuantRecord(scale=1.0 / lam, int_weights=q)
        if isinstance(node, ir.Conv2d):
            out = ir.with_node(out, nid, ir.Conv2d(
                weights=node.weights, stride=node.stride, padding=node.padding,
                dilation=node.dilation, quant=record))
        else:
            out = ir.with_node(out, nid, ir.Linear(weights=node.weights, quant=record))
    for nid, node in g.nodes.items():
        if isinstance(node, ir.LIF):
            wid = _governing_weight_node(g, nid)
            out = ir.with_node(out, nid, _scale_lif(node, scales[wid], nid))
    return ir.validate(out)


def qat_finalize_graph(g: ir.Graph) -> ir.Graph:
    """Finalize a training-aware graph: divide each LIF threshold by the
    stored scale S of its governing weight layer; weight scaling stays off
    (the stored integers are used directly)."""
    ir.validate(g)
    for nid, node in g.nodes.items():
        if isinstance(node, ir.WEIGHT_NODE_TYPES):
            if node.quant is None:
                raise QuantizationError(f"node {nid!r} has no quantization record")
            if node.quant.int_weights is None:
                raise QuantizationError(f"node {nid!r} has no stored integer weights")
    out = g
    for nid, node in g.nodes.items():
        if isinstance(node, ir.LIF):
            wid = _governing_weight_node(g, nid)
            s = g.nodes[wid].quant.scale
            out = ir.with_node(out, nid, _scale_lif(node, s, nid))
    return ir.validate(out)


def dequantize_weights(node) -> np.ndarray:
    """Real-valued weights implied by a node's integer weights and scale."""
    if node.quant is None or node.quant.int_weights is None:
        raise QuantizationError("node has no integer weights to dequantize")
    return node.quant.int_weights.astype(np.float64) * node.quant.scale


def spike_agreement(a, b) -> float:
    """F1 overlap of two spike trains' (neuron, timestep) sets; 1.0 if both
    are empty."""
    sa = {(int(n), int(t)) for n, t in a.as_pairs()}
    sb = {(int(n), int(t)) for n, t in b.as_pairs()}
    if not sa and not sb:
        return 1.0
    inter = len(sa & sb)
    denom = len(sa) + len(sb)
    return 2.0 * inter / denom if denom else 1.0


def percentile_sweep(
    g: ir.Graph,
    input_spikes,
    percentiles,
    max_timesteps: int = 50,
) -> list[dict]:
    """Quantize, lower, and simulate at each percentile; the metric is the
    output spike-train agreement with the full-precision reference run.

    Returns rows of ``{"percentile": p, "metric": m}`` ready for CSV export.
    """
    from . import sim
    from .lowering import lower

    ref_net = lower(g, max_timesteps=max_timesteps)
    ref = sim.run(ref_net, None, input_spikes, engine="reference_dense",
                  max_timesteps=max_timesteps)
    ref_out = ref.spikes[ref_net.output_population.id]
    rows = []
    for p in percentiles:
        qg = ptq_quantize_graph(g, PtqConfig(percentile=float(p)))
        qnet = lower(qg, max_timesteps=max_timesteps)
        res = sim.run(qnet, None, input_spikes, engine="placed_int8",
                      max_timesteps=max_timesteps)
        out = res.spikes[qnet.output_population.id]
        rows.append({"percentile": float(p), "metric": spike_agreement(ref_out, out)})
    return rows
