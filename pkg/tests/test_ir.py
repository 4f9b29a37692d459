import numpy as np
import pytest

from snndeploy import ir
from snndeploy.errors import GraphError, ShapeError
from snndeploy.fixtures import (
    GESTURE_NET_PARAMETERS,
    GESTURE_NET_SHAPES,
    make_gesture_net,
)

from conftest import lif_node


def small_conv_graph(out_ch=16, declared_lif_ok=True):
    nodes = {
        "in": ir.Input(shape=(2, 32, 32)),
        "c": ir.Conv2d(weights=np.ones((out_ch, 2, 5, 5)), stride=(2, 2), padding=(1, 1)),
        "n": lif_node(),
        "f": ir.Flatten(),
        "l": ir.Linear(weights=np.ones((3, out_ch * 15 * 15))),
        "n2": lif_node(),
        "out": ir.Output(shape=3),
    }
    order = ["in", "c", "n", "f", "l", "n2", "out"]
    return ir.Graph(nodes=nodes, edges=list(zip(order[:-1], order[1:])))


class TestValidation:
    def test_fixture_validates(self, gesture_net):
        assert len(gesture_net.nodes) == 15  # Input + 13 layers + Output

    def test_input_only_graph_rejected(self):
        g = ir.Graph(nodes={"in": ir.Input(shape=(1, 2, 2))}, edges=[])
        with pytest.raises(GraphError, match="Output"):
            ir.validate(g)

    def test_two_inputs_rejected(self):
        g = ir.Graph(
            nodes={
                "a": ir.Input(shape=(1, 1, 1)),
                "b": ir.Input(shape=(1, 1, 1)),
                "out": ir.Output(shape=1),
            },
            edges=[("a", "out")],
        )
        with pytest.raises(GraphError, match="Input"):
            ir.validate(g)

    def test_cycle_rejected(self):
        g = small_conv_graph()
        g.edges.append(("n2", "c"))
        with pytest.raises(GraphError):
            ir.validate(g)

    def test_shape_mismatch_reports_both_shapes(self):
        g = small_conv_graph()
        # linear expects 16*15*15 inputs; lie about it
        g.nodes["l"] = ir.Linear(weights=np.ones((3, 16 * 14 * 14)))
        with pytest.raises(ShapeError, match="3136.*3600|expects 3136"):
            ir.validate(g)

    def test_lif_param_length_checked(self):
        g = small_conv_graph()
        g.nodes["n"] = lif_node(size=10)  # population is 3600
        with pytest.raises(ShapeError, match="population"):
            ir.validate(g)

    def test_nonpositive_lif_params_rejected(self):
        with pytest.raises(GraphError):
            ir.LIF(tau=0.0, r=1.0, v_leak=0.0, threshold=1.0)
        with pytest.raises(GraphError):
            ir.LIF(tau=2.0, r=1.0, v_leak=0.0, threshold=-1.0)

    def test_weight_node_needs_single_pred_succ(self):
        g = small_conv_graph()
        g.edges.remove(("l", "n2"))
        with pytest.raises(GraphError):
            ir.validate(g)

    def test_quant_record_consistency_enforced(self):
        w = np.array([[0.5, -0.5]])
        bad = ir.QuantRecord(scale=0.01, int_weights=np.array([[1, 1]], dtype=np.int8))
        g = ir.Graph(
            nodes={
                "in": ir.Input(shape=(1, 1, 2)),
                "f": ir.Flatten(),
                "l": ir.Linear(weights=w, quant=bad),
                "n": lif_node(),
                "out": ir.Output(shape=1),
            },
            edges=[("in", "f"), ("f", "l"), ("l", "n"), ("n", "out")],
        )
        with pytest.raises(GraphError, match="int_weights"):
            ir.validate(g)


class TestInferShapes:
    def test_gesture_fixture_matches_expected_table(self, gesture_net):
        assert ir.infer_shapes(gesture_net) == GESTURE_NET_SHAPES

    def test_conv_rule(self):
        # 32 -> floor((32 + 2 - 4 - 1)/2) + 1 = 15
        g = ir.validate(small_conv_graph())
        assert ir.infer_shapes(g)["c"] == (16, 15, 15)

    def test_pool_drops_trailing_row(self):
        node = ir.SumPool2d(kernel=(2, 2), stride=(2, 2))
        assert ir.node_output_shape(node, (16, 15, 15), "p") == (16, 7, 7)

    def test_flatten_multiplies(self):
        assert ir.node_output_shape(ir.Flatten(), (8, 3, 3), "f") == 72

    def test_negative_dim_errors(self):
        node = ir.Conv2d(weights=np.ones((1, 1, 7, 7)))
        with pytest.raises(ShapeError):
            ir.node_output_shape(node, (1, 4, 4), "c")


class TestCounting:
    def test_gesture_param_count(self, gesture_net):
        assert ir.count_parameters(gesture_net) == GESTURE_NET_PARAMETERS

    def test_no_weight_nodes(self):
        g = ir.Graph(
            nodes={"in": ir.Input(shape=(1, 1, 2)), "out": ir.Output(shape=2)},
            edges=[("in", "out")],
        )
        assert ir.count_parameters(g) == 0

    def test_single_linear(self):
        g = ir.Graph(nodes={"l": ir.Linear(weights=np.zeros((256, 72)))}, edges=[])
        assert ir.count_parameters(g) == 18432

    def test_model_size_fp32(self, gesture_net):
        assert ir.model_size_bytes(gesture_net) == 25504 * 4 == 102016

    def test_model_size_quantized_requires_int_weights(self, gesture_net):
        with pytest.raises(GraphError, match="int weights"):
            ir.model_size_bytes(gesture_net, quantized=True)

    def test_model_size_quantized(self, gesture_net):
        from snndeploy.quantize import PtqConfig, ptq_quantize_graph

        qg = ptq_quantize_graph(gesture_net, PtqConfig())
        assert ir.model_size_bytes(qg, quantized=True) == 25504
        # quantization does not change the parameter count
        assert ir.count_parameters(qg) == ir.count_parameters(gesture_net)


class TestSerialization:
    def test_round_trip_inline(self, tmp_path, gesture_net):
        p = str(tmp_path / "net.snngraph.json")
        ir.save_graph(gesture_net, p)
        g2 = ir.load_graph(p)
        assert g2 == gesture_net

    def test_round_trip_sidecar(self, tmp_path, gesture_net):
        p = str(tmp_path / "net.snngraph.json")
        ir.save_graph(gesture_net, p, sidecar=True)
        assert (tmp_path / "net.weights.bin").exists()
        g2 = ir.load_graph(p)
        # sidecar stores float32; compare at that precision
        for nid, node in gesture_net.nodes.items():
            if isinstance(node, ir.WEIGHT_NODE_TYPES):
                np.testing.assert_array_equal(
                    g2.nodes[nid].weights, node.weights.astype(np.float32)
                )

    def test_save_is_deterministic(self, tmp_path, gesture_net):
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        ir.save_graph(gesture_net, p1)
        ir.save_graph(gesture_net, p2)
        assert open(p1).read() == open(p2).read()

    def test_quant_records_survive_round_trip(self, tmp_path, gesture_net):
        from snndeploy.quantize import PtqConfig, ptq_quantize_graph

        qg = ptq_quantize_graph(gesture_net, PtqConfig())
        p = str(tmp_path / "q.snngraph.json")
        ir.save_graph(qg, p, sidecar=True)
        g2 = ir.load_graph(p)
        for nid, node in qg.nodes.items():
            if isinstance(node, ir.WEIGHT_NODE_TYPES):
                assert g2.nodes[nid].quant.scale == node.quant.scale
                np.testing.assert_array_equal(
                    g2.nodes[nid].quant.int_weights, node.quant.int_weights
                )

    def test_malformed_json_raises_parse_error(self, tmp_path):
        p = tmp_path / "bad.snngraph.json"
        p.write_text("{not json")
        with pytest.raises(GraphError, match="parse"):
            ir.load_graph(str(p))

    def test_missing_sidecar_detected(self, tmp_path, gesture_net):
        p = str(tmp_path / "net.snngraph.json")
        ir.save_graph(gesture_net, p, sidecar=True)
        (tmp_path / "net.weights.bin").unlink()
        with pytest.raises(GraphError, match="sidecar"):
            ir.load_graph(p)


class TestBinio:
    def test_tensor_round_trip(self, tmp_path):
        import io

        from snndeploy import binio

        rng = np.random.default_rng(1)
        buf = io.BytesIO()
        tensors = [
            rng.normal(size=(3, 4)).astype(np.float32),
            rng.integers(-128, 128, size=(2, 2, 2, 2)).astype(np.int8),
            np.arange(7, dtype=np.int32),
        ]
        offsets = [binio.write_tensor(buf, t) for t in tensors]
        for off, t in zip(offsets, tensors):
            got = binio.read_tensor(buf, off)
            assert got.dtype == t.dtype
            np.testing.assert_array_equal(got, t)

    def test_bad_magic_rejected(self):
        import io

        from snndeploy import binio

        with pytest.raises(ValueError, match="magic"):
            binio.read_tensor(io.BytesIO(b"XXXX" + b"\0" * 12))
