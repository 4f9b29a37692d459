import numpy as np
import pytest
import scipy.sparse as sp

from snndeploy import ir
from snndeploy.errors import LoweringError
from snndeploy.lowering import (
    conv_matrix,
    conv_to_synapses,
    lower,
    matrix_to_synapses,
    sumpool_matrix,
)
from snndeploy.network import load_network, save_network
from snndeploy.quantize import PtqConfig, ptq_quantize_graph

from conftest import dense_conv_matrix_oracle, dense_pool_matrix_oracle, lif_node


def random_conv_case(rng):
    ic = int(rng.integers(1, 4))
    oc = int(rng.integers(1, 4))
    kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    ih = int(rng.integers(kh, kh + 6))
    iw = int(rng.integers(kw, kw + 6))
    stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    padding = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
    dilation = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    # keep the output spatially nonempty
    if ih + 2 * padding[0] - dilation[0] * (kh - 1) - 1 < 0:
        dilation = (1, dilation[1])
    if iw + 2 * padding[1] - dilation[1] * (kw - 1) - 1 < 0:
        dilation = (dilation[0], 1)
    w = rng.normal(size=(oc, ic, kh, kw))
    node = ir.Conv2d(weights=w, stride=stride, padding=padding, dilation=dilation)
    return node, (ic, ih, iw)


class TestConvMatrix:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        node, in_shape = random_conv_case(rng)
        got = conv_matrix(node, in_shape).toarray()
        want, _ = dense_conv_matrix_oracle(
            node.weights, in_shape, node.stride, node.padding, node.dilation
        )
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_one_by_one_identity(self):
        node = ir.Conv2d(weights=np.ones((1, 1, 1, 1)))
        m = conv_matrix(node, (1, 4, 4)).toarray()
        np.testing.assert_array_equal(m, np.eye(16))

    def test_matrix_equals_im2col_application(self):
        # multiplying the matrix must equal applying the conv to an image
        rng = np.random.default_rng(42)
        node, in_shape = random_conv_case(rng)
        x = rng.normal(size=in_shape)
        m = conv_matrix(node, in_shape)
        got = m @ x.ravel()
        want, out_shape = dense_conv_matrix_oracle(
            node.weights, in_shape, node.stride, node.padding, node.dilation
        )
        np.testing.assert_allclose(got, want @ x.ravel(), rtol=1e-12)

    def test_weights_override_used(self):
        node = ir.Conv2d(weights=np.ones((1, 1, 2, 2)))
        m = conv_matrix(node, (1, 2, 2), weights=np.full((1, 1, 2, 2), 3.0))
        assert m.toarray().sum() == 12.0


class TestPoolMatrix:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(100 + seed)
        c = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 4))
        ih = int(rng.integers(k, k + 6))
        node = ir.SumPool2d(kernel=(k, k), stride=(s, s))
        got = sumpool_matrix(node, (c, ih, ih)).toarray()
        want, _ = dense_pool_matrix_oracle((k, k), (s, s), (0, 0), (c, ih, ih))
        np.testing.assert_array_equal(got, want)

    def test_rows_sum_to_window_size(self):
        node = ir.SumPool2d(kernel=(2, 2), stride=(2, 2))
        m = sumpool_matrix(node, (3, 8, 8)).toarray()
        assert np.all(m.sum(axis=1) == 4)


class TestMatrixToSynapses:
    def test_sorted_and_delay_one(self):
        m = sp.csr_matrix(np.array([[0.0, 2.0], [1.0, 0.0]]))
        syn = matrix_to_synapses(m, quantized=False)
        assert len(syn) == 2
        assert np.all(syn["delay"] == 1)
        order = list(zip(syn["pre"], syn["post"]))
        assert order == sorted(order)

    def test_zeros_dropped(self):
        m = sp.csr_matrix(np.array([[0.0, 0.0], [0.0, 5.0]]))
        assert len(matrix_to_synapses(m, quantized=False)) == 1

    def test_quantized_out_of_range_clamps_with_warning(self):
        m = sp.csr_matrix(np.array([[300.0, -300.0]]))
        with pytest.warns(UserWarning, match="saturate"):
            syn = matrix_to_synapses(m, quantized=True)
        assert list(syn["weight"]) == [127.0, -128.0]

    def test_all_zero_kernel_gives_empty_projection(self):
        node = ir.Conv2d(weights=np.zeros((1, 1, 3, 3)))
        assert len(conv_to_synapses(node, (1, 5, 5))) == 0

    def test_conv_fan_in_bounded_by_kernel_volume(self):
        rng = np.random.default_rng(7)
        node, in_shape = random_conv_case(rng)
        syn = conv_to_synapses(node, in_shape)
        if len(syn):
            _, counts = np.unique(syn["post"], return_counts=True)
            ic, _, kh, kw = node.weights.shape[1], None, *node.weights.shape[2:]
            assert counts.max() <= node.weights.shape[1] * kh * kw


class TestSegments:
    def chain(self, nodes, order):
        return ir.validate(ir.Graph(nodes=nodes, edges=list(zip(order[:-1], order[1:]))))

    def test_conv_pool_composition_matches_oracle(self):
        rng = np.random.default_rng(9)
        w = rng.normal(size=(3, 2, 3, 3))
        g = self.chain(
            {
                "in": ir.Input(shape=(2, 8, 8)),
                "c": ir.Conv2d(weights=w),
                "p": ir.SumPool2d(kernel=(2, 2), stride=(2, 2)),
                "n": lif_node(),
                "out": ir.Output(shape=27),
            },
            ["in", "c", "p", "n", "out"],
        )
        net = lower(g)
        mc, _ = dense_conv_matrix_oracle(w, (2, 8, 8), (1, 1), (0, 0), (1, 1))
        mp, _ = dense_pool_matrix_oracle((2, 2), (2, 2), (0, 0), (3, 6, 6))
        want = mp @ mc
        got = net.projections[0].dense_matrix(2 * 8 * 8, 3 * 3 * 3)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_pool_flatten_linear_composition(self):
        rng = np.random.default_rng(10)
        wl = rng.normal(size=(4, 2 * 2 * 2))
        g = self.chain(
            {
                "in": ir.Input(shape=(2, 4, 4)),
                "c": ir.Conv2d(weights=rng.normal(size=(2, 2, 1, 1))),
                "n0": lif_node(),
                "p": ir.SumPool2d(kernel=(2, 2), stride=(2, 2)),
                "f": ir.Flatten(),
                "l": ir.Linear(weights=wl),
                "n1": lif_node(),
                "out": ir.Output(shape=4),
            },
            ["in", "c", "n0", "p", "f", "l", "n1", "out"],
        )
        net = lower(g)
        mp, _ = dense_pool_matrix_oracle((2, 2), (2, 2), (0, 0), (2, 4, 4))
        want = wl @ mp
        got = net.projections[1].dense_matrix(2 * 4 * 4, 4)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_two_weight_nodes_in_one_segment_rejected(self):
        rng = np.random.default_rng(11)
        g = ir.Graph(
            nodes={
                "in": ir.Input(shape=(1, 2, 2)),
                "f": ir.Flatten(),
                "l0": ir.Linear(weights=rng.normal(size=(3, 4))),
                "l1": ir.Linear(weights=rng.normal(size=(2, 3))),
                "n": lif_node(),
                "out": ir.Output(shape=2),
            },
            edges=[("in", "f"), ("f", "l0"), ("l0", "l1"), ("l1", "n"), ("n", "out")],
        )
        with pytest.raises(LoweringError, match="2 weight nodes"):
            lower(ir.validate(g))

    def test_segment_without_weight_node_rejected(self):
        g = ir.Graph(
            nodes={
                "in": ir.Input(shape=(1, 2, 2)),
                "f": ir.Flatten(),
                "n": lif_node(),
                "out": ir.Output(shape=4),
            },
            edges=[("in", "f"), ("f", "n"), ("n", "out")],
        )
        with pytest.raises(LoweringError, match="no weight node"):
            lower(ir.validate(g))


@pytest.fixture(scope="module")
def net(gesture_net):
    return lower(gesture_net)


class TestGestureLowering:
    def test_population_roster(self, net):
        got = [(p.id, p.kind, p.size) for p in net.populations]
        assert got == [
            ("input", "spike_list_input", 2048),
            ("lif_1", "lif_conv2d", 3600),
            ("lif_3", "lif_conv2d", 3600),
            ("lif_6", "lif_conv2d", 392),
            ("lif_10", "lif_neuron", 256),
            ("lif_12", "lif_neuron", 11),
        ]

    def test_projection_count_and_endpoints(self, net):
        assert [(pr.pre, pr.post) for pr in net.projections] == [
            ("input", "lif_1"),
            ("lif_1", "lif_3"),
            ("lif_3", "lif_6"),
            ("lif_6", "lif_10"),
            ("lif_10", "lif_12"),
        ]

    def test_first_conv_synapse_count_frozen(self, net):
        # 16 out channels x 15x15 positions x mean in-bounds taps of 2x5x5
        assert len(net.projections[0].synapses) == 175232

    def test_all_delays_one(self, net):
        for pr in net.projections:
            assert np.all(pr.synapses["delay"] == 1)

    def test_quantized_lowering_uses_int_weights(self, gesture_net):
        qnet = lower(ptq_quantize_graph(gesture_net, PtqConfig()))
        for pr in qnet.projections[:1]:
            w = pr.synapses["weight"]
            assert pr.quantized
            assert np.all(w == np.round(w))
            assert w.min() >= -128 and w.max() <= 127

    def test_round_trip_serialization(self, net, tmp_path):
        p = str(tmp_path / "net.snnnetwork.json")
        save_network(net, p)
        net2 = load_network(p)
        assert [(q.id, q.size) for q in net2.populations] == [
            (q.id, q.size) for q in net.populations
        ]
        for a, b in zip(net.projections, net2.projections):
            np.testing.assert_array_equal(a.synapses["pre"], b.synapses["pre"])
            np.testing.assert_array_equal(a.synapses["post"], b.synapses["post"])
            # float weights round-trip at f4 precision
            np.testing.assert_allclose(
                a.synapses["weight"], b.synapses["weight"], rtol=1e-6
            )
