"""
Tests for the binarized graph attention layers and model
"""

import math

import numpy as np
import pytest

from bgn.bgat import (
    BgnConfig,
    BgnModel,
    Estimator,
    Level,
    attention_coefficients,
    elu,
    layer_forward,
    loss_and_accuracy,
    memory_report,
    output_forward,
)
from bgn.binarize import sign_det
from bgn.errors import BadParamError, IndexOutOfRangeError, ShapeMismatchError, StaleCacheError
from bgn.graph import Graph, build_graph, synth_citation_graph
from bgn.rng import RngStream

TRAIN_IDS = np.array([0, 2, 3, 5, 7, 11])


def complete_graph(n: int, dim: int) -> Graph:
    iu, ju = np.triu_indices(n, 1)
    return build_graph(n, np.stack([iu, ju], axis=1), np.ones((n, dim)), np.zeros(n, dtype=np.int64), n_classes=2)


def single_node(features: np.ndarray, n_classes: int = 2) -> Graph:
    return build_graph(1, np.zeros((0, 2), dtype=np.int64), features, np.array([0]), n_classes=n_classes)


def naive_head(head, h, graph, activate):
    """Node-by-node additive attention, straight from the definition"""
    z = h @ head.W
    d = z.shape[1]
    p = np.zeros_like(z)
    for i in range(graph.n_nodes):
        nb = graph.neighbors(i)
        e = np.array([head.a[:d] @ z[i] + head.a[d:] @ z[j] for j in nb])
        s = np.exp(e - e.max())
        s /= s.sum()
        p[i] = (s[:, None] * z[nb]).sum(axis=0)
    return activate(p)


def naive_probs(model, graph):
    h = graph.features
    for layer in model.layers:
        h = np.concatenate([naive_head(head, h, graph, elu) for head in layer.heads], axis=1)
    outs = [naive_head(head, h, graph, lambda p: p) for head in model.output.heads]
    logits = model.logit_scale * np.mean(outs, axis=0)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    return probs / probs.sum(axis=1, keepdims=True)


def numeric_gradients(model, graph, ids, eps=1e-6):
    numeric = {}
    for name, value in model.parameters().items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            saved = value[idx]
            value[idx] = saved + eps
            up = model.loss(graph, ids)
            value[idx] = saved - eps
            down = model.loss(graph, ids)
            value[idx] = saved
            grad[idx] = (up - down) / (2 * eps)
        numeric[name] = grad
    return numeric


class TestConfig:
    """Test model configuration checks"""

    def test_strings_become_enums(self):
        """Level and estimator accept their string values"""
        cfg = BgnConfig(in_dim=3, n_classes=2, level="wec", estimator="reinforce")
        assert cfg.level is Level.WEC
        assert cfg.estimator is Estimator.REINFORCE

    def test_reinforce_needs_binarization(self):
        """REINFORCE on an unbinarized model is refused"""
        with pytest.raises(BadParamError):
            BgnConfig(in_dim=3, n_classes=2, level="none", estimator="reinforce")

    def test_positive_sizes(self):
        """Head counts and widths must be positive"""
        with pytest.raises(BadParamError):
            BgnConfig(in_dim=3, n_classes=2, heads=0)

    @pytest.mark.parametrize(
        ("level", "flags"),
        [
            ("none", (False, False, False)),
            ("w", (True, False, False)),
            ("e", (False, True, False)),
            ("we", (True, True, False)),
            ("wec", (True, True, True)),
        ],
    )
    def test_level_flags(self, level, flags):
        """Each level binarizes exactly the tensors it names"""
        value = Level(level)
        assert (value.weights, value.embeddings, value.coefficients) == flags

    def test_feature_count_checked(self, tiny_graph):
        """Feature width must match in_dim"""
        model = BgnModel(BgnConfig(in_dim=4, n_classes=2, heads=1, d_head=2))
        with pytest.raises(ShapeMismatchError):
            model.predict(tiny_graph)


class TestAttentionCoefficients:
    """Test coefficient computation per neighborhood"""

    def test_identical_neighbors_share_weight(self):
        """Equal scores over four neighbors give 0.25 each"""
        g = complete_graph(4, 3)
        model = BgnModel(BgnConfig(in_dim=3, n_classes=2, heads=1, d_head=4))
        (coef,) = attention_coefficients(model.layers[0], g.features, g)
        np.testing.assert_allclose(coef, 0.25)

    def test_centered_uniform_falls_back_to_plus_one(self):
        """An all-zero centered row is replaced by +1 everywhere"""
        g = complete_graph(4, 3)
        model = BgnModel(BgnConfig(in_dim=3, n_classes=2, heads=1, d_head=4, level="wec"))
        (coef,) = attention_coefficients(model.layers[0], g.features, g)
        assert np.array_equal(coef.to_dense(), np.ones((4, 4)))

    def test_single_neighbor_gets_full_weight(self):
        """A neighborhood of one has coefficient 1"""
        g = Graph(np.array([0, 1, 2]), np.array([1, 0]), np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]), 2)
        model = BgnModel(BgnConfig(in_dim=2, n_classes=2, heads=1, d_head=3))
        (coef,) = attention_coefficients(model.layers[0], g.features, g)
        np.testing.assert_allclose(coef, [1.0, 1.0])

    def test_raw_sign_is_all_positive(self, small_graph):
        """Without centering every stored edge gets +1"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, level="wec", center_coefficients=False))
        for coef in attention_coefficients(model.layers[0], small_graph.features, small_graph):
            dense = coef.to_dense()
            assert np.all(dense[small_graph.edge_rows, small_graph.csr_targets] == 1.0)
            assert dense.sum() == small_graph.csr_targets.size

    def test_real_rows_sum_to_one(self, small_graph):
        """Softmax coefficients sum to one over each neighborhood"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3))
        for coef in attention_coefficients(model.layers[0], small_graph.features, small_graph):
            sums = np.add.reduceat(coef, small_graph.csr_offsets[:-1])
            np.testing.assert_allclose(sums, 1.0)

    @pytest.mark.parametrize("scoring", ["additive", "dot"])
    def test_centered_rows_never_empty(self, fixture_graph, scoring):
        """Every centered row keeps at least one nonzero entry"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="wec", scoring=scoring), seed=2)
        h = layer_forward(model.layers[0], fixture_graph.features, fixture_graph)
        for coef in attention_coefficients(model.output, h, fixture_graph):
            assert np.all(np.abs(coef.to_dense()).sum(axis=1) >= 1)


class TestLayerForward:
    """Test hidden and output layers"""

    def test_matches_naive_reference(self, small_graph):
        """Unbinarized model equals a node-by-node implementation"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, output_heads=2), seed=4)
        np.testing.assert_allclose(model.predict(small_graph, fast=False), naive_probs(model, small_graph), atol=1e-10)

    def test_duplicate_heads_duplicate_output(self, small_graph):
        """Two heads with equal parameters produce equal halves"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, level="we"))
        first, second = model.layers[0].heads
        second.W[...] = first.W
        second.a[...] = first.a
        out = layer_forward(model.layers[0], small_graph.features, small_graph)
        assert np.array_equal(out[:, :3], out[:, 3:])

    @pytest.mark.parametrize("fast", [False, True])
    def test_single_node_hand_trace(self, fast):
        """One node with a self-loop outputs sign(x W)"""
        x = np.array([[0.5, -0.2, 0.1]])
        w = np.array([[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
        model = BgnModel(BgnConfig(in_dim=3, n_classes=2, heads=1, d_head=3, level="we"))
        model.layers[0].heads[0].W[...] = w
        out = layer_forward(model.layers[0], x, single_node(x), fast=fast)
        assert np.array_equal(out, [[1.0, -1.0, -1.0]])

    def test_uniform_output(self):
        """All +1 weights and inputs give equal class probabilities"""
        model = BgnModel(BgnConfig(in_dim=4, n_classes=3, heads=1, d_head=4, level="we", logit_scale="unit"))
        model.output.heads[0].W[...] = 1.0
        probs = output_forward(model, np.ones((1, 4)), single_node(np.zeros((1, 4)), n_classes=3))
        np.testing.assert_allclose(probs, [[1 / 3, 1 / 3, 1 / 3]])

    @pytest.mark.parametrize("level", ["none", "w", "e", "we", "wec"])
    def test_probabilities_are_distributions(self, small_graph, level):
        """Output rows are nonnegative and sum to one"""
        probs = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=4, level=level)).predict(small_graph)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_binary_embeddings(self, fixture_graph):
        """Embedding levels emit only +1 and -1"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="we", balance=True))
        assert set(np.unique(model.embeddings(fixture_graph))) <= {-1.0, 1.0}

    def test_unbinarized_embeddings_stay_real(self, fixture_graph):
        """Level none keeps real-valued hidden representations"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8))
        assert not set(np.unique(model.embeddings(fixture_graph))) <= {-1.0, 1.0}

    def test_weight_sign_flip_negates_transform(self, small_graph):
        """Negating latent weights negates the head's pre-attention features"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=4, level="w"), seed=8)
        layer = model.layers[0]
        before = layer.head_forward(0, small_graph.features, small_graph).z
        layer.heads[0].W *= -1.0
        after = layer.head_forward(0, small_graph.features, small_graph).z
        np.testing.assert_allclose(after, -before, atol=1e-12)


class TestFastPath:
    """Test the bit-kernel inference path"""

    def test_kernels_match_dense_path(self, fixture_graph):
        """Packed kernels reproduce the dense forward"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="wec"), seed=5)
        assert np.array_equal(model.embeddings(fixture_graph, fast=True), model.embeddings(fixture_graph, fast=False))
        np.testing.assert_allclose(model.logits(fixture_graph, fast=True), model.logits(fixture_graph, fast=False), atol=1e-10)

    @pytest.mark.parametrize(("density", "noise"), [(0.02, 0.01), (0.3, 0.05)])
    def test_kernels_match_dense_path_on_bag_of_words(self, density, noise):
        """Exact cancellations in sparse features binarize the same way on both paths"""
        graph = synth_citation_graph(300, 120, 4, 0.8, RngStream(11), density=density, noise=noise)
        for seed in range(3):
            model = BgnModel(BgnConfig(in_dim=120, n_classes=4, heads=2, d_head=8, level="wec"), seed=seed)
            assert np.array_equal(model.embeddings(graph, fast=True), model.embeddings(graph, fast=False))
            np.testing.assert_allclose(model.logits(graph, fast=True), model.logits(graph, fast=False), rtol=0, atol=1e-10)

    def test_workers_do_not_change_output(self, fixture_graph):
        """Head-parallel inference equals serial inference"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=4, d_head=8, level="we"), seed=5)
        assert np.array_equal(model.predict(fixture_graph, workers=4), model.predict(fixture_graph, workers=1))

    def test_inference_is_deterministic(self, fixture_graph):
        """Same seed, same predictions, even with a stochastic estimator"""
        cfg = BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="wec", estimator="reinforce")
        assert np.array_equal(BgnModel(cfg, seed=1).predict(fixture_graph), BgnModel(cfg, seed=1).predict(fixture_graph))

    def test_argmax_ignores_logit_scale(self, fixture_graph):
        """Scaling logits does not change predicted classes"""
        model = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="we"))
        logits = model.logits(fixture_graph)
        assert np.array_equal(np.argmax(logits, axis=1), np.argmax(3.0 * logits, axis=1))


class TestLossAndAccuracy:
    """Test the evaluation helper"""

    def test_perfect_prediction(self):
        """One-hot correct probabilities give zero loss"""
        loss, acc = loss_and_accuracy(np.eye(3), np.array([0, 1, 2]), [0, 1, 2])
        assert loss == 0.0
        assert acc == 1.0

    def test_uniform_over_seven(self):
        """Uniform over seven classes costs ln 7 per node"""
        loss, _ = loss_and_accuracy(np.full((1, 7), 1 / 7), np.array([3]), [0])
        assert loss == pytest.approx(math.log(7))

    def test_two_class_example(self):
        """Probability 0.7 on the label costs -ln 0.7 and counts as correct"""
        loss, acc = loss_and_accuracy(np.array([[0.7, 0.3]]), np.array([0]), [0])
        assert loss == pytest.approx(-math.log(0.7))
        assert acc == 1.0

    def test_out_of_range_id(self):
        """Ids past the node count raise"""
        with pytest.raises(IndexOutOfRangeError):
            loss_and_accuracy(np.eye(2), np.array([0, 1]), [2])


class TestBackward:
    """Test hand-derived gradients"""

    @pytest.mark.parametrize(
        ("scoring", "output_heads", "logit_scale", "n_layers"),
        [("additive", 1, "inv_sqrt_dim", 2), ("dot", 2, "unit", 3), ("additive", 2, "unit", 3)],
    )
    def test_matches_finite_differences(self, small_graph, scoring, output_heads, logit_scale, n_layers):
        """Unbinarized gradients agree with central differences"""
        cfg = BgnConfig(
            in_dim=5, n_classes=3, n_layers=n_layers, heads=2, d_head=3,
            scoring=scoring, output_heads=output_heads, logit_scale=logit_scale,
        )
        model = BgnModel(cfg, seed=6)
        model.forward(small_graph)
        loss, grads = model.backward(small_graph, TRAIN_IDS)
        assert loss == pytest.approx(model.loss(small_graph, TRAIN_IDS))
        numeric = numeric_gradients(model, small_graph, TRAIN_IDS)
        assert grads.keys() == numeric.keys()
        for name, expected in numeric.items():
            np.testing.assert_allclose(grads[name], expected, rtol=1e-4, atol=1e-6, err_msg=name)

    def test_straight_through_weights(self, small_graph):
        """Binarized-weight gradients equal those of a real model run at sign(W)"""
        binary = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, level="w", weight_clip=None), seed=3)
        real = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3), seed=3)
        real.set_parameters({name: sign_det(v) if name.endswith(".W") else v for name, v in binary.parameters().items()})
        binary.forward(small_graph)
        real.forward(small_graph)
        loss_b, grads_b = binary.backward(small_graph, TRAIN_IDS)
        loss_r, grads_r = real.backward(small_graph, TRAIN_IDS)
        assert loss_b == pytest.approx(loss_r)
        for name in grads_r:
            np.testing.assert_allclose(grads_b[name], grads_r[name], rtol=1e-12, atol=1e-12)

    def test_weight_clip_zeroes_saturated_entries(self, small_graph):
        """Latent weights beyond the clip receive no gradient"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=3, level="w", weight_clip=1.0))
        model.layers[0].heads[0].W[0, :] = 2.0
        model.forward(small_graph)
        _, grads = model.backward(small_graph, TRAIN_IDS)
        assert np.all(grads["layers.0.heads.0.W"][0] == 0.0)

    def test_no_labeled_nodes_gives_zero_gradient(self, small_graph):
        """An empty id set has zero loss and zero gradients"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, level="we"))
        model.forward(small_graph)
        loss, grads = model.backward(small_graph, np.array([], dtype=np.int64))
        assert loss == 0.0
        assert all(np.linalg.norm(g) <= 1e-6 for g in grads.values())

    def test_reinforce_gradients(self, small_graph):
        """Score-function gradients cover every parameter and stay finite"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=2, d_head=3, level="wec", estimator="reinforce"))
        model.forward(small_graph)
        _, grads = model.backward(small_graph, TRAIN_IDS)
        params = model.parameters()
        assert grads.keys() == params.keys()
        for name, grad in grads.items():
            assert grad.shape == params[name].shape
            assert np.isfinite(grad).all()
        assert "layers.0.heads.0.W" in model.reinforce_states
        assert "layers.0.heads.0.h" in model.reinforce_states


class TestCache:
    """Test forward/backward pairing"""

    def test_backward_without_forward(self, small_graph):
        """A fresh model has nothing to differentiate"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=2))
        with pytest.raises(StaleCacheError):
            model.backward(small_graph, TRAIN_IDS)

    def test_cache_is_consumed(self, small_graph):
        """A second backward needs a new forward"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=2))
        model.forward(small_graph)
        model.backward(small_graph, TRAIN_IDS)
        with pytest.raises(StaleCacheError):
            model.backward(small_graph, TRAIN_IDS)

    def test_uncached_forward(self, small_graph):
        """cache=False leaves nothing behind"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=2))
        model.forward(small_graph, cache=False)
        with pytest.raises(StaleCacheError):
            model.backward(small_graph, TRAIN_IDS)

    def test_other_graph(self, small_graph, tiny_graph):
        """The cache belongs to the graph it was built on"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=2))
        model.forward(small_graph)
        with pytest.raises(StaleCacheError):
            model.backward(tiny_graph, np.array([0]))

    def test_set_parameters_checks(self):
        """Unknown names and wrong shapes are refused"""
        model = BgnModel(BgnConfig(in_dim=5, n_classes=3, heads=1, d_head=2))
        with pytest.raises(KeyError):
            model.set_parameters({"layers.9.heads.0.W": np.zeros((5, 2))})
        with pytest.raises(ShapeMismatchError):
            model.set_parameters({"layers.0.heads.0.W": np.zeros((2, 2))})


class TestMemory:
    """Test storage accounting"""

    def test_binary_weights_take_one_bit(self):
        """Float weights need 64 times the bits of binary ones"""
        real = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8))
        binary = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="w"))
        assert real.weight_bits() == 64 * binary.weight_bits()
        assert real.scoring_bits() == binary.scoring_bits()

    def test_embedding_bits(self):
        """Binary embeddings cost one bit per channel"""
        real = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8))
        binary = BgnModel(BgnConfig(in_dim=100, n_classes=4, heads=2, d_head=8, level="we"))
        assert real.embedding_bits_per_node() == 16 * 64
        assert binary.embedding_bits_per_node() == 16

    def test_report_totals(self):
        """Parameter bits add weights and scoring vectors"""
        report = memory_report(BgnModel(BgnConfig(in_dim=10, n_classes=3, heads=2, d_head=4, level="wec")))
        assert report.weight_bits == 10 * 4 * 2 + 8 * 3
        assert report.scoring_bits == 64 * (2 * 8 + 6)
        assert report.parameter_bits == report.weight_bits + report.scoring_bits
