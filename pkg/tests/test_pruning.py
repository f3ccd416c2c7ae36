import numpy as np
import pytest

from traincost.errors import PruneError
from traincost.ir import ConvLayerSpec, Edge, NetworkSpec, bundled_network
from traincost.pruning import (LayerWeighted, PruneConfig, UniformRandom,
                               build_strategy, prune_network, resize_network)

from netgen import make_random_network


def chain(*specs):
    layers = []
    edges = []
    prev = None
    for i, (n, m) in enumerate(specs):
        lid = f"c{i}"
        layers.append(ConvLayerSpec(layer_id=lid, n=n, m=m, k=3, s=1, p=1, g=1, ip=16))
        if prev:
            edges.append(Edge(prev, lid))
        prev = lid
    return NetworkSpec(name="chain", layers=tuple(layers), edges=tuple(edges))


class TestPruneBasics:
    def test_level_zero_is_identity(self):
        net = bundled_network("resnet18")
        assert prune_network(net, PruneConfig(level=0)) == net

    def test_single_layer_half(self):
        net = chain((64, 3))
        out = prune_network(net, PruneConfig(level=50))
        assert out.layer("c0").n == 32

    def test_chain_propagation(self):
        net = chain((64, 3), (128, 64))
        out = prune_network(net, PruneConfig(level=50))
        assert out.layer("c0").n == 32
        assert out.layer("c1").m == 32
        assert out.layer("c1").n == 64

    def test_never_prunes_to_zero(self):
        net = chain((2, 3))
        out = prune_network(net, PruneConfig(level=90))
        assert out.layer("c0").n == 1

    def test_round_half_up(self):
        # 5 * 0.5 = 2.5 rounds up to 3
        net = chain((5, 3))
        out = prune_network(net, PruneConfig(level=50))
        assert out.layer("c0").n == 3

    def test_level_range(self):
        with pytest.raises(PruneError):
            PruneConfig(level=100)
        with pytest.raises(PruneError):
            PruneConfig(level=-1)


class TestLayerWeighted:
    def test_unknown_layer_id(self):
        net = chain((8, 3), (8, 8))
        cfg = PruneConfig(level=50, strategy=LayerWeighted({"c0": 1, "c1": 1, "zz": 1}))
        with pytest.raises(PruneError, match="unknown layer_ids"):
            prune_network(net, cfg)

    def test_missing_layer_id(self):
        net = chain((8, 3), (8, 8))
        cfg = PruneConfig(level=50, strategy=LayerWeighted({"c0": 1}))
        with pytest.raises(PruneError, match="missing"):
            prune_network(net, cfg)

    def test_negative_weight(self):
        with pytest.raises(PruneError):
            LayerWeighted({"c0": -1})

    def test_weights_shift_pruning_toward_heavy_layers(self):
        net = chain((64, 3), (64, 64))
        cfg = PruneConfig(level=40, strategy=LayerWeighted({"c0": 1, "c1": 3}))
        out = prune_network(net, cfg)
        # normalized weights 0.5 and 1.5 -> effective levels 20% and 60%
        assert out.layer("c0").n == 51
        assert out.layer("c1").n == 26

    def test_heavy_weights_saturate_without_zeroing(self):
        # c1's effective level would be 120%; it saturates at 99% and the
        # layer keeps at least one filter
        net = chain((64, 3), (64, 64))
        cfg = PruneConfig(level=60, strategy=LayerWeighted({"c0": 0, "c1": 1}))
        out = prune_network(net, cfg)
        assert out.layer("c0").n == 64
        assert out.layer("c1").n == 1

    def test_depth_weighted_strategy_prunes_deeper_more(self):
        net = chain((64, 3), (64, 64), (64, 64))
        cfg = PruneConfig(level=30, strategy=build_strategy("depth_weighted", net))
        out = prune_network(net, cfg)
        counts = [out.layer(f"c{i}").n for i in range(3)]
        assert counts[0] > counts[1] > counts[2]


class TestStructuralPropagation:
    def test_residual_class_shares_count(self):
        net = bundled_network("resnet18")
        out = prune_network(net, PruneConfig(level=50))
        # conv1 and both block outputs of stage 1 carry the same stream
        assert out.layer("conv1").n == out.layer("l1b1c2").n == out.layer("l1b2c2").n
        assert out.layer("l2b1c1").m == out.layer("conv1").n

    def test_concat_consumer_channels(self):
        net = bundled_network("squeezenet")
        out = prune_network(net, PruneConfig(level=30))
        e1, e3 = out.layer("f2e1").n, out.layer("f2e3").n
        assert out.layer("f3sq").m == e1 + e3

    def test_depthwise_follows_producer(self):
        net = bundled_network("mobilenetv2")
        out = prune_network(net, PruneConfig(level=50))
        for layer in out.conv_layers():
            assert layer.m % layer.g == 0 and layer.n % layer.g == 0
        dw = [l for l in out.conv_layers() if l.layer_id.endswith("dw")]
        assert dw and all(l.g == l.m and l.n == l.m for l in dw)
        # the depthwise width tracks its expansion conv
        exp = out.layer("b2exp")
        assert out.layer("b2dw").m == exp.n

    def test_grouped_conv_count_stays_divisible(self):
        layers = (
            ConvLayerSpec(layer_id="a", n=8, m=3, k=3, s=1, p=1, g=1, ip=16),
            ConvLayerSpec(layer_id="b", n=8, m=8, k=3, s=1, p=1, g=4, ip=16),
        )
        net = NetworkSpec(name="g", layers=layers, edges=(Edge("a", "b"),))
        for level in (10, 30, 50, 70, 90):
            out = prune_network(net, PruneConfig(level=level))
            assert out.layer("a").n % 4 == 0  # consumer's groups force divisibility
            assert out.layer("b").m == out.layer("a").n
            assert out.layer("b").n % out.layer("b").g == 0

    def test_determinism(self, rng):
        for i in range(10):
            net = make_random_network(rng, name=f"d{i}", allow_groups=True)
            cfg = PruneConfig(level=37, seed=99)
            assert prune_network(net, cfg) == prune_network(net, cfg)

    def test_output_always_valid(self, rng):
        # NetworkSpec re-validates on construction, so surviving this loop
        # means every invariant held
        count = 0
        for i in range(60):
            net = make_random_network(rng, name=f"p{i}", allow_groups=True)
            for level in (0, 15, 50, 85):
                for strategy in (UniformRandom(),
                                 build_strategy("depth_weighted", net)):
                    out = prune_network(net, PruneConfig(level=level, strategy=strategy))
                    assert len(out.layers) == len(net.layers)
                    count += 1
        assert count == 60 * 4 * 2

    def test_resize_with_explicit_fractions(self):
        from fractions import Fraction
        net = chain((64, 3), (32, 64))
        out = resize_network(net, {"c0": Fraction(1, 4), "c1": Fraction(1)})
        assert out.layer("c0").n == 16
        assert out.layer("c1").m == 16
        assert out.layer("c1").n == 32
