import json

import numpy as np
import pytest

from traincost.errors import SchemaError, ValidationError
from traincost.ir import (BUNDLED_NETWORKS, ConvLayerSpec, Edge, NetworkSpec,
                          bundled_network, network_to_dict, ofm_size,
                          parse_network, serialize_network)

from netgen import make_random_network


def conv(lid="a", **kw):
    base = dict(n=4, m=4, k=3, s=1, p=1, g=1, ip=8)
    base.update(kw)
    return ConvLayerSpec(layer_id=lid, **base)


class TestConvLayerSpec:
    def test_valid(self):
        layer = conv()
        assert layer.out_channels == 4
        assert layer.weight_params() == 4 * 4 * 9

    @pytest.mark.parametrize("field,value", [
        ("n", 0), ("m", 0), ("k", 0), ("s", 0), ("ip", 0), ("p", -1), ("g", 0)])
    def test_bounds(self, field, value):
        with pytest.raises(ValidationError):
            conv(**{field: value})

    def test_group_divisibility(self):
        with pytest.raises(ValidationError, match="m must be divisible"):
            conv(m=3, g=2, n=4)
        with pytest.raises(ValidationError, match="n must be divisible"):
            conv(m=4, g=2, n=3)

    def test_kernel_vs_padded_input(self):
        with pytest.raises(ValidationError, match="kernel exceeds"):
            conv(k=5, ip=2, p=1)


class TestOfmSize:
    def test_identity_1x1(self):
        assert ofm_size(conv(k=1, s=1, p=0, ip=32)) == 32

    def test_stride2_224(self):
        assert ofm_size(conv(ip=224, k=7, s=2, p=3)) == 112

    def test_window_enumeration_small(self):
        assert ofm_size(conv(ip=4, k=2, s=1, p=0)) == 3

    def test_matches_enumeration(self):
        # every (ip <= 16, k <= 5, s <= 3, p <= 2) with a valid window
        for ip in range(1, 17):
            for k in range(1, 6):
                for s in range(1, 4):
                    for p in range(0, 3):
                        if k > ip + 2 * p:
                            continue
                        starts = [y for y in range(-p, ip + p) if y + k <= ip + p]
                        positions = len([y for y in starts if (y + p) % s == 0])
                        layer = conv(ip=ip, k=k, s=s, p=p)
                        assert ofm_size(layer) == positions, (ip, k, s, p)


class TestNetworkValidation:
    def test_duplicate_layer_id(self):
        with pytest.raises(ValidationError, match="duplicate"):
            NetworkSpec(name="n", layers=(conv("a"), conv("a")))

    def test_unknown_edge_endpoint(self):
        with pytest.raises(ValidationError, match="unknown layer"):
            NetworkSpec(name="n", layers=(conv("a"),), edges=(Edge("a", "b"),))

    def test_channel_consistency(self):
        a = conv("a", n=64)
        b = conv("b", m=32)
        with pytest.raises(ValidationError, match="channel consistency"):
            NetworkSpec(name="n", layers=(a, b), edges=(Edge("a", "b"),))

    def test_concat_sums_producers(self):
        a, b = conv("a", n=3), conv("b", n=5)
        c = conv("c", m=8)
        NetworkSpec(name="n", layers=(a, b, c),
                    edges=(Edge("a", "c", "concat"), Edge("b", "c", "concat")))

    def test_add_requires_equal_producers(self):
        a, b = conv("a", n=3), conv("b", n=5)
        c = conv("c", m=3)
        with pytest.raises(ValidationError, match="share filter count"):
            NetworkSpec(name="n", layers=(a, b, c),
                        edges=(Edge("a", "c", "add"), Edge("b", "c", "add")))

    def test_mixed_modes_rejected(self):
        a, b = conv("a", n=4), conv("b", n=4)
        c = conv("c", m=8)
        with pytest.raises(ValidationError, match="mixed edge modes"):
            NetworkSpec(name="n", layers=(a, b, c),
                        edges=(Edge("a", "c", "concat"), Edge("b", "c", "add")))

    def test_cycle_rejected(self):
        a = conv("a", m=4, n=4)
        b = conv("b", m=4, n=4)
        with pytest.raises(ValidationError, match="cycle"):
            NetworkSpec(name="n", layers=(a, b),
                        edges=(Edge("a", "b"), Edge("b", "a")))


class TestParsing:
    def test_minimal_single_layer(self):
        doc = {"name": "one", "input": {"channels": 3, "spatial": 224},
               "layers": [{"id": "c1", "type": "conv", "n": 64, "m": 3, "k": 7,
                           "s": 2, "p": 3, "g": 1, "ip": 224}]}
        net = parse_network(json.dumps(doc))
        assert len(net.layers) == 1
        assert net.edges == ()

    def test_malformed_json(self):
        with pytest.raises(SchemaError, match="not valid JSON"):
            parse_network("{nope")

    def test_missing_field(self):
        doc = {"name": "x", "layers": [{"id": "a", "type": "conv", "n": 1}]}
        with pytest.raises(SchemaError, match="missing field"):
            parse_network(json.dumps(doc))

    def test_channel_error_names_layer(self):
        doc = {"name": "x", "layers": [
            {"id": "a", "type": "conv", "n": 64, "m": 3, "k": 3, "s": 1, "p": 1, "ip": 8, "g": 1},
            {"id": "b", "type": "conv", "n": 8, "m": 32, "k": 3, "s": 1, "p": 1, "ip": 8, "g": 1}],
            "edges": [{"from": "a", "to": "b"}]}
        with pytest.raises(ValidationError, match="channel consistency.*'b'"):
            parse_network(json.dumps(doc))

    def test_shape_layer_roundtrip(self):
        doc = {"name": "x", "input": {"channels": 3, "spatial": 8}, "layers": [
            {"id": "a", "type": "conv", "n": 4, "m": 3, "k": 3, "s": 1, "p": 1, "ip": 8, "g": 1},
            {"id": "pool", "type": "shape", "out_channels": 4, "out_spatial": 4},
            {"id": "b", "type": "conv", "n": 2, "m": 4, "k": 1, "s": 1, "p": 0, "ip": 4, "g": 1}],
            "edges": [{"from": "a", "to": "pool"}, {"from": "pool", "to": "b"}]}
        net = parse_network(json.dumps(doc))
        assert len(net.conv_layers()) == 2
        again = parse_network(serialize_network(net))
        assert again == net

    def test_roundtrip_random(self, rng):
        for i in range(20):
            net = make_random_network(rng, name=f"r{i}", allow_groups=True)
            assert parse_network(serialize_network(net)) == net


class TestBundled:
    def test_resnet18_has_20_convs(self):
        net = bundled_network("resnet18")
        assert len(net.conv_layers()) == 20

    @pytest.mark.parametrize("name", BUNDLED_NETWORKS)
    def test_all_parse_and_validate(self, name):
        net = bundled_network(name)
        assert net.name == name
        assert len(net.conv_layers()) >= 20
        # serialization round-trips
        assert parse_network(serialize_network(net)) == net

    def test_depthwise_layers_present_in_mobilenetv2(self):
        net = bundled_network("mobilenetv2")
        dw = [l for l in net.conv_layers() if l.g > 1]
        assert dw and all(l.g == l.m for l in dw)

    def test_unknown_bundled_name(self):
        with pytest.raises(SchemaError):
            bundled_network("lenet")

    def test_to_dict_fields(self):
        doc = network_to_dict(bundled_network("squeezenet"))
        assert set(doc) == {"name", "input", "layers", "edges"}
        assert doc["layers"][0]["id"] == "conv1"
