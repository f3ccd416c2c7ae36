"""Network intermediate representation.

A network is described purely by per-layer convolution parameters plus
channel-dependency edges; no weights are ever stored.  All values are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

from .errors import SchemaError, ValidationError

EDGE_MODES = ("passthrough", "concat", "add")

BUNDLED_NETWORKS = ("resnet18", "mobilenetv2", "squeezenet", "mnasnet")


@dataclass(frozen=True)
class ConvLayerSpec:
    """One convolution layer: n filters of size (m/g) x k x k over an ip x ip input."""

    layer_id: str
    n: int   # filter count
    m: int   # input channels
    k: int   # kernel spatial size
    s: int   # stride
    p: int   # padding
    g: int   # groups
    ip: int  # input spatial size (square)

    def __post_init__(self):
        for name, lo in (("n", 1), ("m", 1), ("k", 1), ("s", 1), ("ip", 1), ("p", 0), ("g", 1)):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                raise ValidationError(f"{name} must be an integer >= {lo}", self.layer_id, f"got {v!r}")
        if self.m % self.g != 0:
            raise ValidationError("m must be divisible by g", self.layer_id, f"m={self.m} g={self.g}")
        if self.n % self.g != 0:
            raise ValidationError("n must be divisible by g", self.layer_id, f"n={self.n} g={self.g}")
        if self.k > self.ip + 2 * self.p:
            raise ValidationError(
                "kernel exceeds padded input", self.layer_id,
                f"k={self.k} > ip+2p={self.ip + 2 * self.p}")

    @property
    def out_channels(self) -> int:
        return self.n

    def weight_params(self) -> int:
        return self.n * (self.m // self.g) * self.k * self.k


def ofm_size(layer: ConvLayerSpec) -> int:
    """Output spatial size: 1 + floor((ip + 2p - k) / s)."""
    return 1 + (layer.ip + 2 * layer.p - layer.k) // layer.s


@dataclass(frozen=True)
class ShapeLayerSpec:
    """Opaque non-convolution entry (pooling, flatten, ...) that only
    re-shapes the tensor seen by downstream convolutions."""

    layer_id: str
    out_channels: int
    out_spatial: int

    def __post_init__(self):
        if self.out_channels < 1 or self.out_spatial < 1:
            raise ValidationError("shape layer dimensions must be >= 1", self.layer_id)


LayerSpec = ConvLayerSpec | ShapeLayerSpec


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    mode: str = "passthrough"

    def __post_init__(self):
        if self.mode not in EDGE_MODES:
            raise ValidationError(f"unknown edge mode {self.mode!r}", self.dst)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    edges: tuple[Edge, ...] = ()
    input_channels: int = 3
    input_spatial: int = 224
    # caches derived in __post_init__; not part of equality
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "edges", tuple(self.edges))
        self._validate()

    # -- accessors -------------------------------------------------------

    def layer(self, layer_id: str) -> LayerSpec:
        return self._index[layer_id]

    def conv_layers(self) -> tuple[ConvLayerSpec, ...]:
        return tuple(l for l in self.layers if isinstance(l, ConvLayerSpec))

    def producers(self, layer_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.dst == layer_id)

    def consumers(self, layer_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.src == layer_id)

    def weight_params(self) -> int:
        return sum(l.weight_params() for l in self.conv_layers())

    # -- validation ------------------------------------------------------

    def _validate(self):
        index: dict[str, LayerSpec] = {}
        for layer in self.layers:
            if layer.layer_id in index:
                raise ValidationError("duplicate layer_id", layer.layer_id)
            index[layer.layer_id] = layer
        object.__setattr__(self, "_index", index)

        if self.input_channels < 1 or self.input_spatial < 1:
            raise ValidationError("network input dimensions must be >= 1")

        incoming: dict[str, list[Edge]] = {l.layer_id: [] for l in self.layers}
        for e in self.edges:
            if e.src not in index:
                raise ValidationError("edge references unknown layer", e.src)
            if e.dst not in index:
                raise ValidationError("edge references unknown layer", e.dst)
            incoming[e.dst].append(e)

        self._check_acyclic(incoming)

        for layer_id, edges in incoming.items():
            if not edges:
                continue
            modes = {e.mode for e in edges}
            if len(modes) > 1:
                raise ValidationError("mixed edge modes into one consumer", layer_id)
            mode = modes.pop()
            if mode == "passthrough" and len(edges) > 1:
                raise ValidationError("multiple passthrough producers", layer_id)
            consumer = index[layer_id]
            if not isinstance(consumer, ConvLayerSpec):
                continue  # shape layers are opaque on the consumer side
            produced = [_out_channels(index[e.src]) for e in edges]
            if mode == "add":
                if len(set(produced)) > 1:
                    raise ValidationError(
                        "add producers must share filter count", layer_id,
                        f"got {sorted(set(produced))}")
                expected = produced[0]
            elif mode == "concat":
                expected = sum(produced)
            else:
                expected = produced[0]
            if consumer.m != expected:
                raise ValidationError(
                    "channel consistency", layer_id,
                    f"m={consumer.m} but producers supply {expected}")

    def _check_acyclic(self, incoming: dict[str, list[Edge]]):
        order = _topological_order(self.layers, incoming)
        if len(order) != len(self.layers):
            raise ValidationError("dependency graph has a cycle")
        object.__setattr__(self, "_topo", order)

    def topological_order(self) -> tuple[str, ...]:
        return tuple(self._topo)


def _out_channels(layer: LayerSpec) -> int:
    return layer.n if isinstance(layer, ConvLayerSpec) else layer.out_channels


def _topological_order(layers, incoming) -> list[str]:
    remaining = {l.layer_id: len(incoming[l.layer_id]) for l in layers}
    outgoing: dict[str, list[str]] = {l.layer_id: [] for l in layers}
    for edges in incoming.values():
        for e in edges:
            outgoing[e.src].append(e.dst)
    # deterministic order: original layer order among ready nodes
    order, ready = [], [l.layer_id for l in layers if remaining[l.layer_id] == 0]
    seen_ready = set(ready)
    while ready:
        node = ready.pop(0)
        order.append(node)
        for nxt in outgoing[node]:
            remaining[nxt] -= 1
            if remaining[nxt] == 0 and nxt not in seen_ready:
                ready.append(nxt)
                seen_ready.add(nxt)
    return order


# -- JSON parsing / serialization ----------------------------------------

_CONV_FIELDS = {"n": "n", "m": "m", "k": "k", "s": "s", "p": "p", "g": "g", "ip": "ip"}


def parse_network(text: str) -> NetworkSpec:
    """Parse a network JSON document into a validated NetworkSpec."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def network_from_dict(doc) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("'name' must be a non-empty string")
    inp = doc.get("input", {})
    if not isinstance(inp, dict):
        raise SchemaError("'input' must be an object")
    channels = _require_int(inp, "channels", "input.channels", default=3)
    spatial = _require_int(inp, "spatial", "input.spatial", default=224)

    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise SchemaError("'layers' must be a list")
    layers: list[LayerSpec] = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise SchemaError(f"layers[{i}] must be an object")
        lid = entry.get("id")
        if not isinstance(lid, str) or not lid:
            raise SchemaError(f"layers[{i}].id must be a non-empty string")
        kind = entry.get("type", "conv")
        if kind == "conv":
            kwargs = {attr: _require_int(entry, key, f"layers[{i}].{key}")
                      for key, attr in _CONV_FIELDS.items()}
            layers.append(ConvLayerSpec(layer_id=lid, **kwargs))
        elif kind == "shape":
            layers.append(ShapeLayerSpec(
                layer_id=lid,
                out_channels=_require_int(entry, "out_channels", f"layers[{i}].out_channels"),
                out_spatial=_require_int(entry, "out_spatial", f"layers[{i}].out_spatial")))
        else:
            raise SchemaError(f"layers[{i}].type must be 'conv' or 'shape', got {kind!r}")

    raw_edges = doc.get("edges", [])
    if not isinstance(raw_edges, list):
        raise SchemaError("'edges' must be a list")
    edges = []
    for i, entry in enumerate(raw_edges):
        if not isinstance(entry, dict):
            raise SchemaError(f"edges[{i}] must be an object")
        src, dst = entry.get("from"), entry.get("to")
        if not isinstance(src, str) or not isinstance(dst, str):
            raise SchemaError(f"edges[{i}] needs string 'from' and 'to'")
        mode = entry.get("mode", "passthrough")
        if mode not in EDGE_MODES:
            raise SchemaError(f"edges[{i}].mode must be one of {EDGE_MODES}, got {mode!r}")
        edges.append(Edge(src=src, dst=dst, mode=mode))

    return NetworkSpec(name=name, layers=tuple(layers), edges=tuple(edges),
                       input_channels=channels, input_spatial=spatial)


def _require_int(obj: dict, key: str, path: str, default=None) -> int:
    if key not in obj:
        if default is not None:
            return default
        raise SchemaError(f"missing field '{path}'")
    v = obj[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise SchemaError(f"'{path}' must be an integer, got {v!r}")
    return v


def network_to_dict(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, ConvLayerSpec):
            layers.append({"id": layer.layer_id, "type": "conv", "n": layer.n, "m": layer.m,
                           "k": layer.k, "s": layer.s, "p": layer.p, "g": layer.g, "ip": layer.ip})
        else:
            layers.append({"id": layer.layer_id, "type": "shape",
                           "out_channels": layer.out_channels, "out_spatial": layer.out_spatial})
    return {
        "name": net.name,
        "input": {"channels": net.input_channels, "spatial": net.input_spatial},
        "layers": layers,
        "edges": [{"from": e.src, "to": e.dst, "mode": e.mode} for e in net.edges],
    }


def serialize_network(net: NetworkSpec) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


def load_network(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read())


def save_network(net: NetworkSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_network(net))


def bundled_network(name: str) -> NetworkSpec:
    """Load one of the example topologies shipped with the package."""
    if name not in BUNDLED_NETWORKS:
        raise SchemaError(f"unknown bundled network {name!r}; have {BUNDLED_NETWORKS}")
    text = resources.files("traincost.networks").joinpath(f"{name}.json").read_text("utf-8")
    return parse_network(text)


def rename(net: NetworkSpec, name: str) -> NetworkSpec:
    return replace(net, name=name)
