"""Reader for the shared network-description JSON schema.

The schema is the contract with the modeling tool; this module deliberately
re-implements it instead of importing that tool, so the harness can run on a
device with nothing but this package installed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

EDGE_MODES = ("passthrough", "concat", "add")


class NetDefError(ValueError):
    """Malformed or inconsistent network description."""


@dataclass(frozen=True)
class ConvDef:
    layer_id: str
    n: int
    m: int
    k: int
    s: int
    p: int
    g: int
    ip: int

    @property
    def out_spatial(self) -> int:
        return 1 + (self.ip + 2 * self.p - self.k) // self.s

    @property
    def out_channels(self) -> int:
        return self.n

    def macs(self, bs: int) -> int:
        return bs * self.n * self.out_spatial ** 2 * self.k ** 2 * (self.m // self.g)

    def params(self) -> int:
        return self.n * (self.m // self.g) * self.k ** 2

    def activations(self, bs: int) -> int:
        return bs * (self.m * self.ip ** 2 + self.n * self.out_spatial ** 2)


@dataclass(frozen=True)
class ShapeDef:
    layer_id: str
    out_channels: int
    out_spatial: int


@dataclass(frozen=True)
class NetDef:
    name: str
    layers: tuple
    edges: tuple  # (src, dst, mode)
    input_channels: int
    input_spatial: int

    def layer(self, layer_id: str):
        for layer in self.layers:
            if layer.layer_id == layer_id:
                return layer
        raise NetDefError(f"no layer '{layer_id}'")

    def producers(self, layer_id: str):
        return [(src, mode) for src, dst, mode in self.edges if dst == layer_id]

    def consumers(self, layer_id: str):
        return [dst for src, dst, _ in self.edges if src == layer_id]

    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, ConvDef)]

    def topological_order(self):
        pending = {l.layer_id: len(self.producers(l.layer_id)) for l in self.layers}
        ready = [lid for lid, deg in pending.items() if deg == 0]
        order = []
        while ready:
            lid = ready.pop(0)
            order.append(lid)
            for nxt in self.consumers(lid):
                pending[nxt] -= 1
                if pending[nxt] == 0:
                    ready.append(nxt)
        if len(order) != len(self.layers):
            raise NetDefError("network graph has a cycle")
        return order


def _field(obj, key, path, kind=int):
    if key not in obj:
        raise NetDefError(f"missing field '{path}.{key}'")
    value = obj[key]
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise NetDefError(f"'{path}.{key}' must be an integer")
    if kind is str and not isinstance(value, str):
        raise NetDefError(f"'{path}.{key}' must be a string")
    return value


def parse_netdef(text: str) -> NetDef:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetDefError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetDefError("document root must be an object")
    name = _field(doc, "name", "$", str)
    inp = doc.get("input", {})
    layers = []
    for i, entry in enumerate(doc.get("layers", [])):
        lid = _field(entry, "id", f"layers[{i}]", str)
        kind = entry.get("type", "conv")
        if kind == "conv":
            layers.append(ConvDef(
                layer_id=lid,
                n=_field(entry, "n", lid), m=_field(entry, "m", lid),
                k=_field(entry, "k", lid), s=_field(entry, "s", lid),
                p=_field(entry, "p", lid), g=_field(entry, "g", lid),
                ip=_field(entry, "ip", lid)))
        elif kind == "shape":
            layers.append(ShapeDef(
                layer_id=lid,
                out_channels=_field(entry, "out_channels", lid),
                out_spatial=_field(entry, "out_spatial", lid)))
        else:
            raise NetDefError(f"layers[{i}].type must be 'conv' or 'shape'")
    known = {l.layer_id for l in layers}
    edges = []
    for i, entry in enumerate(doc.get("edges", [])):
        src = _field(entry, "from", f"edges[{i}]", str)
        dst = _field(entry, "to", f"edges[{i}]", str)
        mode = entry.get("mode", "passthrough")
        if mode not in EDGE_MODES:
            raise NetDefError(f"edges[{i}].mode must be one of {EDGE_MODES}")
        if src not in known or dst not in known:
            raise NetDefError(f"edges[{i}] references unknown layer")
        edges.append((src, dst, mode))
    net = NetDef(name=name, layers=tuple(layers), edges=tuple(edges),
                 input_channels=inp.get("channels", 3),
                 input_spatial=inp.get("spatial", 224))
    net.topological_order()  # rejects cycles early
    return net


def load_netdef(path) -> NetDef:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_netdef(fh.read())
