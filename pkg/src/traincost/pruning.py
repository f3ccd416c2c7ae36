"""Structured pruning of network descriptors.

Pruning is descriptor-level: it decides per-layer surviving filter counts
and propagates them along channel-dependency edges.  Which individual
filters would be removed is irrelevant here because every downstream
feature depends on shapes alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import PruneError
from .ir import ConvLayerSpec, Edge, NetworkSpec, ShapeLayerSpec

__all__ = [
    "UniformRandom", "LayerWeighted", "PruneConfig",
    "prune_network", "resize_network", "build_strategy", "STRATEGY_NAMES",
]


@dataclass(frozen=True)
class UniformRandom:
    """Prune every layer by the same percentage (random filter choice)."""


@dataclass(frozen=True)
class LayerWeighted:
    """Per-layer pruning emphasis; weights are normalized to mean 1."""

    weights: dict  # layer_id -> non-negative weight

    def __post_init__(self):
        for lid, w in self.weights.items():
            if w < 0:
                raise PruneError(f"negative weight for layer '{lid}'")


@dataclass(frozen=True)
class PruneConfig:
    level: float          # percent of filters to remove, in [0, 100)
    strategy: UniformRandom | LayerWeighted = UniformRandom()
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.level < 100):
            raise PruneError(f"pruning level must be in [0, 100), got {self.level}")


def _round_half_up(x: Fraction) -> int:
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


def _is_depthwise(layer: ConvLayerSpec) -> bool:
    return layer.g > 1 and layer.g == layer.m


class _UnionFind:
    def __init__(self, keys):
        self.parent = {k: k for k in keys}

    def find(self, k):
        while self.parent[k] != k:
            self.parent[k] = self.parent[self.parent[k]]
            k = self.parent[k]
        return k

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def prune_network(net: NetworkSpec, cfg: PruneConfig) -> NetworkSpec:
    """Apply structured pruning and return the reduced network.

    Surviving count per layer is max(1, round(n * (1 - effective_level/100)))
    with half-up rounding, then snapped to the divisibility the layer's own
    groups and its consumers' groups require.  Deterministic for a fixed
    config; the seed is carried for dataset bookkeeping only, since counts
    (unlike filter identities) do not depend on it.
    """
    level = Fraction(cfg.level)
    keep = {}
    prunable = [l for l in net.conv_layers() if not _is_depthwise(l)]
    if isinstance(cfg.strategy, LayerWeighted):
        weights = cfg.strategy.weights
        prunable_ids = {l.layer_id for l in prunable}
        all_ids = {l.layer_id for l in net.layers}
        unknown = sorted(set(weights) - all_ids)
        if unknown:
            raise PruneError(f"weights reference unknown layer_ids: {unknown}")
        missing = sorted(prunable_ids - set(weights))
        if missing:
            raise PruneError(f"weights missing for layers: {missing}")
        relevant = {lid: Fraction(weights[lid]) for lid in prunable_ids}
        total = sum(relevant.values())
        if total == 0:
            norm = {lid: Fraction(1) for lid in relevant}
        else:
            scale = Fraction(len(relevant)) / total
            norm = {lid: w * scale for lid, w in relevant.items()}
        for lid, w in norm.items():
            # heavily weighted layers saturate just below 100% so every
            # layer keeps at least one filter
            eff = min(level * w, Fraction(99))
            keep[lid] = 1 - eff / 100
    else:
        for l in prunable:
            keep[l.layer_id] = 1 - level / 100
    return resize_network(net, keep)


def resize_network(net: NetworkSpec, keep: dict[str, Fraction]) -> NetworkSpec:
    """Scale filter counts by per-layer keep fractions and re-propagate channels.

    `keep` maps non-depthwise conv layer ids to fractions in (0, 1]; layers
    tied through add-joins are forced to a common surviving count (their keep
    fractions are averaged).  Depthwise layers follow their producers.
    """
    convs = {l.layer_id: l for l in net.conv_layers()}
    depthwise = {lid for lid, l in convs.items() if _is_depthwise(l)}

    incoming: dict[str, list[Edge]] = {l.layer_id: [] for l in net.layers}
    for e in net.edges:
        incoming[e.dst].append(e)

    preserving = _preserving_shape_sources(net, incoming)

    def resolve_source(lid: str) -> str:
        # walk through channel-preserving shape layers to the layer whose
        # filter count actually determines the channel width
        while lid in preserving:
            lid = incoming[lid][0].src
        return lid

    # tie together everything feeding a common add-join
    uf = _UnionFind(list(convs))
    pinned: set[str] = set()
    for lid, edges in incoming.items():
        if not edges or edges[0].mode != "add":
            continue
        sources = [resolve_source(e.src) for e in edges]
        conv_sources = [s for s in sources if s in convs]
        opaque = [s for s in sources if s not in convs]
        bad_dw = [s for s in conv_sources if s in depthwise]
        if opaque or bad_dw:
            if any(keep.get(s, Fraction(1)) != 1 for s in conv_sources):
                raise PruneError(
                    f"add-join at '{lid}' is fed by an opaque or depthwise producer; "
                    "its conv producers cannot be resized")
            pinned.update(conv_sources)
            continue
        for s in conv_sources[1:]:
            uf.union(conv_sources[0], s)

    # group prunable layers into classes sharing one surviving count
    classes: dict[str, list[str]] = {}
    for lid in convs:
        if lid in depthwise:
            continue
        classes.setdefault(uf.find(lid), []).append(lid)

    divisors = _divisor_requirements(net, convs, depthwise, preserving, incoming)

    new_n: dict[str, int] = {}
    for members in classes.values():
        base = convs[members[0]].n
        if any(m in pinned for m in members):
            count = base
        else:
            k = sum(keep.get(m, Fraction(1)) for m in members) / len(members)
            if not (0 < k <= 1):
                raise PruneError(f"keep fraction {float(k):.3f} out of (0, 1] for {members}")
            if k == 1:
                count = base
            else:
                count = max(1, _round_half_up(base * k))
                div = math.lcm(*(divisors[m] for m in members))
                if div > 1:
                    count = max(div, _round_half_up(Fraction(count, div)) * div)
        for m in members:
            new_n[m] = count

    # propagate channel counts in dependency order
    channels: dict[str, int] = {}
    new_layers: dict[str, ConvLayerSpec | ShapeLayerSpec] = {}
    for lid in net.topological_order():
        layer = net.layer(lid)
        edges = incoming[lid]
        if isinstance(layer, ShapeLayerSpec):
            if lid in preserving:
                out = channels[edges[0].src]
            else:
                out = layer.out_channels
            new_layers[lid] = replace(layer, out_channels=out)
            channels[lid] = out
            continue
        m = _merged_channels(layer, edges, channels)
        if lid in depthwise:
            mult = layer.n // layer.m
            updated = replace(layer, m=m, g=m, n=m * mult)
        else:
            updated = replace(layer, m=m, n=new_n[lid])
        new_layers[lid] = updated
        channels[lid] = updated.n

    ordered = tuple(new_layers[l.layer_id] for l in net.layers)
    return replace(net, layers=ordered)


def _merged_channels(layer: ConvLayerSpec, edges: list[Edge], channels: dict[str, int]) -> int:
    if not edges:
        return layer.m
    produced = [channels[e.src] for e in edges]
    if edges[0].mode == "concat":
        return sum(produced)
    return produced[0]


def _preserving_shape_sources(net: NetworkSpec, incoming) -> set[str]:
    """Shape layers that merely forward their single producer's channels."""
    preserving = set()
    index = {l.layer_id: l for l in net.layers}
    for lid in net.topological_order():
        layer = index[lid]
        if not isinstance(layer, ShapeLayerSpec):
            continue
        edges = incoming[lid]
        if len(edges) != 1:
            continue
        src = index[edges[0].src]
        src_ch = src.n if isinstance(src, ConvLayerSpec) else src.out_channels
        if layer.out_channels == src_ch:
            preserving.add(lid)
    return preserving


def _divisor_requirements(net, convs, depthwise, preserving, incoming) -> dict[str, int]:
    """Divisibility each prunable layer's surviving count must satisfy."""
    index = {l.layer_id: l for l in net.layers}

    def effective_consumers(lid, seen=None):
        seen = seen or set()
        out = []
        for e in net.edges:
            if e.src != lid or e.dst in seen:
                continue
            seen.add(e.dst)
            dst = index[e.dst]
            if isinstance(dst, ShapeLayerSpec):
                if e.dst in preserving:
                    out.extend(effective_consumers(e.dst, seen))
            else:
                out.append(dst)
        return out

    divisors = {}
    for lid, layer in convs.items():
        if lid in depthwise:
            continue
        div = layer.g
        for consumer in effective_consumers(lid):
            if consumer.layer_id in depthwise:
                continue  # depthwise consumers re-group to match
            if consumer.g > 1:
                div = math.lcm(div, consumer.g)
        divisors[lid] = div
    return divisors


# -- strategy registry (CSV `strategy` column <-> PruneConfig) ------------

def _uniform(net: NetworkSpec) -> UniformRandom:
    return UniformRandom()


def _depth_weighted(net: NetworkSpec) -> LayerWeighted:
    # linearly increasing weight with depth: removes more filters from
    # deeper layers, approximating magnitude-based selection
    ids = [l.layer_id for l in net.conv_layers()]
    return LayerWeighted(weights={lid: i + 1 for i, lid in enumerate(ids)})


_STRATEGY_BUILDERS = {"uniform": _uniform, "depth_weighted": _depth_weighted}
STRATEGY_NAMES = tuple(_STRATEGY_BUILDERS)


def build_strategy(name: str, net: NetworkSpec):
    try:
        builder = _STRATEGY_BUILDERS[name]
    except KeyError:
        raise PruneError(f"unknown strategy {name!r}; have {STRATEGY_NAMES}") from None
    return builder(net)
