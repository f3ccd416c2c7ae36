"""Seeded random-network generation shared across test modules."""

import numpy as np

from traincost.ir import ConvLayerSpec, Edge, NetworkSpec


def random_conv(rng, lid, m, ip, allow_stride=True, allow_groups=False):
    k = int(rng.choice([1, 3]))
    s = int(rng.choice([1, 2])) if allow_stride and ip >= 8 else 1
    p = k // 2
    n = int(rng.integers(1, 9))
    g = 1
    if allow_groups and rng.random() < 0.3:
        common = [d for d in (1, 2, 4) if m % d == 0 and n % d == 0]
        g = int(rng.choice(common))
    return ConvLayerSpec(layer_id=lid, n=n, m=m, k=k, s=s, p=p, g=g, ip=ip)


def make_random_network(rng, name="rand", max_segments=4, allow_groups=False):
    """Random valid network built from chain / residual / branch segments."""
    layers, edges = [], []
    ch = int(rng.integers(1, 9))
    spatial = int(rng.choice([4, 8, 16]))
    stream: list[str] = []
    counter = 0

    def fresh(prefix):
        nonlocal counter
        counter += 1
        return f"{prefix}{counter}"

    def consume(dst):
        mode = "add" if len(stream) > 1 else "passthrough"
        for src in stream:
            edges.append(Edge(src, dst, mode))

    for _ in range(int(rng.integers(1, max_segments + 1))):
        kinds = ["conv", "residual", "branch"] + (["depthwise"] if allow_groups else [])
        kind = rng.choice(kinds)
        if kind == "depthwise" and stream:
            # expand 1x1 -> depthwise 3x3 -> project 1x1
            exp, dw, pw = fresh("e"), fresh("d"), fresh("w")
            hidden = ch * int(rng.integers(1, 4))
            out_ch = int(rng.integers(1, 9))
            layers.append(ConvLayerSpec(layer_id=exp, n=hidden, m=ch, k=1, s=1,
                                        p=0, g=1, ip=spatial))
            layers.append(ConvLayerSpec(layer_id=dw, n=hidden, m=hidden, k=3, s=1,
                                        p=1, g=hidden, ip=spatial))
            layers.append(ConvLayerSpec(layer_id=pw, n=out_ch, m=hidden, k=1, s=1,
                                        p=0, g=1, ip=spatial))
            consume(exp)
            edges.append(Edge(exp, dw))
            edges.append(Edge(dw, pw))
            stream = [pw]
            ch = out_ch
        elif kind == "conv" or not stream:
            lid = fresh("c")
            layer = random_conv(rng, lid, ch, spatial, allow_groups=allow_groups)
            layers.append(layer)
            consume(lid)
            stream = [lid]
            ch, spatial = layer.n, _out(layer)
        elif kind == "residual":
            mid = int(rng.integers(1, 9))
            a, b = fresh("r"), fresh("r")
            la = ConvLayerSpec(layer_id=a, n=mid, m=ch, k=3, s=1, p=1, g=1, ip=spatial)
            lb = ConvLayerSpec(layer_id=b, n=ch, m=mid, k=3, s=1, p=1, g=1, ip=spatial)
            layers += [la, lb]
            consume(a)
            edges.append(Edge(a, b))
            stream = stream + [b]
        else:  # branch + concat
            a, b = fresh("x"), fresh("x")
            la = random_conv(rng, a, ch, spatial, allow_stride=False)
            lb = ConvLayerSpec(layer_id=b, n=int(rng.integers(1, 9)), m=ch,
                               k=la.k, s=1, p=la.p, g=1, ip=spatial)
            layers += [la, lb]
            consume(a)
            for src in stream:
                edges.append(Edge(src, b, "add" if len(stream) > 1 else "passthrough"))
            tail = fresh("j")
            lt = ConvLayerSpec(layer_id=tail, n=int(rng.integers(1, 9)),
                               m=la.n + lb.n, k=1, s=1, p=0, g=1, ip=_out(la))
            layers.append(lt)
            edges.append(Edge(a, tail, "concat"))
            edges.append(Edge(b, tail, "concat"))
            stream = [tail]
            ch, spatial = lt.n, _out(lt)
    return NetworkSpec(name=name, layers=tuple(layers), edges=tuple(edges),
                       input_channels=layers[0].m, input_spatial=layers[0].ip)


def _out(layer):
    return 1 + (layer.ip + 2 * layer.p - layer.k) // layer.s
