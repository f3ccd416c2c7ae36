"""Generate the bundled example topologies (conv layers only).

Channel-dependency edges carry residual adds and fire/branch concats;
pooling is absorbed into each conv layer's explicit input size.

Run from the repo root:  python tools/make_networks.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from traincost.ir import (ConvLayerSpec, Edge, NetworkSpec, save_network)

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "traincost" / "networks"


def conv(lid, n, m, k, s, p, ip, g=1):
    return ConvLayerSpec(layer_id=lid, n=n, m=m, k=k, s=s, p=p, g=g, ip=ip)


def resnet18():
    layers = [conv("conv1", 64, 3, 7, 2, 3, 224)]
    edges = []
    stream = ["conv1"]  # producers of the current residual stream
    in_ch = 64
    for stage, ch, sp in ((1, 64, 56), (2, 128, 28), (3, 256, 14), (4, 512, 7)):
        for block in (1, 2):
            downsample = stage > 1 and block == 1
            stride = 2 if downsample else 1
            ip = sp * stride
            m = in_ch if block == 1 else ch
            c1, c2 = f"l{stage}b{block}c1", f"l{stage}b{block}c2"
            layers.append(conv(c1, ch, m, 3, stride, 1, ip))
            layers.append(conv(c2, ch, ch, 3, 1, 1, sp))
            mode = "add" if len(stream) > 1 else "passthrough"
            for src in stream:
                edges.append(Edge(src, c1, mode))
            edges.append(Edge(c1, c2))
            if downsample:
                ds = f"l{stage}ds"
                layers.append(conv(ds, ch, in_ch, 1, stride, 0, ip))
                for src in stream:
                    edges.append(Edge(src, ds, mode))
                stream = [c2, ds]
            else:
                stream = stream + [c2]
            in_ch = ch
    return NetworkSpec(name="resnet18", layers=tuple(layers), edges=tuple(edges),
                       input_channels=3, input_spatial=224)


def inverted_residual_net(name, stem_out, stacks, head_in, head_out):
    """Shared builder for depthwise-separable block networks.

    stacks: list of (expansion, out_ch, repeats, stride, kernel, in_spatial).
    """
    layers = [conv("conv1", stem_out, 3, 3, 2, 1, 224)]
    edges = []
    stream = ["conv1"]
    in_ch = stem_out

    def link(dst):
        mode = "add" if len(stream) > 1 else "passthrough"
        for src in stream:
            edges.append(Edge(src, dst, mode))

    bid = 0
    for exp, out_ch, repeats, stride, kernel, ip in stacks:
        for rep in range(repeats):
            bid += 1
            s = stride if rep == 0 else 1
            sp_in = ip if rep == 0 else ip // stride
            sp_out = sp_in // s
            pad = kernel // 2
            prefix = f"b{bid}"
            hidden = in_ch * exp
            if exp != 1:
                layers.append(conv(f"{prefix}exp", hidden, in_ch, 1, 1, 0, sp_in))
                link(f"{prefix}exp")
                dw_src = f"{prefix}exp"
            else:
                dw_src = None
            layers.append(conv(f"{prefix}dw", hidden, hidden, kernel, s, pad, sp_in, g=hidden))
            if dw_src:
                edges.append(Edge(dw_src, f"{prefix}dw"))
            else:
                link(f"{prefix}dw")
            layers.append(conv(f"{prefix}pw", out_ch, hidden, 1, 1, 0, sp_out))
            edges.append(Edge(f"{prefix}dw", f"{prefix}pw"))
            if rep > 0 and in_ch == out_ch and s == 1:
                stream = stream + [f"{prefix}pw"]
            else:
                stream = [f"{prefix}pw"]
            in_ch = out_ch
    layers.append(conv("conv_last", head_out, head_in, 1, 1, 0, stacks[-1][5] // stacks[-1][3]))
    link("conv_last")
    return NetworkSpec(name=name, layers=tuple(layers), edges=tuple(edges),
                       input_channels=3, input_spatial=224)


def mobilenetv2():
    stacks = [
        (1, 16, 1, 1, 3, 112),
        (6, 24, 2, 2, 3, 112),
        (6, 32, 3, 2, 3, 56),
        (6, 64, 4, 2, 3, 28),
        (6, 96, 3, 1, 3, 14),
        (6, 160, 3, 2, 3, 14),
        (6, 320, 1, 1, 3, 7),
    ]
    return inverted_residual_net("mobilenetv2", 32, stacks, 320, 1280)


def mnasnet():
    stacks = [
        (1, 16, 1, 1, 3, 112),
        (3, 24, 3, 2, 3, 112),
        (3, 40, 3, 2, 5, 56),
        (6, 80, 3, 2, 5, 28),
        (6, 96, 2, 1, 3, 14),
        (6, 192, 4, 2, 5, 14),
        (6, 320, 1, 1, 3, 7),
    ]
    return inverted_residual_net("mnasnet", 32, stacks, 320, 1280)


def squeezenet():
    layers = [conv("conv1", 96, 3, 7, 2, 0, 224)]
    edges = []
    prev = ["conv1"]
    fires = [
        (2, 16, 64, 54), (3, 16, 64, 54), (4, 32, 128, 54),
        (5, 32, 128, 27), (6, 48, 192, 27), (7, 48, 192, 27), (8, 64, 256, 27),
        (9, 64, 256, 13),
    ]
    in_ch = 96
    for idx, squeeze, expand, sp in fires:
        sq, e1, e3 = f"f{idx}sq", f"f{idx}e1", f"f{idx}e3"
        layers.append(conv(sq, squeeze, in_ch, 1, 1, 0, sp))
        mode = "concat" if len(prev) > 1 else "passthrough"
        for src in prev:
            edges.append(Edge(src, sq, mode))
        layers.append(conv(e1, expand, squeeze, 1, 1, 0, sp))
        layers.append(conv(e3, expand, squeeze, 3, 1, 1, sp))
        edges.append(Edge(sq, e1))
        edges.append(Edge(sq, e3))
        prev = [e1, e3]
        in_ch = 2 * expand
    layers.append(conv("conv10", 1000, 512, 1, 1, 0, 13))
    for src in prev:
        edges.append(Edge(src, "conv10", "concat"))
    return NetworkSpec(name="squeezenet", layers=tuple(layers), edges=tuple(edges),
                       input_channels=3, input_spatial=224)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for build in (resnet18, mobilenetv2, squeezenet, mnasnet):
        net = build()
        n_conv = len(net.conv_layers())
        save_network(net, OUT / f"{net.name}.json")
        print(f"{net.name}: {n_conv} conv layers, {len(net.edges)} edges")


if __name__ == "__main__":
    main()
