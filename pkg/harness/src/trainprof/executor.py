"""Builds an executable training step from a network description.

torch is imported lazily so the dry-run device target works on machines
without it installed.
"""

from __future__ import annotations

from .netdef import ConvDef, NetDef, ShapeDef


class DeviceError(RuntimeError):
    """The requested device is unavailable or failed during a step."""


class OutOfMemoryError(RuntimeError):
    """The training step exhausted device memory."""


class TrainingStep:
    """One forward + backward + SGD-update step over the described network.

    The graph executor honors each layer's declared shapes: producer tensors
    are pooled to the consumer's declared input size (absorbing whatever
    pooling the conv-only description left implicit), concat stacks channels
    and add sums equal-shaped streams.
    """

    def __init__(self, net: NetDef, bs: int, device: str = "cpu", lr: float = 0.01):
        import torch
        from torch import nn

        self.torch = torch
        self.net = net
        self.bs = bs
        self.device = torch.device(device)
        self.order = net.topological_order()

        self.modules: dict[str, nn.Conv2d] = {}
        for layer in net.conv_layers():
            conv = nn.Conv2d(layer.m, layer.n, layer.k, stride=layer.s,
                             padding=layer.p, groups=layer.g, bias=False)
            self.modules[layer.layer_id] = conv.to(self.device)

        self.inputs = {}
        for layer in net.layers:
            if not net.producers(layer.layer_id) and isinstance(layer, ConvDef):
                self.inputs[layer.layer_id] = torch.randn(
                    bs, layer.m, layer.ip, layer.ip, device=self.device)

        params = [p for m in self.modules.values() for p in m.parameters()]
        if not params:
            raise DeviceError("network has no trainable convolution layers")
        self.optimizer = torch.optim.SGD(params, lr=lr)

    def _gather(self, layer, produced):
        torch, net = self.torch, self.net
        sources = net.producers(layer.layer_id)
        if not sources:
            return self.inputs[layer.layer_id]
        want = layer.ip if isinstance(layer, ConvDef) else layer.out_spatial
        tensors = []
        for src, _ in sources:
            t = produced[src]
            if t.shape[-1] != want:
                t = torch.nn.functional.adaptive_avg_pool2d(t, want)
            tensors.append(t)
        mode = sources[0][1]
        if mode == "concat":
            return torch.cat(tensors, dim=1)
        if mode == "add":
            out = tensors[0]
            for t in tensors[1:]:
                out = out + t
            return out
        return tensors[0]

    def run(self, forward_only: bool = False) -> None:
        """Execute one training step, or just the forward pass."""
        torch = self.torch
        try:
            with torch.enable_grad() if not forward_only else torch.no_grad():
                produced = {}
                consumed = set()
                for lid in self.order:
                    layer = self.net.layer(lid)
                    x = self._gather(layer, produced)
                    if isinstance(layer, ShapeDef):
                        out = torch.nn.functional.adaptive_avg_pool2d(x, layer.out_spatial)
                        if out.shape[1] != layer.out_channels:
                            # opaque channel change: replicate or slice to declared width
                            reps = -(-layer.out_channels // out.shape[1])
                            out = out.repeat(1, reps, 1, 1)[:, :layer.out_channels]
                        produced[lid] = out
                    else:
                        produced[lid] = self.modules[lid](x)
                    for src, _ in self.net.producers(lid):
                        consumed.add(src)
                terminals = [produced[lid] for lid in self.order if lid not in consumed]
                loss = sum(t.float().mean() for t in terminals)
            if not forward_only:
                self.optimizer.zero_grad(set_to_none=True)
                loss.backward()
                self.optimizer.step()
            if self.device.type == "cuda":
                torch.cuda.synchronize(self.device)
        except torch.cuda.OutOfMemoryError as exc:
            raise OutOfMemoryError(str(exc)) from exc
        except MemoryError as exc:
            raise OutOfMemoryError(str(exc)) from exc
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower():
                raise OutOfMemoryError(str(exc)) from exc
            raise
