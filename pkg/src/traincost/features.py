"""Analytical cost features for convolution layers.

For each layer the expected memory (element counts) and operation counts of
the matrix-multiplication, FFT and Winograd convolution algorithms are
evaluated for the forward pass and both backward computations, then summed
across layers.  Integer formulas are kept in exact integer arithmetic; the
FFT operation counts carry an irrational log factor and are represented as
exact `Fraction`s of its float64 value, so every feature is affine in the
batch size with no rounding drift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ShapeError
from .ir import ConvLayerSpec, NetworkSpec, ofm_size

EXTRACTOR_VERSION = "features-v1"

TRAINING = "training"
INFERENCE_ONLY = "inference"
MODES = (TRAINING, INFERENCE_ONLY)

WINOGRAD_TILES = ((4, 3), (3, 2))

# (name, pass tag); tags: fwd, bwd_x, bwd_w, mixed.  Inference-only mode
# keeps the fwd-tagged subset.
FEATURE_TAGS = (
    # tensor allocations (algorithm independent)
    ("mem_weights", "fwd"),
    ("mem_weights_grad", "bwd_w"),
    ("mem_input_grad", "bwd_x"),
    ("mem_output_grad", "mixed"),
    ("mem_tensors_total", "mixed"),
    # matrix-multiplication lowering
    ("mm_mem_im2col_fwd_total", "fwd"),
    ("mm_mem_im2col_bwd_w_total", "bwd_w"),
    ("mm_mem_im2col_fwd_index", "fwd"),
    ("mm_mem_im2col_bwd_x_total", "bwd_x"),
    ("mm_mem_im2col_bwd_x_index", "bwd_x"),
    ("mm_mem_im2col_total_all", "mixed"),
    ("mm_mem_im2col_index_all", "mixed"),
    ("mm_ops_fwd", "fwd"),
    ("mm_ops_bwd_x", "bwd_x"),
    ("mm_ops_all", "mixed"),
    # FFT
    ("fft_mem_weights_fwd", "fwd"),
    ("fft_mem_input_fwd", "fwd"),
    ("fft_mem_output_bwd_w", "bwd_w"),
    ("fft_mem_weights_bwd_x", "bwd_x"),
    ("fft_mem_output_bwd_x", "bwd_x"),
    ("fft_mem_fwd_pair", "fwd"),
    ("fft_mem_output_pair", "mixed"),
    ("fft_mem_bwd_w_pair", "mixed"),
    ("fft_mem_all_pairs", "mixed"),
    ("fft_ops_fwd", "fwd"),
    ("fft_ops_bwd_x", "bwd_x"),
    ("fft_ops_bwd_w", "bwd_w"),
    ("fft_ops_all", "mixed"),
    # Winograd (evaluated for both tile configurations)
    ("wino_mem_fwd", "fwd"),
    ("wino_mem_bwd_x", "bwd_x"),
    ("wino_mem_bwd_w", "bwd_w"),
    ("wino_mem_fwd_bwd_x", "mixed"),
    ("wino_mem_fwd_bwd_w", "mixed"),
    ("wino_mem_bwd_w_bwd_x", "mixed"),
    ("wino_mem_all", "mixed"),
    ("wino_ops_fwd", "fwd"),
    ("wino_ops_bwd_x", "bwd_x"),
    ("wino_ops_bwd_w", "bwd_w"),
    ("wino_ops_fwd_bwd_x", "mixed"),
    ("wino_ops_fwd_bwd_w", "mixed"),
    ("wino_ops_bwd_x_bwd_w", "mixed"),
    ("wino_ops_all", "mixed"),
)

_TAG_BY_NAME = dict(FEATURE_TAGS)

assert len(FEATURE_TAGS) == 42


def feature_names(mode: str = TRAINING, split_winograd: bool = False) -> tuple[str, ...]:
    """Canonical feature ordering for a mode.

    With `split_winograd` the two Winograd tile configurations get separate
    columns (suffix per tile) instead of being summed into one.
    """
    if mode not in MODES:
        raise ShapeError(f"unknown feature mode {mode!r}")
    names = []
    for name, tag in FEATURE_TAGS:
        if mode == INFERENCE_ONLY and tag != "fwd":
            continue
        if split_winograd and name.startswith("wino_"):
            names.extend(f"{name}_q{q}r{r}" for q, r in WINOGRAD_TILES)
        else:
            names.append(name)
    return tuple(names)


def extractor_version(split_winograd: bool = False) -> str:
    return EXTRACTOR_VERSION + ("+split" if split_winograd else "")


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: tuple  # exact ints / Fractions, aligned with names
    bs: int
    mode: str

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ShapeError("names and values length mismatch")
        for name, v in zip(self.names, self.values):
            if v < 0:
                raise ShapeError(f"feature {name} is negative: {v}")

    def __getitem__(self, name: str):
        return self.values[self.names.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def as_floats(self) -> list[float]:
        return [float(v) for v in self.values]


# -- per-layer feature families -------------------------------------------


def layer_tensor_features(layer: ConvLayerSpec, bs: int) -> dict:
    """Sizes of the weight, gradient and feature-map tensors."""
    _check_bs(bs)
    op = ofm_size(layer)
    mg = layer.m // layer.g
    k2 = layer.k ** 2
    out = {
        "mem_weights": layer.n * mg * k2,
        "mem_weights_grad": bs * layer.n * mg * k2,
        "mem_input_grad": bs * layer.m * layer.ip ** 2,
        "mem_output_grad": bs * layer.n * op ** 2,
    }
    out["mem_tensors_total"] = sum(out.values())
    return out


def layer_matmul_features(layer: ConvLayerSpec, bs: int) -> dict:
    """im2col matrix sizes and multiply-accumulate counts."""
    _check_bs(bs)
    op2 = ofm_size(layer) ** 2
    ip2 = layer.ip ** 2
    k2 = layer.k ** 2
    m, n, mg = layer.m, layer.n, layer.m // layer.g
    out = {
        "mm_mem_im2col_fwd_total": bs * op2 * k2 * m,
        "mm_mem_im2col_bwd_w_total": bs * op2 * k2 * mg,
        "mm_mem_im2col_fwd_index": bs * op2,
        "mm_mem_im2col_bwd_x_total": bs * ip2 * k2 * m,
        "mm_mem_im2col_bwd_x_index": bs * ip2,
        "mm_ops_fwd": bs * n * op2 * k2 * mg,
        "mm_ops_bwd_x": bs * m * ip2 * k2 * n,
    }
    out["mm_mem_im2col_total_all"] = (out["mm_mem_im2col_fwd_total"]
                                      + out["mm_mem_im2col_bwd_w_total"]
                                      + out["mm_mem_im2col_bwd_x_total"])
    out["mm_mem_im2col_index_all"] = (2 * out["mm_mem_im2col_fwd_index"]
                                      + out["mm_mem_im2col_bwd_x_index"])
    out["mm_ops_all"] = 2 * out["mm_ops_fwd"] + out["mm_ops_bwd_x"]
    return out


def _log2(x: int):
    # exact zero at x=1; elsewhere the exact rational value of the float64 log
    return 0 if x == 1 else Fraction(math.log2(x))


def layer_fft_features(layer: ConvLayerSpec, bs: int) -> dict:
    """Frequency-domain tensor sizes and transform + product op counts."""
    _check_bs(bs)
    op = ofm_size(layer)
    ip = layer.ip
    m, n, mg = layer.m, layer.n, layer.m // layer.g
    out = {
        "fft_mem_weights_fwd": n * mg * ip * (1 + ip),
        "fft_mem_input_fwd": bs * m * ip * (1 + ip),
        "fft_mem_output_bwd_w": bs * n * ip * (1 + ip),
        "fft_mem_weights_bwd_x": n * mg * op * (1 + op),
        "fft_mem_output_bwd_x": bs * n * op * (1 + op),
    }
    out["fft_mem_fwd_pair"] = out["fft_mem_weights_fwd"] + out["fft_mem_input_fwd"]
    out["fft_mem_output_pair"] = out["fft_mem_output_bwd_x"] + out["fft_mem_output_bwd_w"]
    out["fft_mem_bwd_w_pair"] = out["fft_mem_output_bwd_w"] + out["fft_mem_input_fwd"]
    out["fft_mem_all_pairs"] = (out["fft_mem_fwd_pair"] + out["fft_mem_output_pair"]
                                + out["fft_mem_bwd_w_pair"])
    transforms = bs * (m + n) + n * mg
    out["fft_ops_fwd"] = ip ** 2 * _log2(ip) * transforms + bs * n * m * ip ** 2
    out["fft_ops_bwd_x"] = op ** 2 * _log2(op) * transforms + bs * n * m * op ** 2
    out["fft_ops_bwd_w"] = ip * _log2(ip ** 2) * transforms + bs * n * m * ip ** 2
    out["fft_ops_all"] = out["fft_ops_fwd"] + out["fft_ops_bwd_x"] + out["fft_ops_bwd_w"]
    return out


def layer_winograd_features(layer: ConvLayerSpec, bs: int, q: int, r: int) -> dict:
    """Tile counts, Hadamard-product buffers and multiplications for one
    (output tile, filter tile) configuration."""
    _check_bs(bs)
    if (q, r) not in WINOGRAD_TILES:
        raise ShapeError(f"unsupported winograd tile (q={q}, r={r}); have {WINOGRAD_TILES}")
    op = ofm_size(layer)
    m, n, mg, k, ip = layer.m, layer.n, layer.m // layer.g, layer.k, layer.ip
    tile = (q + r - 1) ** 2
    in_tiles = _ceil_div(ip, q) ** 2
    out_tiles = _ceil_div(op, q) ** 2
    k_tiles = _ceil_div(k, r) ** 2
    out = {
        "wino_mem_fwd": bs * n * in_tiles * 3 * tile,
        "wino_mem_bwd_x": bs * m * out_tiles * 3 * tile,
        "wino_mem_bwd_w": bs * n * mg * in_tiles * 3 * tile,
        "wino_ops_fwd": bs * n * mg * in_tiles * k_tiles * tile,
        "wino_ops_bwd_x": bs * m * n * out_tiles * k_tiles * tile,
        "wino_ops_bwd_w": bs * n * mg * mg * in_tiles * _ceil_div(op, r) ** 2 * tile,
    }
    out["wino_mem_fwd_bwd_x"] = out["wino_mem_fwd"] + out["wino_mem_bwd_x"]
    out["wino_mem_fwd_bwd_w"] = out["wino_mem_fwd"] + out["wino_mem_bwd_w"]
    out["wino_mem_bwd_w_bwd_x"] = out["wino_mem_bwd_w"] + out["wino_mem_bwd_x"]
    out["wino_mem_all"] = (out["wino_mem_fwd_bwd_x"] + out["wino_mem_fwd_bwd_w"]
                           + out["wino_mem_bwd_w_bwd_x"])
    out["wino_ops_fwd_bwd_x"] = out["wino_ops_fwd"] + out["wino_ops_bwd_x"]
    out["wino_ops_fwd_bwd_w"] = out["wino_ops_fwd"] + out["wino_ops_bwd_w"]
    out["wino_ops_bwd_x_bwd_w"] = out["wino_ops_bwd_x"] + out["wino_ops_bwd_w"]
    out["wino_ops_all"] = (out["wino_ops_fwd_bwd_x"] + out["wino_ops_fwd_bwd_w"]
                           + out["wino_ops_bwd_x_bwd_w"])
    return out


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _check_bs(bs: int):
    if not isinstance(bs, int) or isinstance(bs, bool) or bs < 1:
        raise ShapeError(f"batch size must be a positive integer, got {bs!r}")


def layer_features(layer: ConvLayerSpec, bs: int, split_winograd: bool = False) -> dict:
    """All training-mode features of one layer, in canonical naming."""
    out = {}
    out.update(layer_tensor_features(layer, bs))
    out.update(layer_matmul_features(layer, bs))
    out.update(layer_fft_features(layer, bs))
    per_tile = {(q, r): layer_winograd_features(layer, bs, q, r) for q, r in WINOGRAD_TILES}
    wino_names = [name for name, _ in FEATURE_TAGS if name.startswith("wino_")]
    if split_winograd:
        for q, r in WINOGRAD_TILES:
            for name in wino_names:
                out[f"{name}_q{q}r{r}"] = per_tile[(q, r)][name]
    else:
        for name in wino_names:
            out[name] = sum(per_tile[t][name] for t in WINOGRAD_TILES)
    return out


def extract_features(net: NetworkSpec, bs: int, mode: str = TRAINING,
                     split_winograd: bool = False) -> FeatureVector:
    """Evaluate every feature per conv layer and sum across layers.

    Summation order is fixed (layer order, then feature order) so results
    are bit-reproducible regardless of any caller-side parallelism.
    """
    names = feature_names(mode, split_winograd)
    totals = {name: 0 for name in names}
    for layer in net.conv_layers():
        per_layer = layer_features(layer, bs, split_winograd)
        for name in names:
            totals[name] += per_layer[name]
    return FeatureVector(names=names, values=tuple(totals[n] for n in names),
                         bs=bs, mode=mode)


# -- CSV export ------------------------------------------------------------

FEATURE_CSV_META = ("network", "pruning_level", "strategy", "seed", "bs")


def write_feature_csv(path, rows, mode: str = TRAINING, split_winograd: bool = False):
    """Write (meta, FeatureVector) rows; meta is (network, level, strategy, seed).

    Integer-valued features are written as exact decimal integers; the FFT
    op counts as their float64 repr.
    """
    names = feature_names(mode, split_winograd)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_CSV_META + names)
        for meta, fv in rows:
            if fv.names != names:
                raise ShapeError("feature vector does not match requested mode")
            rendered = [str(v) if isinstance(v, int) else repr(float(v)) for v in fv.values]
            writer.writerow([meta[0], meta[1], meta[2], meta[3], fv.bs] + rendered)
