"""Measurement records, profiling plans, and dataset -> matrix joins.

The measurement CSV is the only contract between this package and whatever
collects data on a device, so its schema is fixed and checked strictly.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import CsvError, JoinError, PlanError, PruneError
from .features import INFERENCE_ONLY, TRAINING, extract_features, feature_names
from .ir import NetworkSpec
from .pruning import PruneConfig, build_strategy, prune_network

CSV_HEADER = ("network", "pruning_level", "strategy", "seed", "bs",
              "gamma_mb", "phi_ms", "small_gamma_mb", "small_phi_ms")

ATTRIBUTES = ("gamma", "phi", "small_gamma", "small_phi")
ATTR_COLUMN = {"gamma": "gamma_mb", "phi": "phi_ms",
               "small_gamma": "small_gamma_mb", "small_phi": "small_phi_ms"}
ATTR_MODE = {"gamma": TRAINING, "phi": TRAINING,
             "small_gamma": INFERENCE_ONLY, "small_phi": INFERENCE_ONLY}

# profiling-plan defaults; 25 batch sizes covering the common power-of-two
# training sizes plus evenly spread intermediates in [2, 256]
_BATCH_SIZES = (2, 4, 8, 16, 32, 64, 70, 80, 90, 100, 110, 120, 128,
                140, 150, 160, 170, 180, 190, 200, 210, 220, 230, 240, 256)
_TRAIN_LEVELS = (0, 30, 50, 70, 90)


def default_batch_sizes() -> list[int]:
    return list(_BATCH_SIZES)


def train_levels() -> list[int]:
    return list(_TRAIN_LEVELS)


def test_levels() -> list[int]:
    """All multiples of 5 in [0, 90] that are not training levels."""
    return [5 * x for x in range(19) if 5 * x not in _TRAIN_LEVELS]


@dataclass(frozen=True)
class ProfileRecord:
    network: str
    pruning_level: int
    strategy: str
    seed: int
    bs: int
    gamma_mb: float
    phi_ms: float
    small_gamma_mb: float | None = None
    small_phi_ms: float | None = None

    def __post_init__(self):
        if self.bs < 1:
            raise CsvError(f"bs must be >= 1, got {self.bs}")
        if not 0 <= self.pruning_level < 100:
            raise CsvError(f"pruning_level must be in [0, 100), got {self.pruning_level}")
        for col in ("gamma_mb", "phi_ms"):
            v = getattr(self, col)
            if not math.isfinite(v) or v < 0:
                raise CsvError(f"{col} must be finite and >= 0, got {v}")
        small = (self.small_gamma_mb, self.small_phi_ms)
        if (small[0] is None) != (small[1] is None):
            raise CsvError("small_gamma_mb and small_phi_ms must be present together")
        for col, v in zip(("small_gamma_mb", "small_phi_ms"), small):
            if v is not None and (not math.isfinite(v) or v < 0):
                raise CsvError(f"{col} must be finite and >= 0, got {v}")

    def key(self) -> tuple:
        return (self.network, self.pruning_level, self.strategy, self.seed, self.bs)


@dataclass(frozen=True)
class PlanEntry:
    network: str
    pruning_level: int
    strategy: str
    seed: int
    bs: int


@dataclass(frozen=True)
class ProfilingPlan:
    entries: tuple[PlanEntry, ...]
    levels: tuple[int, ...]
    strategies: tuple[str, ...]
    seeds: tuple[int, ...]
    batch_sizes: tuple[int, ...]


def generate_plan(networks, levels, strategies=("uniform",), seeds=(0,),
                  batch_sizes=None) -> ProfilingPlan:
    """Cross product of networks x levels x strategies x seeds x batch sizes."""
    names = [n.name if isinstance(n, NetworkSpec) else n for n in networks]
    batch_sizes = list(_BATCH_SIZES) if batch_sizes is None else list(batch_sizes)
    for label, seq in (("network", names), ("level", levels),
                       ("strategy", strategies), ("seed", seeds), ("bs", batch_sizes)):
        dupes = {x for x in seq if list(seq).count(x) > 1}
        if dupes:
            raise PlanError(f"duplicate {label} values: {sorted(dupes)}")
    for lv in levels:
        if not 0 <= lv < 100:
            raise PlanError(f"pruning level must be in [0, 100), got {lv}")
    for bs in batch_sizes:
        if bs < 1:
            raise PlanError(f"batch size must be >= 1, got {bs}")
    entries = tuple(PlanEntry(net, lv, st, sd, bs)
                    for net in names for lv in levels for st in strategies
                    for sd in seeds for bs in batch_sizes)
    return ProfilingPlan(entries=entries, levels=tuple(levels),
                         strategies=tuple(strategies), seeds=tuple(seeds),
                         batch_sizes=tuple(batch_sizes))


PLAN_HEADER = ("network", "pruning_level", "strategy", "seed", "bs")


def write_plan_csv(plan: ProfilingPlan, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAN_HEADER)
        for e in plan.entries:
            writer.writerow([e.network, e.pruning_level, e.strategy, e.seed, e.bs])


def load_plan_csv(path) -> list[PlanEntry]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PLAN_HEADER:
        raise CsvError(f"plan header must be {','.join(PLAN_HEADER)}", row=1)
    entries = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(PLAN_HEADER):
            raise CsvError(f"expected {len(PLAN_HEADER)} fields, got {len(row)}", row=i)
        try:
            entries.append(PlanEntry(row[0], int(row[1]), row[2], int(row[3]), int(row[4])))
        except ValueError as exc:
            raise CsvError(str(exc), row=i) from exc
    return entries


# -- measurement CSV -------------------------------------------------------


def load_dataset(path) -> list[ProfileRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise CsvError(f"header must be exactly {','.join(CSV_HEADER)}", row=1)
    records = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise CsvError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", row=i)
        try:
            records.append(ProfileRecord(
                network=row[0],
                pruning_level=int(row[1]),
                strategy=row[2],
                seed=int(row[3]),
                bs=int(row[4]),
                gamma_mb=float(row[5]),
                phi_ms=float(row[6]),
                small_gamma_mb=float(row[7]) if row[7] != "" else None,
                small_phi_ms=float(row[8]) if row[8] != "" else None,
            ))
        except CsvError as exc:
            raise CsvError(str(exc), row=i) from exc
        except ValueError as exc:
            raise CsvError(str(exc), row=i) from exc
    return records


def save_dataset(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.network, r.pruning_level, r.strategy, r.seed, r.bs,
                repr(float(r.gamma_mb)), repr(float(r.phi_ms)),
                "" if r.small_gamma_mb is None else repr(float(r.small_gamma_mb)),
                "" if r.small_phi_ms is None else repr(float(r.small_phi_ms)),
            ])


# -- joining records with extracted features -------------------------------


@dataclass(frozen=True)
class DesignMatrix:
    x: np.ndarray                 # (n_records, n_features) float64
    y: np.ndarray                 # (n_records,) float64
    feature_names: tuple[str, ...]
    records: tuple[ProfileRecord, ...]


class VariantCache:
    """Memoizes pruned variants and their feature rows across joins."""

    def __init__(self, networks: dict[str, NetworkSpec]):
        self.networks = dict(networks)
        self._variants: dict[tuple, NetworkSpec] = {}
        self._rows: dict[tuple, list[float]] = {}

    def variant(self, network: str, level: int, strategy: str, seed: int) -> NetworkSpec:
        key = (network, level, strategy, seed)
        if key not in self._variants:
            if network not in self.networks:
                raise JoinError(f"record references unknown network '{network}'")
            base = self.networks[network]
            try:
                cfg = PruneConfig(level=level, strategy=build_strategy(strategy, base),
                                  seed=seed)
                self._variants[key] = prune_network(base, cfg)
            except PruneError as exc:
                raise JoinError(f"cannot reconstruct variant {key}: {exc}") from exc
        return self._variants[key]

    def feature_row(self, record: ProfileRecord, mode: str) -> list[float]:
        key = record.key() + (mode,)
        if key not in self._rows:
            variant = self.variant(record.network, record.pruning_level,
                                   record.strategy, record.seed)
            self._rows[key] = extract_features(variant, record.bs, mode).as_floats()
        return self._rows[key]


def join(records, networks, attribute: str, cache: VariantCache | None = None) -> DesignMatrix:
    """Build the (features, target) matrix for one attribute.

    Records missing an optional requested target are dropped; record order
    is preserved.
    """
    if attribute not in ATTRIBUTES:
        raise JoinError(f"unknown attribute {attribute!r}; have {ATTRIBUTES}")
    column = ATTR_COLUMN[attribute]
    mode = ATTR_MODE[attribute]
    cache = cache or VariantCache(dict(networks))

    kept, rows, targets = [], [], []
    for record in records:
        value = getattr(record, column)
        if value is None:
            continue
        rows.append(cache.feature_row(record, mode))
        targets.append(float(value))
        kept.append(record)
    if records and not kept:
        raise JoinError(f"no record carries the requested column '{column}'")
    names = feature_names(mode)
    x = np.array(rows, dtype=np.float64).reshape(len(kept), len(names))
    return DesignMatrix(x=x, y=np.array(targets, dtype=np.float64),
                        feature_names=names, records=tuple(kept))


# -- synthetic device (test scaffolding) ------------------------------------
#
# Fixed affine combinations of a few features plus bounded multiplicative
# noise.  This fabricates plausible-looking measurements so the full
# pipeline can be exercised without hardware; it is NOT a model of any
# real device.

_SYN = {
    "gamma_base_mb": 420.0,
    "gamma_tensor": 0.012,
    "gamma_im2col": 0.35,
    "gamma_fft": 0.004,
    "phi_base_ms": 6.0,
    "phi_mm_ops": 1.1e-3,
    "phi_fft_ops": 0.05e-3,
    "small_gamma_base_mb": 150.0,
    "small_gamma_weights": 1.0,
    "small_gamma_im2col": 0.30,
    "small_phi_base_ms": 1.5,
    "small_phi_ops": 0.35e-3,
}
_MB = 4.0 / 1e6       # elements -> MB at 4 bytes per element
_MOPS = 1.0 / 1e6     # op counts -> millions


def synthetic_targets(variant: NetworkSpec, bs: int) -> dict[str, float]:
    """Noise-free synthetic attribute values for one (network variant, bs)."""
    t = extract_features(variant, bs, TRAINING).as_dict()
    i = extract_features(variant, bs, INFERENCE_ONLY).as_dict()
    gamma = (_SYN["gamma_base_mb"]
             + _MB * (_SYN["gamma_tensor"] * float(t["mem_tensors_total"])
                      + _SYN["gamma_im2col"] * float(t["mm_mem_im2col_fwd_total"])
                      + _SYN["gamma_fft"] * float(t["fft_mem_all_pairs"])))
    phi = (_SYN["phi_base_ms"]
           + _MOPS * (_SYN["phi_mm_ops"] * float(t["mm_ops_all"])
                      + _SYN["phi_fft_ops"] * float(t["fft_ops_all"])))
    small_gamma = (_SYN["small_gamma_base_mb"]
                   + _MB * (_SYN["small_gamma_weights"] * float(i["mem_weights"])
                            + _SYN["small_gamma_im2col"] * float(i["mm_mem_im2col_fwd_total"])))
    small_phi = (_SYN["small_phi_base_ms"]
                 + _MOPS * _SYN["small_phi_ops"] * float(i["mm_ops_fwd"]))
    return {"gamma_mb": gamma, "phi_ms": phi,
            "small_gamma_mb": small_gamma, "small_phi_ms": small_phi}


def _record_noise(key: tuple, rng_seed: int, noise: float, n: int) -> list[float]:
    digest = hashlib.sha256(f"{rng_seed}|{'|'.join(map(str, key))}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    return [1.0 + noise * (2.0 * rng.random() - 1.0) for _ in range(n)]


def synthetic_dataset(networks: dict[str, NetworkSpec], levels, strategies=("uniform",),
                      seeds=(0,), batch_sizes=None, noise=0.01,
                      rng_seed: int = 0, include_inference: bool = True,
                      cache: VariantCache | None = None) -> list[ProfileRecord]:
    """Fabricate a labeled synthetic-device dataset (testing only).

    `noise` is the half-width of the multiplicative noise band, either one
    float for all attributes or a dict keyed by measurement column.
    """
    if isinstance(noise, dict):
        levels_by_col = {col: float(noise.get(col, 0.0))
                         for col in ("gamma_mb", "phi_ms", "small_gamma_mb", "small_phi_ms")}
    else:
        levels_by_col = {col: float(noise)
                         for col in ("gamma_mb", "phi_ms", "small_gamma_mb", "small_phi_ms")}
    plan = generate_plan(sorted(networks), levels, strategies, seeds, batch_sizes)
    cache = cache or VariantCache(networks)
    records = []
    for e in plan.entries:
        variant = cache.variant(e.network, e.pruning_level, e.strategy, e.seed)
        clean = synthetic_targets(variant, e.bs)
        key = (e.network, e.pruning_level, e.strategy, e.seed, e.bs)
        u = _record_noise(key, rng_seed, 1.0, 4)  # raw multipliers at unit width
        noisy = {col: clean[col] * (1.0 + levels_by_col[col] * (u[i] - 1.0))
                 for i, col in enumerate(("gamma_mb", "phi_ms", "small_gamma_mb", "small_phi_ms"))}
        records.append(ProfileRecord(
            network=e.network, pruning_level=e.pruning_level, strategy=e.strategy,
            seed=e.seed, bs=e.bs,
            gamma_mb=noisy["gamma_mb"],
            phi_ms=noisy["phi_ms"],
            small_gamma_mb=noisy["small_gamma_mb"] if include_inference else None,
            small_phi_ms=noisy["small_phi_ms"] if include_inference else None,
        ))
    return records
