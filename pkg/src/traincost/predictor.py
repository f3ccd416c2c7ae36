"""End-to-end pipeline: per-attribute forests, prediction, and evaluation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from . import forest as rf
from .dataset import (ATTR_COLUMN, ATTR_MODE, ATTRIBUTES, VariantCache, join)
from .errors import EvalError, JoinError, ShapeError
from .features import extract_features, extractor_version, feature_names
from .forest import Forest, ForestConfig
from .ir import NetworkSpec


@dataclass(frozen=True)
class AttributeModelSet:
    """One fitted forest per attribute, tied to one feature-extractor version."""

    models: dict[str, Forest]
    extractor: str = field(default_factory=extractor_version)

    def __post_init__(self):
        for attr, model in self.models.items():
            if attr not in ATTRIBUTES:
                raise ShapeError(f"unknown attribute {attr!r}; have {ATTRIBUTES}")
            expected = feature_names(ATTR_MODE[attr])
            if model.feature_names != expected:
                raise ShapeError(
                    f"model for {attr} was trained on different features "
                    f"({len(model.feature_names)} vs {len(expected)} expected)")
            if model.extractor_version and model.extractor_version != self.extractor:
                raise ShapeError(
                    f"model for {attr} was built with extractor "
                    f"'{model.extractor_version}', this package provides '{self.extractor}'")


def train_models(records, networks, attributes, config: ForestConfig = ForestConfig(),
                 cache: VariantCache | None = None) -> AttributeModelSet:
    """Fit one forest per requested attribute from profiled records."""
    cache = cache or VariantCache(dict(networks))
    models = {}
    for attr in attributes:
        if attr not in ATTRIBUTES:
            raise JoinError(f"unknown attribute {attr!r}; have {ATTRIBUTES}")
        matrix = join(records, networks, attr, cache=cache)
        models[attr] = rf.fit(matrix.x, matrix.y, config,
                              feature_names=matrix.feature_names, target_name=attr,
                              extractor_version=extractor_version())
    return AttributeModelSet(models=models)


def predict_attributes(models: AttributeModelSet, net: NetworkSpec, bs: int) -> dict[str, float]:
    """Predict every modeled attribute for a (network, batch size) pair."""
    out = {}
    for attr, model in models.models.items():
        fv = extract_features(net, bs, ATTR_MODE[attr])
        out[attr] = rf.predict(model, fv.as_floats())
    return out


@dataclass(frozen=True)
class ErrorEntry:
    network: str
    pruning_level: int
    strategy: str
    seed: int
    bs: int
    attribute: str
    actual: float
    predicted: float

    @property
    def ape(self) -> float:
        return abs(self.predicted - self.actual) / self.actual


@dataclass(frozen=True)
class EvaluationReport:
    """Per-record absolute percentage errors plus grouped means."""

    entries: tuple[ErrorEntry, ...]

    def _mean(self, entries) -> float:
        return sum(e.ape for e in entries) / len(entries) if entries else 0.0

    def overall(self, attribute: str) -> float:
        return self._mean([e for e in self.entries if e.attribute == attribute])

    def by_group(self, attribute: str, key: str) -> dict:
        groups: dict = {}
        for e in self.entries:
            if e.attribute == attribute:
                groups.setdefault(getattr(e, key), []).append(e)
        return {k: self._mean(v) for k, v in sorted(groups.items())}

    def attributes(self) -> tuple[str, ...]:
        return tuple(sorted({e.attribute for e in self.entries}))

    def target_stats(self, attribute: str) -> dict:
        actuals = [e.actual for e in self.entries if e.attribute == attribute]
        if not actuals:
            return {"count": 0}
        return {"count": len(actuals), "min": min(actuals), "max": max(actuals),
                "mean": sum(actuals) / len(actuals)}

    def summary(self) -> dict:
        return {
            attr: {
                "mean_ape": self.overall(attr),
                "by_pruning_level": self.by_group(attr, "pruning_level"),
                "by_bs": self.by_group(attr, "bs"),
                "by_network": self.by_group(attr, "network"),
                "targets": self.target_stats(attr),
            }
            for attr in self.attributes()
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["network", "pruning_level", "strategy", "seed", "bs",
                             "attribute", "actual", "predicted", "ape"])
            for e in self.entries:
                writer.writerow([e.network, e.pruning_level, e.strategy, e.seed, e.bs,
                                 e.attribute, repr(e.actual), repr(e.predicted),
                                 repr(e.ape)])

    def write_summary_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate(models: AttributeModelSet, records, networks,
             cache: VariantCache | None = None) -> EvaluationReport:
    """Absolute percentage error of every model on every joinable record."""
    cache = cache or VariantCache(dict(networks))
    entries = []
    for attr, model in models.models.items():
        column = ATTR_COLUMN[attr]
        mode = ATTR_MODE[attr]
        for record in records:
            actual = getattr(record, column)
            if actual is None:
                continue
            if actual == 0:
                raise EvalError(
                    f"{column} is 0 for record {record.key()}; "
                    "percentage error is undefined")
            predicted = rf.predict(model, cache.feature_row(record, mode))
            entries.append(ErrorEntry(
                network=record.network, pruning_level=record.pruning_level,
                strategy=record.strategy, seed=record.seed, bs=record.bs,
                attribute=attr, actual=float(actual), predicted=predicted))
    return EvaluationReport(entries=tuple(entries))
