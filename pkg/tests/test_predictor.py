import numpy as np
import pytest

from traincost.dataset import (ProfileRecord, VariantCache, synthetic_dataset,
                               synthetic_targets)
from traincost.errors import EvalError, JoinError, ShapeError
from traincost.features import feature_names
from traincost.forest import ForestConfig
from traincost.ir import bundled_network
from traincost.predictor import (AttributeModelSet, evaluate,
                                 predict_attributes, train_models)

INTERP = ForestConfig(n_trees=5, bootstrap=False, min_samples_leaf=1, seed=1)


@pytest.fixture(scope="module")
def nets():
    return {"squeezenet": bundled_network("squeezenet")}


@pytest.fixture(scope="module")
def cache(nets):
    return VariantCache(nets)


@pytest.fixture(scope="module")
def records(nets, cache):
    return synthetic_dataset(nets, [0, 30, 50], batch_sizes=[2, 4, 8, 16, 32],
                             noise=0.0, cache=cache)


class TestTrainModels:
    def test_shape_contract(self, records, nets, cache):
        models = train_models(records, nets, ["gamma", "phi"], INTERP, cache=cache)
        assert set(models.models) == {"gamma", "phi"}
        assert models.models["gamma"].feature_names == feature_names("training")

    def test_inference_mode_models(self, records, nets, cache):
        models = train_models(records, nets, ["small_phi"], INTERP, cache=cache)
        assert models.models["small_phi"].feature_names == feature_names("inference")

    def test_missing_column_raises(self, nets, cache):
        recs = synthetic_dataset(nets, [0], batch_sizes=[2, 4],
                                 include_inference=False, cache=cache)
        with pytest.raises(JoinError, match="small_gamma_mb"):
            train_models(recs, nets, ["small_gamma"], INTERP, cache=cache)

    def test_unknown_attribute(self, records, nets):
        with pytest.raises(JoinError):
            train_models(records, nets, ["joules"], INTERP)


class TestPredictAttributes:
    def test_interpolating_model_recovers_training_point(self, records, nets, cache):
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        rec = records[7]
        variant = cache.variant(rec.network, rec.pruning_level, rec.strategy, rec.seed)
        got = predict_attributes(models, variant, rec.bs)["gamma"]
        assert got == pytest.approx(rec.gamma_mb, rel=1e-12)

    def test_bounded_by_target_range(self, records, nets, cache):
        models = train_models(records, nets, ["phi"], ForestConfig(n_trees=10, seed=4),
                              cache=cache)
        lo, hi = models.models["phi"].target_range
        huge = cache.variant("squeezenet", 0, "uniform", 0)
        assert lo <= predict_attributes(models, huge, 256)["phi"] <= hi

    def test_extractor_version_checked(self, records, nets, cache):
        import dataclasses
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        stale = dataclasses.replace(models.models["gamma"],
                                    extractor_version="features-v0")
        with pytest.raises(ShapeError, match="extractor"):
            AttributeModelSet(models={"gamma": stale})

    def test_wrong_feature_names_rejected(self, records, nets, cache):
        import dataclasses
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        wrong = dataclasses.replace(models.models["gamma"],
                                    feature_names=("a", "b"))
        with pytest.raises(ShapeError, match="different features"):
            AttributeModelSet(models={"gamma": wrong})


class TestEvaluate:
    def test_exact_model_gives_zero_report(self, records, nets, cache):
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        report = evaluate(models, records, nets, cache=cache)
        assert report.overall("gamma") == pytest.approx(0.0, abs=1e-12)

    def test_single_record_ape(self, nets, cache):
        models = train_models(
            synthetic_dataset(nets, [0], batch_sizes=[2, 4], cache=cache),
            nets, ["gamma"], INTERP, cache=cache)
        rec = ProfileRecord(network="squeezenet", pruning_level=0, strategy="uniform",
                            seed=0, bs=2, gamma_mb=100.0, phi_ms=1.0)
        variant = cache.variant("squeezenet", 0, "uniform", 0)
        predicted = predict_attributes(models, variant, 2)["gamma"]
        report = evaluate(models, [rec], nets, cache=cache)
        assert report.entries[0].ape == abs(predicted - 100.0) / 100.0

    def test_zero_actual_rejected(self, records, nets, cache):
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        bad = ProfileRecord(network="squeezenet", pruning_level=0, strategy="uniform",
                            seed=0, bs=2, gamma_mb=0.0, phi_ms=1.0)
        with pytest.raises(EvalError):
            evaluate(models, [bad], nets, cache=cache)

    def test_aggregate_consistency(self, records, nets, cache):
        models = train_models(records, nets, ["gamma", "phi"],
                              ForestConfig(n_trees=10, seed=3), cache=cache)
        report = evaluate(models, records, nets, cache=cache)
        for attr in ("gamma", "phi"):
            entries = [e.ape for e in report.entries if e.attribute == attr]
            assert report.overall(attr) == pytest.approx(
                sum(entries) / len(entries), abs=1e-12)
            by_bs = report.by_group(attr, "bs")
            weighted = sum(v * sum(1 for e in report.entries
                                   if e.attribute == attr and e.bs == k)
                           for k, v in by_bs.items())
            assert weighted / len(entries) == pytest.approx(report.overall(attr),
                                                            abs=1e-12)

    def test_noisier_attribute_evaluates_worse(self, nets, cache):
        noisy = synthetic_dataset(nets, [0, 30, 50], batch_sizes=[2, 4, 8, 16, 32],
                                  noise={"gamma_mb": 0.002, "phi_ms": 0.08},
                                  cache=cache)
        held = synthetic_dataset(nets, [20, 40], batch_sizes=[2, 4, 8, 16, 32],
                                 noise={"gamma_mb": 0.002, "phi_ms": 0.08},
                                 rng_seed=1, cache=cache)
        models = train_models(noisy, nets, ["gamma", "phi"],
                              ForestConfig(n_trees=30, seed=5), cache=cache)
        report = evaluate(models, held, nets, cache=cache)
        assert report.overall("gamma") < report.overall("phi")

    def test_report_export(self, tmp_path, records, nets, cache):
        import csv as csvmod
        import json
        models = train_models(records, nets, ["gamma"], INTERP, cache=cache)
        report = evaluate(models, records, nets, cache=cache)
        cp, jp = tmp_path / "r.csv", tmp_path / "r.json"
        report.write_csv(cp)
        report.write_summary_json(jp)
        with open(cp) as fh:
            rows = list(csvmod.reader(fh))
        assert len(rows) == len(report.entries) + 1
        summary = json.loads(jp.read_text())
        assert "gamma" in summary and "mean_ape" in summary["gamma"]


class TestSyntheticGroundTruth:
    def test_targets_positive_and_finite(self, nets, cache):
        variant = cache.variant("squeezenet", 50, "uniform", 0)
        targets = synthetic_targets(variant, 64)
        assert all(np.isfinite(v) and v > 0 for v in targets.values())

    def test_pruning_reduces_targets(self, nets, cache):
        full = synthetic_targets(cache.variant("squeezenet", 0, "uniform", 0), 64)
        pruned = synthetic_targets(cache.variant("squeezenet", 70, "uniform", 0), 64)
        assert pruned["gamma_mb"] < full["gamma_mb"]
        assert pruned["phi_ms"] < full["phi_ms"]
