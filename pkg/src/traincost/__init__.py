"""traincost: predict CNN training memory and latency on a target device.

Per-layer analytical cost features (matrix-multiplication, FFT and Winograd
convolution, forward and backward passes) feed random-forest regressors
trained on profiled datapoints; the fitted predictors drive a constrained
evolutionary search for sub-network selection.
"""

from .dataset import (ATTR_COLUMN, ATTR_MODE, ATTRIBUTES, DesignMatrix,
                      PlanEntry, ProfileRecord, ProfilingPlan, VariantCache,
                      default_batch_sizes, generate_plan, join, load_dataset,
                      save_dataset, synthetic_dataset, synthetic_targets,
                      test_levels, train_levels)
from .errors import (ChecksumError, CsvError, EvalError, FitError,
                     InfeasibleError, IoError, JoinError, PlanError,
                     PruneError, SchemaError, ShapeError, TraincostError,
                     ValidationError, VersionError)
from .features import (FeatureVector, INFERENCE_ONLY, TRAINING,
                       extract_features, extractor_version, feature_names)
from .forest import (Forest, ForestConfig, feature_importance, fit, load,
                     predict, save)
from .ir import (BUNDLED_NETWORKS, ConvLayerSpec, Edge, NetworkSpec,
                 ShapeLayerSpec, bundled_network, load_network, network_from_dict,
                 network_to_dict, ofm_size, parse_network, save_network,
                 serialize_network)
from .predictor import (AttributeModelSet, EvaluationReport, evaluate,
                        predict_attributes, train_models)
from .pruning import (LayerWeighted, PruneConfig, UniformRandom,
                      build_strategy, prune_network, resize_network)
from .search import (Candidate, Constraints, DepthKnob, EsConfig, SearchSpace,
                     WidthKnob, estimate_search_cost, evolve,
                     expected_sample_count, parameter_count_fitness,
                     parse_space, sample_feasible)

__version__ = "0.1.0"
