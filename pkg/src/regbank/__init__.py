"""Audio event classification with bank-of-regressors descriptors.

Class-specific random regression forests estimate event onset/offset
positions from single segments; a bank of such regressors, weighted by a
random-forest matcher, turns an event into a compact structural descriptor
classified with one-vs-one SVMs. Bag-of-words baselines, a synthetic data
generator and an end-to-end CLI harness are included.
"""

from .baselines import Codebook, bow_encode, kmeans, max_vote, pbow_encode
from .bundle import load_bundle, save_bundle
from .config import default_config, load_config
from .dataset import (DatasetManifest, EventInstance, load_manifest,
                      read_wav, resample, save_manifest, write_wav)
from .descriptor import (BorDescriptor, NormalizationStats, ScoreCurves,
                         extract_bor, extract_training_descriptors,
                         extract_unstructured, fit_normalizer, normalize,
                         pad_sequence, phi_entry, score_curves)
from .features import (FeatureConfig, FrameScalars, Waveform,
                       extract_event_features, frame_scalars,
                       log_filter_bank, segment_signal, temporal_derivatives)
from .matcher import (FoldedMatchers, MatcherConfig, MatcherModel, posterior,
                      train_folded_matchers, train_matcher)
from .pipeline import (EvaluationReport, PipelineResult, emit_curves,
                       evaluate, render_report, run_pipeline, run_systems,
                       sweep_segment_size)
from .regforest import (ForestConfig, LeafModel, RegressorForest, SplitTest,
                        TrainingSet, apply_test,
                        build_regression_training_set, fit_leaf,
                        forest_estimate, grow_tree, route, sample_test_pool,
                        select_best_test, split_cost, train_forest)
from .svm import (KernelSpec, SvmModel, channel_scales, chi2_distance,
                  kernel_eval, kernel_matrix, ovo_predict, ovo_train,
                  smo_train_binary, tune)
from .synth import SynthDataset, SynthSpec, synth_dataset, write_synth_dataset

__version__ = "0.1.0"

__all__ = [
    "BorDescriptor", "Codebook", "DatasetManifest", "EvaluationReport",
    "EventInstance", "FeatureConfig", "FoldedMatchers", "ForestConfig",
    "FrameScalars", "KernelSpec", "LeafModel", "MatcherConfig",
    "MatcherModel", "NormalizationStats", "PipelineResult",
    "RegressorForest", "ScoreCurves", "SplitTest", "SvmModel",
    "SynthDataset", "SynthSpec", "TrainingSet", "Waveform", "apply_test",
    "bow_encode", "build_regression_training_set", "channel_scales",
    "chi2_distance", "default_config", "emit_curves", "evaluate",
    "extract_bor", "extract_event_features", "extract_training_descriptors",
    "extract_unstructured", "fit_leaf", "fit_normalizer", "forest_estimate",
    "frame_scalars", "grow_tree", "kernel_eval", "kernel_matrix", "kmeans",
    "load_bundle", "load_config", "load_manifest", "log_filter_bank",
    "max_vote", "normalize", "ovo_predict", "ovo_train", "pad_sequence",
    "pbow_encode", "phi_entry", "posterior", "read_wav", "render_report",
    "resample", "route", "run_pipeline", "run_systems", "sample_test_pool",
    "save_bundle", "save_manifest", "score_curves", "segment_signal",
    "select_best_test", "smo_train_binary", "split_cost",
    "sweep_segment_size", "synth_dataset", "temporal_derivatives",
    "train_folded_matchers", "train_forest", "train_matcher", "tune",
    "write_synth_dataset", "write_wav",
]
