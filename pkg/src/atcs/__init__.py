"""Adaptive temporal compressed sensing for wearable activity recognition.

The package covers the whole loop: a deterministic accelerometer corpus,
sparse-binary compressed sensing with FISTA reconstruction, per-location
random forests, the two-stage evolutionary search (signal-type models, then
per-cluster compression ratios), the node/back-end simulator, and the
energy model that prices each operating mode.
"""

from .clustering import (CS_GRID, ClusteringError, ClusterModel,
                         RatioAssignment, assign, assign_many, davies_bouldin,
                         kmeans_fit, merge_equal_adjacent)
from .dataset import (Corpus, CorpusError, Location, Segment, Split,
                      load_corpus, read_archive, split_corpus, write_archive)
from .energy import (MODES, EnergyError, EnergyModel, calibrate,
                     default_model, read_config, savings_percent, write_config)
from .evolve.nsga2 import EvolveError, Individual, NsgaConfig, nsga2_run
from .evolve.problems import (eps_threshold, objectives_p1, objectives_p2,
                              select_solution, solution_stats,
                              three_by_cluster_count, weighted_mean_cr)
from .features import (FEATURE_NAMES, FeatureSelection, FeatureVector,
                       feature_matrix, feature_vector)
from .forest import (ConfusionMatrix, ForestError, ForestModel, evaluate,
                     load_forest, node_count, predict_many, save_forest,
                     train_forest)
from .pipeline import (REDUCED_FEATURE_NAMES, BackendModels, LookupTable,
                       PipelineError, RunReport, ScaleConfig,
                       baseline_accuracies, build_lut, correct_table,
                       naive_ratio_from_lut, simulate, solution_error,
                       train_backend, train_localization)
from .seeds import subseed, substream
from .sensing import (CodecError, CompressedSegment, RecoveryConfig, compress,
                      dct_basis, decompress, nrmse, reconstruct,
                      reconstruct_batch, segment_nrmse, sparse_filter)
from .synth import generate_corpus, synth_segment, write_tree

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
