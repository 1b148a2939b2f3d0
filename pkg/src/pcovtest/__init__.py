"""Projection-covariance independence testing.

Squared projection covariances of high-dimensional blocks, estimated
over moving subgroups, drive two tests: a global top-L statistic with
Monte-Carlo critical values and an FDR-controlled multiple-testing
procedure.  Both run monolithically or over K data blocks with a
sign-multiplier sampler that avoids any d-dimensional factorization.
"""
from .errors import (DegenerateVarianceError, DimensionMismatchError,
                     MatrixLoadError, PcovError, ValidationError)
from .estimator import (IndexSetPair, SubgroupStatMatrix, moving_estimates,
                        pcov_full, pcov_subgroup)
from .longrun import (LongRunEstimates, longrun_diag, longrun_sigma,
                      psd_repair)
from .global_test import (GlobalTestResult, critical_value, f_L,
                          run_global_test, standardize)
from .multiple_test import (MarginalResult, MultipleTestResult,
                            run_multiple_test, threshold_search)
from .families import (HypothesisFamily, Layout, build_family_a,
                       build_family_b, build_family_c, build_family_custom)
from .distributed import (BlockPartition, BlockStats, all_block_stats,
                          dist_global_stat, dist_t_vector, partition_blocks,
                          partition_from_sizes, rademacher_draw,
                          run_dist_global_test, run_dist_multiple_test)
from .io import (RunConfig, canonical_json, emit_report, load_layout,
                 load_matrix, save_layout, save_matrix)
from .simulate import (ExperimentResult, RegionMap, SimConfig,
                       generate_dataset, generate_nonlinear_dataset,
                       kmeans_partition, run_experiment)

__version__ = "0.1.0"

__all__ = [
    "BlockPartition", "BlockStats", "DegenerateVarianceError",
    "DimensionMismatchError", "ExperimentResult", "GlobalTestResult",
    "HypothesisFamily", "IndexSetPair", "Layout", "LongRunEstimates",
    "MarginalResult", "MatrixLoadError", "MultipleTestResult", "PcovError",
    "RegionMap", "RunConfig", "SimConfig", "SubgroupStatMatrix",
    "ValidationError", "all_block_stats",
    "build_family_a", "build_family_b", "build_family_c",
    "build_family_custom", "canonical_json", "critical_value",
    "dist_global_stat", "dist_t_vector", "emit_report", "f_L",
    "generate_dataset", "generate_nonlinear_dataset", "kmeans_partition",
    "load_layout", "load_matrix", "longrun_diag", "longrun_sigma",
    "moving_estimates", "partition_blocks", "partition_from_sizes",
    "pcov_full", "pcov_subgroup", "psd_repair", "rademacher_draw",
    "run_dist_global_test", "run_dist_multiple_test", "run_experiment",
    "run_global_test", "run_multiple_test", "save_layout", "save_matrix",
    "standardize", "threshold_search",
]
