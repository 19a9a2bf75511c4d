"""Sparse kernel-free quadratic-surface SVMs trained by penalty decomposition.

The library learns classifiers of the form f(x) = 1/2 x^T W x + b^T x + c
under an exact cardinality budget on [hvec(W); b], for hinge and quadratic
losses, and ships a cross-validation/benchmark harness plus a CLI.
"""

from .classifier import (
    OvRModel,
    QuadraticSurfaceModel,
    decision_value,
    deserialize,
    predict,
    predict_multi,
    serialize,
)
from .harness import (
    CVReport,
    Dataset,
    ExperimentConfig,
    cross_validate,
    load_csv,
    random_search,
    standardize,
    sweep_k,
    train_binary,
    train_multiclass,
)
from .pd_driver import PDConfig, PDTrace, StationarityReport, check_lu_zhang, penalty_decompose
from .quadfeat import (
    FeatureCache,
    PackedParams,
    SymIndexMap,
    build_feature_cache,
    duplication_matrix,
    elimination_matrix,
    hvec,
    pack,
    unpack,
)
from .solvers import (
    DualState,
    HingeSolution,
    LSSolution,
    hard_threshold,
    recover_primal_hinge,
    solve_dual_qp,
    solve_ls_subproblem,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureCache",
    "PackedParams",
    "SymIndexMap",
    "build_feature_cache",
    "duplication_matrix",
    "elimination_matrix",
    "hvec",
    "pack",
    "unpack",
    "DualState",
    "HingeSolution",
    "LSSolution",
    "hard_threshold",
    "recover_primal_hinge",
    "solve_dual_qp",
    "solve_ls_subproblem",
    "PDConfig",
    "PDTrace",
    "StationarityReport",
    "check_lu_zhang",
    "penalty_decompose",
    "OvRModel",
    "QuadraticSurfaceModel",
    "decision_value",
    "deserialize",
    "predict",
    "predict_multi",
    "serialize",
    "CVReport",
    "Dataset",
    "ExperimentConfig",
    "cross_validate",
    "load_csv",
    "random_search",
    "standardize",
    "sweep_k",
    "train_binary",
    "train_multiclass",
    "__version__",
]
