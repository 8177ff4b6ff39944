"""Driver affective-state detection from EDA and heart rate.

Pipeline: trace conditioning -> windowed two-view features -> drive
profiling via normalized spectral clustering -> multi-task multiple-kernel
LSSVM classification, with single-task baselines and a nested
cross-validation harness for evaluation.
"""

from .baselines import (
    LogisticRegressionClassifier,
    LogRegModel,
    SingleTaskKernelClassifier,
    logreg_fit,
    logreg_predict,
    single_task_kernel_fit,
)
from .clustering import (
    ProfileVector,
    TaskAssignment,
    assign_tasks,
    build_profiles,
    kmeans,
    profile_vector,
    similarity_matrix,
    spectral_cluster,
)
from .config import PipelineConfig, load_config
from .features import (
    FEATURE_NAMES,
    Peak,
    WindowInstance,
    balance_downsample,
    detect_peaks,
    eda_features,
    hr_features,
    label_from_score,
    label_from_segments,
    slide_windows,
)
from .harness import (
    CvReport,
    FoldPlan,
    Metrics,
    ModelChoice,
    compute_metrics,
    grid_search,
    make_folds,
    run_experiment,
)
from .kernels import GramCache, KernelSpec, combined_gram, gram, split_views
from .lssvm import LssvmSolution, lssvm_decision, lssvm_fit
from .mtmkl import (
    MtMklClassifier,
    MtMklModel,
    TaskData,
    mtmkl_predict,
    mtmkl_train,
    objective_gradient,
    omega,
    omega_gradient,
    project_simplex,
)
from .serialize import load_model, save_model
from .signal import SignalTrace, lowpass_filter, minmax_normalize

__version__ = "0.1.0"

__all__ = [
    "CvReport",
    "FEATURE_NAMES",
    "FoldPlan",
    "GramCache",
    "KernelSpec",
    "LogRegModel",
    "LogisticRegressionClassifier",
    "LssvmSolution",
    "Metrics",
    "ModelChoice",
    "MtMklClassifier",
    "MtMklModel",
    "Peak",
    "PipelineConfig",
    "ProfileVector",
    "SignalTrace",
    "SingleTaskKernelClassifier",
    "TaskAssignment",
    "TaskData",
    "WindowInstance",
    "assign_tasks",
    "balance_downsample",
    "build_profiles",
    "combined_gram",
    "compute_metrics",
    "detect_peaks",
    "eda_features",
    "gram",
    "grid_search",
    "hr_features",
    "kmeans",
    "label_from_score",
    "label_from_segments",
    "load_config",
    "load_model",
    "logreg_fit",
    "logreg_predict",
    "lowpass_filter",
    "lssvm_decision",
    "lssvm_fit",
    "make_folds",
    "minmax_normalize",
    "mtmkl_predict",
    "mtmkl_train",
    "objective_gradient",
    "omega",
    "omega_gradient",
    "profile_vector",
    "project_simplex",
    "run_experiment",
    "save_model",
    "similarity_matrix",
    "single_task_kernel_fit",
    "slide_windows",
    "spectral_cluster",
    "split_views",
]
