"""Correlation-aware differential privacy toolkit.

Quantifies record-level correlation, calibrates Laplace noise to
correlated sensitivity, selects features privately while reducing the
dataset's correlation, trains output-perturbed linear models, and
releases count/mean queries, with a benchmark harness comparing the
nonprivate, group, zhu, and crfs schemes.
"""

from .correlation import (
    CorrelationMatrix,
    QueryFn,
    build_matrix,
    correlated_sensitivity,
    count_records_query,
    group_sensitivity,
    record_pearson,
)
from .dataset import (
    Dataset,
    DatasetError,
    PreprocessConfig,
    denormalize,
    drop_missing_and_constant,
    load_csv,
    normalize,
    train_test_split,
)
from .harness import ExperimentConfig, PipelineError, run_pipeline
from .importance import (
    ForestConfig,
    ImportanceVector,
    dp_importance,
    gini_importance,
    record_sensitivity_fim,
    sensitivity_fim,
    train_forest,
)
from .learners import (
    LinearModel,
    TrainConfig,
    accuracy,
    perturb_model,
    train_logistic,
    train_svm,
)
from .mechanisms import (
    BudgetExceededError,
    NoiseSource,
    PrivacyBudget,
    laplace_sample,
    perturb_value,
    perturb_vector,
    spend,
)
from .publishing import AggQuery, QueryReport, dp_release, evaluate, mae, mae_adjusted
from .selection import (
    FeatureSets,
    SelectionConfig,
    adjust_features,
    best_feature_set,
    feature_pearson,
    remove_collinear,
    remove_unimportant,
    select_features,
)
from .synthetic import make_synthetic

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
