from .classifier import (
    AttributeClassifier,
    ClassifierFeatures,
    FeatureExtractor,
    class_probabilities,
    train_attribute_classifier,
)
from .metrics import (
    AttributeAccuracy,
    GaussianStats,
    PrecisionAtK,
    accuracy_from_probabilities,
    exact_domain_accuracy,
    frechet_distance,
    inception_score,
    mean_pairwise_distance,
    p_at_10,
    trace_sqrt_product,
)
from .protocol import (
    RetrievalReport,
    RetrievalRow,
    TranslationReport,
    eval_retrieval,
    eval_translation,
    lpips_diversity,
    write_csv,
    write_json,
)

__all__ = [
    "AttributeAccuracy",
    "AttributeClassifier",
    "ClassifierFeatures",
    "FeatureExtractor",
    "GaussianStats",
    "PrecisionAtK",
    "RetrievalReport",
    "RetrievalRow",
    "TranslationReport",
    "accuracy_from_probabilities",
    "class_probabilities",
    "eval_retrieval",
    "eval_translation",
    "exact_domain_accuracy",
    "frechet_distance",
    "inception_score",
    "lpips_diversity",
    "mean_pairwise_distance",
    "p_at_10",
    "trace_sqrt_product",
    "write_csv",
    "write_json",
]
