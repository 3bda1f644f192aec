"""Affect-aware cross-domain recommendation: music preferences to paintings."""

from .affect import (
    StabilityStats,
    VALexicon,
    VAVector,
    deam_stability_filter,
    emotions_to_va,
    gaussian_similarity,
    therapeutic_curation_filter,
    va_distance,
)
from .catalog import (
    Catalog,
    EmbeddingMatrix,
    FeatureRecord,
    ScalerParams,
    load_catalog,
    load_matrix,
    minmax_scale,
    save_matrix,
    synth_catalog,
)
from .engines import (
    Engine,
    PreferenceRating,
    RecommendationList,
    SimilarityIndex,
    build_haydn_index,
    build_mozart_index,
    build_salieri_index,
    build_visual_index,
    load_index,
    normalize_ratings,
    recommend,
    save_index,
)
from .evaluation import ranking_overlap, retrieval_probe
from .neural import (
    MLPParams,
    OptimizerState,
    TrainConfig,
    contrastive_pair_loss,
    gradient_check,
    load_mlp,
    mlp_forward,
    modality_weights,
    mse_loss,
    optimizer_step,
    save_mlp,
    train_autoencoder,
    weighted_pair_loss,
)
from .pipeline import (
    PreprocessConfig,
    PreprocessedBundle,
    load_bundle,
    preprocess_cdr,
    save_bundle,
    train_mozart_projection,
)

__version__ = "0.1.0"
