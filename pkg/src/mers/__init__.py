"""Replay-buffer exemplar selection by weighted coverage over several embeddings."""

__version__ = "0.1.0"

from .embeddings import (  # noqa: E402
    DistanceMatrix,
    EmbeddingView,
    LabeledPool,
    knn,
    l2_normalize,
    load_embedding,
    pairwise_distances,
    save_embedding,
)
from .scales import (  # noqa: E402
    ScaleProfile,
    beta_ratio,
    delta_from_knn,
    embedding_weight,
    knn_density,
    median_heuristic_sigma,
    memory_aware_k,
)
from .coverage import build_ball_graph, combined_kernel, coverage_value, rbf_kernel_matrix  # noqa: E402
from .selectors import (  # noqa: E402
    SelectionResult,
    brute_force_max_coverage,
    greedy_maxherding_multi,
    greedy_probcover_multi,
    herding_baseline,
    random_baseline,
)
from .pipeline import SelectConfig, select_class, select_pool  # noqa: E402
from .buffer import BufferState, EpisodeBatch, load_buffer, per_class_budget, save_buffer, update_buffer  # noqa: E402
from .metrics import compute_cl_metrics  # noqa: E402
from .synthetic import two_view_classes  # noqa: E402
