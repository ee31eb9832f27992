"""hops: few-shot partial-label learning over frozen embeddings.

Candidate label sets are disambiguated from two sides: a local neighbor
consensus filter over the feature affinity graph and a global entropic
optimal-transport planner over each training batch. The two selected labels
jointly supervise a lightweight cosine-softmax prompt head.
"""
from ._kernels import BACKEND
from .corruption import (
    CorruptionConfig,
    apply_long_tail,
    apply_missing_gt,
    class_prototypes,
    confusion_rate,
    corrupt_bundle,
    corrupt_insd,
    corrupt_rand,
    realized_confusion_rate,
)
from .data import (
    CandidateMatrix,
    DatasetBundle,
    EmbeddingSet,
    cosine_affinity,
    normalize_rows,
    sample_few_shot,
    synth_gaussian_mixture,
)
from .hopsfile import load_bundle, save_bundle
from .local_filter import (
    CountVector,
    LdfConfig,
    NeighborIndex,
    label_frequency,
    multiset_counts,
    refine_candidates,
    select_local,
    select_local_instance,
    topk_neighbors,
)
from .prompt import (
    LossValue,
    ProbBatch,
    ProbVector,
    PromptParams,
    baseline_loss,
    candidate_ce,
    class_embedding,
    hops_loss,
    predict_batch,
    predict_probs,
)
from .train import (
    MetricsLog,
    TrainConfig,
    evaluate,
    identification_metrics,
    learning_rate,
    run_repeated,
    train,
)
from .transport import (
    CostMatrix,
    Marginals,
    SinkhornConfig,
    TransportPlan,
    batch_marginals,
    brute_force_entropic,
    cost_matrix,
    entropic_objective,
    gibbs_kernel,
    naive_plan,
    select_global,
    sinkhorn,
)

__version__ = "0.1.0"
