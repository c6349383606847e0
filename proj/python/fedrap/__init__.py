"""Python bindings for the FedRAP C++ core."""

from ._core import (
    DatasetError,
    DivergenceError,
    ShapeError,
    add_gaussian_noise,
    aggregate,
    bce_loss,
    client_objective,
    clip_gradient,
    evaluate,
    gradients,
    hr_at_k,
    ingest,
    ndcg_at_k,
    noise_sigma,
    predict,
    rank_position,
    recover_gradient,
    schedule_weight,
    sensitivity_bound,
    sgd_step_with_prox,
    sigmoid,
    soft_threshold,
    sparsity_stats,
    train,
)

__version__ = "0.1.0"
