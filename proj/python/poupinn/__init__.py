"""Partition-of-unity PINN ensembles.

Gated local expert networks on compactly supported quartic bumps, trained by
sparse Levenberg-Marquardt steps alternating with adaptive-sampling ascent on
the partition shape. The heavy lifting lives in the C++ extension `_core`;
this package re-exports its public surface.
"""

from ._core import (
    AdaptiveDensity,
    Ball,
    EnsembleModel,
    MlpSpec,
    ParamBlock,
    Partition,
    PoupinnError,
    ProblemSpec,
    brute_force_pstar,
    burgers_problem,
    burgers_reference,
    closed_form_pstar,
    coverage_check,
    evaluate_checkpoint,
    gate_weights,
    helmholtz_problem,
    helmholtz_reference,
    init_params,
    kl_to_uniform_grid,
    kmeans_init,
    load_checkpoint,
    make_ensemble,
    mlp_bundle,
    mlp_forward,
    relative_l2,
    save_checkpoint,
    set_thread_count,
    supervised_problem,
    train_from_config,
)

__all__ = [
    "AdaptiveDensity",
    "Ball",
    "EnsembleModel",
    "MlpSpec",
    "ParamBlock",
    "Partition",
    "PoupinnError",
    "ProblemSpec",
    "brute_force_pstar",
    "burgers_problem",
    "burgers_reference",
    "closed_form_pstar",
    "coverage_check",
    "evaluate_checkpoint",
    "gate_weights",
    "helmholtz_problem",
    "helmholtz_reference",
    "init_params",
    "kl_to_uniform_grid",
    "kmeans_init",
    "load_checkpoint",
    "make_ensemble",
    "mlp_bundle",
    "mlp_forward",
    "relative_l2",
    "save_checkpoint",
    "set_thread_count",
    "supervised_problem",
    "train_from_config",
]
