"""Reward estimation for an attention-switching lane keeping model."""

from ._core import (
    Config,
    ConfigError,
    Dataset,
    DimensionError,
    DomainError,
    d_histogram,
    estimate,
    fit_dpe,
    kl_discrete,
    kl_gaussian,
    kl_gaussian_temporal,
    read_dataset,
    reference_theta,
    reward_rd,
    run_e1,
    simulate,
)

__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "DimensionError",
    "DomainError",
    "d_histogram",
    "estimate",
    "fit_dpe",
    "kl_discrete",
    "kl_gaussian",
    "kl_gaussian_temporal",
    "read_dataset",
    "reference_theta",
    "reward_rd",
    "run_e1",
    "simulate",
]
