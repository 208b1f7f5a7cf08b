# Copyright 2026 The SRA Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""Ridge cleaning of steering directions, rank-one weight edits and a toy transformer testbed."""

from ._core import (
    REFUSE_TOKEN,
    Ruleset,
    SraError,
    ToyModel,
    Weights,
    build_toy_fixture,
    calibrate_gamma_scale,
    cosine,
    default_lambda,
    first_token_kl,
    mean_activation,
    predict_capability_drift,
    rank_one_update,
    read_dump,
    residualize,
    ridge_solve,
    run_pipeline,
    write_dump,
)

__version__ = "0.1.0"

__all__ = [
    "REFUSE_TOKEN",
    "Ruleset",
    "SraError",
    "ToyModel",
    "Weights",
    "build_toy_fixture",
    "calibrate_gamma_scale",
    "cosine",
    "default_lambda",
    "first_token_kl",
    "mean_activation",
    "predict_capability_drift",
    "rank_one_update",
    "read_dump",
    "residualize",
    "ridge_solve",
    "run_pipeline",
    "write_dump",
]
