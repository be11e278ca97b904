"""Bayesian nonparametric models for subject true scores, rater bias and rater reliability."""

__version__ = "0.1.0"

from .core import ChainState, HyperConfig, RatingDataset, ingest_csv  # noqa: E402
from .errors import (  # noqa: E402
    BadParameter,
    IoError,
    NumericalFailure,
    RaterInferError,
    UsageError,
)
from .post import sc_center_draws, summarize, waic  # noqa: E402
from .sampler import ChainDraws, run_chain  # noqa: E402
from .variants import run_oneway_chain, run_ordinal_chain  # noqa: E402

__all__ = [
    "BadParameter",
    "ChainDraws",
    "ChainState",
    "HyperConfig",
    "IoError",
    "NumericalFailure",
    "RaterInferError",
    "RatingDataset",
    "UsageError",
    "ingest_csv",
    "run_chain",
    "run_oneway_chain",
    "run_ordinal_chain",
    "sc_center_draws",
    "summarize",
    "waic",
]
