"""Bayesian belief tracking over a dialogue partner's intentions."""

from ._core import (
    LIKELIHOOD_FLOOR,
    KeywordProvider,
    StomError,
    TabularProvider,
    batch,
    bayes_update,
    clamp_likelihoods,
    classify_regime,
    confidence,
    entropy,
    replay,
    run,
    serialize,
    validate_transcript,
)

__all__ = [
    "LIKELIHOOD_FLOOR",
    "KeywordProvider",
    "StomError",
    "TabularProvider",
    "batch",
    "bayes_update",
    "clamp_likelihoods",
    "classify_regime",
    "confidence",
    "entropy",
    "replay",
    "run",
    "serialize",
    "validate_transcript",
]
