"""Python bindings for the qkdfl simulator."""

from ._core import (
    AggregationShapeError,
    ConfigError,
    DegenerateSessionError,
    DivergenceError,
    Error,
    InvalidPairError,
    ProtocolError,
    QkdSession,
    UndefinedProxyError,
    aggregate,
    apply_pairwise_masks,
    bits_to_mask,
    derive_pair_key,
    leakage_proxies,
    nmse,
    privacy_amplify,
    qber_of,
    report_leakage,
    run_bb84,
    run_experiment,
    segmentation_scores,
    validate_config,
)

__version__ = "0.1.0"
