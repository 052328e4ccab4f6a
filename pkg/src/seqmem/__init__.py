"""Sequence associative memory networks and their capacity experiments."""

from .patterns import (
    PatternDistribution,
    PatternSet,
    StateVector,
    generate_patterns,
    load_patterns,
    mismatch_count,
    overlap,
    overlap_all,
    overlap_matrix,
    save_patterns,
)
from .rules import (
    InteractionFunction,
    RuleConfig,
    TemporalKernel,
    Trajectory,
    TwoLayerWeights,
    build_two_layer,
    densenet_update,
    gpi_update,
    hopfield_update,
    make_pinv,
    mixednet_update,
    run_sequence,
    seqnet_update,
    two_layer_update,
)
from .harness import (
    CapacityEstimate,
    CapacityProtocolConfig,
    CrosstalkStats,
    bias_sweep,
    dwell_analysis,
    estimate_sequence_capacity,
    estimate_transition_capacity,
    sample_crosstalk,
)
from . import datasets, numerics, theory

__version__ = "0.1.0"

__all__ = [
    "PatternDistribution", "PatternSet", "StateVector", "generate_patterns",
    "load_patterns", "mismatch_count", "overlap", "overlap_all",
    "overlap_matrix", "save_patterns",
    "InteractionFunction", "RuleConfig", "TemporalKernel", "Trajectory",
    "TwoLayerWeights", "build_two_layer", "densenet_update", "gpi_update",
    "hopfield_update", "make_pinv", "mixednet_update", "run_sequence",
    "seqnet_update", "two_layer_update",
    "CapacityEstimate", "CapacityProtocolConfig", "CrosstalkStats",
    "bias_sweep", "dwell_analysis", "estimate_sequence_capacity",
    "estimate_transition_capacity", "sample_crosstalk",
    "datasets", "numerics", "theory",
    "__version__",
]
