"""qcslab: simulation laboratory for quantized corrupted sensing."""

from .ensemble import EnsembleConfig, SensingEnsemble, draw_ensemble, measure, observe, rng_for
from .priors import (
    GenerativeMap,
    GenerativePrior,
    GroundTruthPair,
    LowRankPrior,
    SparsePrior,
)
from .quantizer import QuantizedObservation, Quantizer, dithered_quantize, quantize_scalar
from .solvers import (
    LambdaPair,
    RecoveryResult,
    SolverConfig,
    default_lambdas,
    solve_constrained,
    solve_generative,
    solve_pbp,
    solve_unconstrained,
)

__version__ = "0.1.0"
