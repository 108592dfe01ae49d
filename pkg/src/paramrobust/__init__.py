"""Parameter robustness of small neural classifiers.

Checks and estimates how far a network's confidence and labels can move
when every parameter is perturbed within an infinity-norm ball, using an
interval branch-and-prune solver with certified answers.
"""
from .encoder import (
    OptProblem,
    QueryKind,
    RobustnessQuery,
    encode,
    encode_global_eps,
    encode_global_flip,
    encode_local_eps,
    encode_local_flip,
    encode_sigma_flip,
)
from .estimator import NetworkClassifier, ParameterRobustness
from .expr import Atom, Formula, Var, evaluate, network_to_expr
from .interval import Box, Interval
from .network import Activation, Layer, Network, ParamVector, classify, flatten, forward, interval_forward, perturb_box, unflatten
from .optimizer import Estimate, OptResult, estimate_eps_global, estimate_eps_local, estimate_sigma, minimize
from .quantization import QuantReport, QuantScheme, derive_delta, quantize, safe_bits_search, verify_quantized
from .solver import DeltaSat, SolverConfig, Unknown, Unsat, check_point, contract, decide

__version__ = "0.1.0"

__all__ = [
    "Activation", "Atom", "Box", "DeltaSat", "Estimate", "Formula", "Interval", "Layer", "Network",
    "NetworkClassifier", "OptProblem", "OptResult", "ParamVector", "ParameterRobustness", "QuantReport",
    "QuantScheme", "QueryKind", "RobustnessQuery", "SolverConfig", "Unknown", "Unsat", "Var", "check_point",
    "classify", "contract", "decide", "derive_delta", "encode", "encode_global_eps", "encode_global_flip",
    "encode_local_eps", "encode_local_flip", "encode_sigma_flip", "estimate_eps_global", "estimate_eps_local",
    "estimate_sigma", "evaluate", "flatten", "forward", "interval_forward", "minimize", "network_to_expr",
    "perturb_box", "quantize", "safe_bits_search", "unflatten", "verify_quantized",
]
