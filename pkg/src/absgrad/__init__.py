"""Abs-normal forms and generalized gradients for abs-smooth functions.

Scalar functions whose only nonsmoothness comes from absolute values are
represented as straight-line tapes; the package extracts their
point-local abs-normal data, computes backward-mode gradients under
configurable kink-slope policies, tests the linear independence kink
qualification, enumerates and samples limiting-gradient sets, and builds
the same machinery for dense ReLU training losses.
"""

from .absnormal import (AbsNormalPoint, CapExceededError, definite_successors,
                        extract, precedes, signature)
from .backend import BACKEND
from .gradients import (GradientSet, HullResult, LikqReport, PrecedenceError,
                        beta_coefficients, check_likq, check_rank_stability,
                        grad_sigma, grad_xi, hull_membership,
                        limiting_gradients, switching_jacobian,
                        verify_essential_direction, xi_from_policy)
from .oracle import (DegenerateSamplingError, KinkCrossingError, SamplingPlan,
                     fd_gradient, sample_bouligand)
from .relunet import (BatchContext, Dataset, ReluNetSpec, batch_gradient,
                      build_absnormal, sgd_train, shared_right_inverse,
                      tau_direction)
from .tape import (EvalDomainError, EvalTrace, Node, Tape, TapeError,
                   forward_eval, parse_tape, structural_check)

__version__ = "0.1.0"

__all__ = [
    "AbsNormalPoint", "BACKEND", "BatchContext", "CapExceededError",
    "Dataset", "DegenerateSamplingError", "EvalDomainError", "EvalTrace",
    "GradientSet", "HullResult", "KinkCrossingError", "LikqReport", "Node",
    "PrecedenceError", "ReluNetSpec", "SamplingPlan", "Tape", "TapeError",
    "batch_gradient", "beta_coefficients", "build_absnormal", "check_likq",
    "check_rank_stability", "definite_successors", "extract", "fd_gradient",
    "forward_eval", "grad_sigma", "grad_xi", "hull_membership",
    "limiting_gradients", "parse_tape", "precedes", "sample_bouligand",
    "sgd_train", "shared_right_inverse", "signature", "structural_check",
    "switching_jacobian", "tau_direction", "verify_essential_direction",
    "xi_from_policy",
]
