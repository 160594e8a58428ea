"""Exact stationary sampling for finite positive-recurrent Markov chains.

The sampler couples every dominated target state beneath a stationary
paused-queue process run backward in time; certificates for the drift
hypotheses are computed numerically for the concrete kernel.  See
README.md for the pipeline and the CLI.

Hot kernels run on a compiled extension when available; set
``DOMCFTP_PURE=1`` to force the pure-Python lane.
"""

from ._kernels import available_backends, get_backend
from .chains import ChainSpec, build_poly_rw, build_regen_chain, exact_stationary
from .coupling import MinorizationCert, compute_minorization, find_small_order
from .drift import (
    DriftCertificate,
    TamingParams,
    certify_chain,
    certify_subsampled_drift,
    certify_weak_drift,
    compute_h_star,
    select_beta_star,
    taming_F,
    validate_rate_condition,
)
from .dominating import QueueParams, lindley_forward, reversed_step, sigma_root
from .engine import (
    PerfectSample,
    RandomnessLedger,
    SamplerWorkspace,
    run_perfect_sample,
)

__version__ = "0.1.0"


def backend() -> str:
    """Name of the active kernel lane ('compiled' or 'pure')."""
    return get_backend().backend_name()


__all__ = [
    "ChainSpec",
    "DriftCertificate",
    "MinorizationCert",
    "PerfectSample",
    "QueueParams",
    "RandomnessLedger",
    "SamplerWorkspace",
    "TamingParams",
    "available_backends",
    "backend",
    "build_poly_rw",
    "build_regen_chain",
    "certify_chain",
    "certify_subsampled_drift",
    "certify_weak_drift",
    "compute_h_star",
    "compute_minorization",
    "exact_stationary",
    "find_small_order",
    "lindley_forward",
    "reversed_step",
    "run_perfect_sample",
    "select_beta_star",
    "sigma_root",
    "taming_F",
    "validate_rate_condition",
]
