"""Simulation and limit diagnostics for discrete-time co-evolving latent-space networks."""

from .kernels import (
    EdgeChainLaw,
    KernelSpec,
    b_hat,
    b_s,
    b_s_series,
    bounded_confidence_kernel,
    clsna_kernel,
    constant_kernel,
    edge_chain_law,
    eval_b,
    eval_b0,
    logistic_kernel,
)
from .meanfield import (
    DegenerateDenominator,
    ReferenceMeasure,
    couple,
    generate_limit_network,
    mean_field_sample,
    mf_drift,
    reference_sample,
)
from .particle import InitialLaw, ModelConfig, NoiseSpec, init_state, simulate, step_latent, step_network
from .rng import RngStream

__version__ = "0.1.0"
