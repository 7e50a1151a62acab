"""Exact coupling-rectification laboratory on small discrete state spaces.

Everything here is dense and deterministic: couplings between discrete
source and target distributions, the exact and factorized flow transition
kernels they induce, conditional total correlation as the factorization
error measure, and the rectification loop that iterates coupling ->
sampler law -> coupling. Hot kernels run through a compiled extension
when available and a bit-identical pure NumPy twin otherwise; see
``redi.backend``.
"""
from . import backend
from .analysis import (EvalReport, TCReport, conditional_tc_exact,
                       conditional_tc_plugin, eval_generation, generated_law,
                       kl, metrics_csv, tv)
from .core import (AlphaSchedule, DenseDistribution, PairCoupling, State,
                   StateSpace, TimeGrid, alpha_at, coupling_conditional,
                   coupling_marginal, normalize_coupling, normalize_sparse,
                   source_groups, states_to_indices)
from .errors import (CapError, ConfigurationError, DivergenceError,
                     DomainError, EmptyCouplingError, InconsistentBridgeError,
                     OffPathError, RediError, ValidationError, ZeroMassError)
from .fileio import (read_coupling, read_distribution, read_kernel,
                     read_manifest, read_samples, read_trajectories,
                     sha256_file, write_coupling, write_distribution,
                     write_kernel, write_manifest, write_samples,
                     write_trajectories)
from .flow import (DEFAULT_MODE, DenseKernel, FactorizedKernel, PathMode,
                   PosteriorTable, apply_temperature, bridge,
                   exact_multistep_conditional, exact_multistep_joint,
                   exact_transition, factorized_transition, jump_prob,
                   path_support, path_weight, posterior, sample_path_states,
                   sample_sources, sample_step, sample_trajectories,
                   sample_trajectory)
from .rectify import (MONOTONE_TOL, FactorizedFamily, RectifyConfig, RediRun,
                      build_independent, build_masked_source, build_random,
                      build_two_bit_demo, one_step_model, rectify,
                      rectify_exact, rectify_sampled, rectify_with_kernel,
                      redi_iterate, save_run, write_counterexamples)
from .rng import RngSpec, generator, philox_key, uniform_block

__version__ = "0.1.0"

__all__ = [
    "AlphaSchedule", "CapError", "ConfigurationError", "DEFAULT_MODE",
    "DenseDistribution", "DenseKernel", "DivergenceError", "DomainError",
    "EmptyCouplingError", "EvalReport", "FactorizedFamily",
    "FactorizedKernel", "InconsistentBridgeError", "MONOTONE_TOL",
    "OffPathError", "PairCoupling", "PathMode", "PosteriorTable",
    "RectifyConfig", "RediError", "RediRun", "RngSpec", "State",
    "StateSpace", "TCReport", "TimeGrid", "ValidationError", "ZeroMassError",
    "alpha_at", "apply_temperature", "backend", "bridge",
    "build_independent", "build_masked_source", "build_random",
    "build_two_bit_demo", "conditional_tc_exact", "conditional_tc_plugin",
    "coupling_conditional", "coupling_marginal", "eval_generation",
    "exact_multistep_conditional", "exact_multistep_joint",
    "exact_transition", "factorized_transition", "generated_law",
    "generator", "jump_prob", "kl", "metrics_csv", "normalize_coupling",
    "normalize_sparse", "one_step_model", "path_support", "path_weight",
    "philox_key", "posterior", "read_coupling", "read_distribution",
    "read_kernel", "read_manifest", "read_samples", "read_trajectories",
    "rectify", "rectify_exact", "rectify_sampled", "rectify_with_kernel",
    "redi_iterate", "sample_path_states", "sample_sources", "sample_step",
    "sample_trajectories", "sample_trajectory", "save_run", "sha256_file",
    "source_groups", "states_to_indices", "tv", "uniform_block",
    "write_coupling", "write_counterexamples", "write_distribution",
    "write_kernel", "write_manifest", "write_samples", "write_trajectories",
    "__version__",
]
