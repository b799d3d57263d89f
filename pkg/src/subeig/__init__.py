"""Sparse symmetric eigensolvers by subspace projection: Rayleigh-Ritz
with computable energy-norm error bounds, inverse power iteration on an
enriched subspace, and geometric/algebraic multigrid coarse-space backends."""

from .core import (
    Basis,
    DenseEigResult,
    SparseSymMatrix,
    cg_solve,
    dense_sym_eig,
    dense_sym_eigvals,
    inner,
    norm,
    orthonormalize,
    spmv,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DegenerateGapError,
    DimensionMismatchError,
    EmptyBasisError,
    MetricMismatchError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    StagnationError,
    SubeigError,
)
from .inverse_power import (
    IpmConfig,
    IterationRecord,
    IterationReport,
    energy_error,
    ipm_block_step,
    ipm_run,
    ipm_single_step,
    seeded_start,
    theoretical_rate_block,
    theoretical_rate_single,
)
from .projection import (
    BoundReport,
    EtaOracle,
    ExactEigenSet,
    RitzSet,
    energy_bound_block,
    energy_bound_single,
    eta_K_oracle,
    exact_eigenset,
    gap_delta,
    gap_delta_block,
    project,
    rayleigh_quotient,
    ritz,
    spectral_projection,
    strang_residual,
    to_metric,
)

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "BoundReport",
    "ConfigError",
    "ConvergenceError",
    "DegenerateGapError",
    "DenseEigResult",
    "DimensionMismatchError",
    "EmptyBasisError",
    "EtaOracle",
    "ExactEigenSet",
    "IpmConfig",
    "IterationRecord",
    "IterationReport",
    "MetricMismatchError",
    "NotPositiveDefiniteError",
    "NotSymmetricError",
    "RitzSet",
    "SparseSymMatrix",
    "StagnationError",
    "SubeigError",
    "cg_solve",
    "dense_sym_eig",
    "dense_sym_eigvals",
    "energy_bound_block",
    "energy_bound_single",
    "energy_error",
    "eta_K_oracle",
    "exact_eigenset",
    "gap_delta",
    "gap_delta_block",
    "inner",
    "ipm_block_step",
    "ipm_run",
    "ipm_single_step",
    "norm",
    "orthonormalize",
    "project",
    "rayleigh_quotient",
    "ritz",
    "seeded_start",
    "spectral_projection",
    "spmv",
    "strang_residual",
    "theoretical_rate_block",
    "theoretical_rate_single",
    "to_metric",
]
