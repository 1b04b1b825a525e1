"""Numerical experiments on subadditive quantities and homogenization of random elliptic operators."""

from ._core import (
    BracketError,
    Error,
    FormatError,
    InvalidInput,
    LocalOperator,
    NonConvergence,
    OutOfWindow,
    PartialFailure,
    StencilError,
    SymMatrix,
    TileEnsemble,
    ValidationError,
    __version__,
    balance_constant,
    effective_from_cell,
    error_rate,
    mu_constant_coeff,
    mu_estimate,
    run,
    run_id,
    selftest,
    subdiff_measure,
    variance_decay,
)
