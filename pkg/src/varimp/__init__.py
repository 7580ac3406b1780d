"""varimp: direction-dependent stiffness from contact forces, and the
variable-impedance runtime that consumes it."""

from .spd import (
    CholeskyParams,
    EigenPair3,
    NotSpdError,
    Spd3,
    Sym3,
    cholesky_decode,
    cholesky_encode,
    log_euclidean_mean,
    spd_ema,
    spd_exp,
    spd_log,
    sym_eig,
)

__version__ = "0.1.0"
