"""Distributed matrices and their multiplication scenarios."""

from .core import (
    COL,
    REPL,
    ROW,
    DistMatrix,
    Partition,
    apply_unary,
    broadcast_shape,
    create,
    cumsum,
    diag,
    distribute,
    elementwise,
    fill_diag,
    from_full,
    from_local,
    gather_full,
    inner,
    local_shape,
    norm_fro,
    reduce_sum,
    replicated,
    soft_threshold_array,
)
from .io import read_csv, read_dstm, read_matrix, write_csv, write_dstm, write_matrix
from .matmul import SCENARIOS, matmul, matmul_with_scenario, scenario_of

__all__ = [
    "COL",
    "REPL",
    "ROW",
    "SCENARIOS",
    "DistMatrix",
    "Partition",
    "apply_unary",
    "broadcast_shape",
    "create",
    "cumsum",
    "diag",
    "distribute",
    "elementwise",
    "fill_diag",
    "from_full",
    "from_local",
    "gather_full",
    "inner",
    "local_shape",
    "matmul",
    "matmul_with_scenario",
    "norm_fro",
    "read_csv",
    "read_dstm",
    "read_matrix",
    "reduce_sum",
    "replicated",
    "scenario_of",
    "soft_threshold_array",
    "write_csv",
    "write_dstm",
    "write_matrix",
]
