"""
Majorization-minimization solvers.

Generic MM and Block-MM drivers, nonconvex sparse least squares,
nonnegative least squares, sparse-plus-low-rank matrix completion and
dictionary learning.
"""

from .generic import (BlockRule, ChainRecord, MMConfig, MMResult,
                      block_mm_minimize, check_chain, mm_minimize)
from .lowrank import (DictConstraint, DictResult, MatCompResult, MatCompState,
                      dict_update_exact_frobenius, dictionary_learning_mm,
                      dl_objective, matcomp_block_mm, matcomp_l_update,
                      matcomp_s_update, singular_value_threshold,
                      weighted_sv_objective)
from .sparse import nnls_mm, sparse_ls_mm, sparse_ls_objective

__all__ = [
    "BlockRule", "ChainRecord", "MMConfig", "MMResult", "block_mm_minimize",
    "check_chain", "mm_minimize", "DictConstraint", "DictResult",
    "MatCompResult", "MatCompState", "dict_update_exact_frobenius",
    "dictionary_learning_mm", "dl_objective", "matcomp_block_mm",
    "matcomp_l_update", "matcomp_s_update", "singular_value_threshold",
    "weighted_sv_objective", "nnls_mm", "sparse_ls_mm", "sparse_ls_objective",
]
