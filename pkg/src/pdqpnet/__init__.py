"""Learned primal-dual solvers for convex quadratic programs."""

from .instance import PrimalDualPoint, QpInstance, RowKind, make_instance
from .sparse import SparseMatrix, spmv, spmv_transpose

__version__ = "0.1.0"

__all__ = ["PrimalDualPoint", "QpInstance", "RowKind", "SparseMatrix", "make_instance",
           "spmv", "spmv_transpose", "__version__"]
