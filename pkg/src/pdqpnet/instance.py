"""QP problem data: ``min 1/2 x'Qx + c'x  s.t.  Ax (>= | =) b,  l <= x <= u``."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .sparse import DimensionError, SparseMatrix


class RowKind(enum.Enum):
    EQUALITY = "E"
    INEQUALITY_GEQ = "G"


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QpInstance:
    """Immutable convex QP.

    ``l``/``u`` may contain -inf/+inf. The masks ``mask_l``, ``mask_u`` and
    ``mask_ineq`` are derived in ``__post_init__`` and never set by callers.
    """

    Q: SparseMatrix
    c: np.ndarray
    A: SparseMatrix
    b: np.ndarray
    l: np.ndarray
    u: np.ndarray
    row_kind: tuple
    name: str = ""
    mask_l: np.ndarray = field(init=False, repr=False)
    mask_u: np.ndarray = field(init=False, repr=False)
    mask_ineq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        for key in ("c", "b", "l", "u"):
            set_(key, _frozen(getattr(self, key)))
        kinds = tuple(RowKind(k) if not isinstance(k, RowKind) else k for k in self.row_kind)
        set_("row_kind", kinds)
        n, m = len(self.c), len(self.b)
        if self.Q.shape != (n, n):
            raise DimensionError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if self.A.shape != (m, n):
            raise DimensionError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if len(self.l) != n or len(self.u) != n or len(kinds) != m:
            raise DimensionError("bound / row-kind lengths do not match n, m")
        if not self.Q.is_symmetric():
            raise ValueError("Q must be symmetric")
        if np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)):
            raise ValueError("bounds may not be NaN")
        if np.any(self.l == np.inf) or np.any(self.u == -np.inf):
            raise ValueError("l may not be +inf and u may not be -inf")
        if np.any(self.l > self.u):
            raise ValueError("l must not exceed u")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ValueError("c and b must be finite")
        set_("mask_l", _frozen(np.isfinite(self.l), np.float64))
        set_("mask_u", _frozen(np.isfinite(self.u), np.float64))
        set_("mask_ineq", _frozen([k is RowKind.INEQUALITY_GEQ for k in kinds], np.float64))

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def l_finite(self) -> np.ndarray:
        """Lower bounds with infinite entries replaced by 0 (safe under masks)."""
        return np.where(self.mask_l > 0, self.l, 0.0)

    @property
    def u_finite(self) -> np.ndarray:
        return np.where(self.mask_u > 0, self.u, 0.0)

    def permuted(self, var_perm, row_perm=None) -> "QpInstance":
        """Relabel variables (and optionally rows): new variable i is old ``var_perm[i]``."""
        var_perm = np.asarray(var_perm)
        row_perm = np.arange(self.m) if row_perm is None else np.asarray(row_perm)
        return QpInstance(
            Q=self.Q.permute(var_perm, var_perm),
            c=self.c[var_perm],
            A=self.A.permute(row_perm, var_perm),
            b=self.b[row_perm],
            l=self.l[var_perm],
            u=self.u[var_perm],
            row_kind=tuple(self.row_kind[i] for i in row_perm),
            name=self.name,
        )

    def __eq__(self, other):
        if not isinstance(other, QpInstance):
            return NotImplemented
        return (self.name == other.name and self.Q == other.Q and self.A == other.A
                and self.row_kind == other.row_kind
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("c", "b", "l", "u")))

    __hash__ = None


def make_instance(Q, c, A, b, l=None, u=None, row_kind=None, name="") -> QpInstance:
    """Convenience constructor from dense or sparse pieces.

    Defaults: ``l = 0``, ``u = +inf``, every row ``>=``.
    """
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n, m = len(c), len(b)
    if not isinstance(Q, SparseMatrix):
        Q = SparseMatrix.from_dense(np.asarray(Q, dtype=np.float64).reshape(n, n))
    if not isinstance(A, SparseMatrix):
        A = SparseMatrix.from_dense(np.asarray(A, dtype=np.float64).reshape(m, n)) if m else SparseMatrix.zeros(0, n)
    l = np.zeros(n) if l is None else l
    u = np.full(n, np.inf) if u is None else u
    if row_kind is None:
        row_kind = (RowKind.INEQUALITY_GEQ,) * m
    elif isinstance(row_kind, str):
        row_kind = tuple(row_kind)
    return QpInstance(Q=Q, c=c, A=A, b=b, l=l, u=u, row_kind=row_kind, name=name)


@dataclass(frozen=True, eq=False)
class PrimalDualPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("primal-dual point must be finite")

    def check(self, inst: QpInstance) -> "PrimalDualPoint":
        if len(self.x) != inst.n or len(self.y) != inst.m:
            raise DimensionError(
                f"point has shape ({len(self.x)}, {len(self.y)}), instance needs ({inst.n}, {inst.m})")
        return self

    @classmethod
    def zeros(cls, inst: QpInstance) -> "PrimalDualPoint":
        return cls(np.zeros(inst.n), np.zeros(inst.m))

    def concat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    def __eq__(self, other):
        if not isinstance(other, PrimalDualPoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)

    __hash__ = None
