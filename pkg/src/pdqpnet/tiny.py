"""Small random strongly convex QPs with mixed bound types and row kinds."""

from __future__ import annotations

import numpy as np

from .instance import QpInstance, RowKind
from .sparse import SparseMatrix


def random_tiny_instance(seed: int, n: int = 5, m: int = 3, eq_frac: float = 0.25,
                         density: float = 0.7, mu: float = 0.5, name: str = "") -> QpInstance:
    """Feasible instance with ``Q = M M' + mu I`` and bounds drawn per variable.

    Each variable is free, lower-bounded, upper-bounded or boxed with equal
    odds; a point strictly inside the bounds satisfies every row, so the
    problem is feasible and has a unique optimum.
    """
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    Qd = M @ M.T / n + mu * np.eye(n)
    Qd = 0.5 * (Qd + Qd.T)
    c = rng.standard_normal(n) * 2.0

    kind = rng.integers(0, 4, size=n)  # 0 free, 1 lower, 2 upper, 3 box
    lo = -rng.uniform(0.5, 2.0, size=n)
    hi = rng.uniform(0.5, 2.0, size=n)
    l = np.where((kind == 1) | (kind == 3), lo, -np.inf)
    u = np.where((kind == 2) | (kind == 3), hi, np.inf)
    x0 = rng.uniform(0.8 * lo, 0.8 * hi)

    Ad = rng.standard_normal((m, n)) * (rng.random((m, n)) < density)
    for i in range(m):
        if not Ad[i].any():
            Ad[i, rng.integers(n)] = 1.0
    is_eq = rng.random(m) < eq_frac
    slack = rng.uniform(0.0, 1.0, size=m)
    b = Ad @ x0 - np.where(is_eq, 0.0, slack)
    kinds = tuple(RowKind.EQUALITY if e else RowKind.INEQUALITY_GEQ for e in is_eq)
    return QpInstance(Q=SparseMatrix.from_dense(Qd), c=c, A=SparseMatrix.from_dense(Ad), b=b,
                      l=l, u=u, row_kind=kinds, name=name or f"tiny-{seed}")
