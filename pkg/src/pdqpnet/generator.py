"""Random strongly convex QPs with diagonal Q, ``Ax >= b`` rows and box bounds."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .instance import QpInstance, RowKind
from .sparse import SparseMatrix

DIAG_FLOOR = 0.1
_MAX_ROW_REDRAWS = 1000


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    m: int
    density: float = 0.3
    alpha: float = 0.8
    diag_dist: tuple = (4.0, 2.0)
    c_dist: tuple = (3.0, 1.0)
    a_dist: tuple = (2.0, 1.0)
    u_value: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("n and m must be non-negative")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.u_value > 0 or not np.isfinite(self.u_value):
            raise ValueError("u_value must be a positive finite number")
        for name in ("diag_dist", "c_dist", "a_dist"):
            dist = tuple(float(v) for v in getattr(self, name))
            if len(dist) != 2 or dist[1] < 0:
                raise ValueError(f"{name} must be a (mean, stddev) pair with stddev >= 0")
            object.__setattr__(self, name, dist)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("diag_dist", "c_dist", "a_dist"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


# Table-6 size presets; all share the default distributions.
PRESETS = {
    "syn-small": dict(n=1000, m=1000, density=0.3, alpha=0.8),
    "syn-mid": dict(n=5000, m=5000, density=0.1, alpha=0.8),
    "syn-large": dict(n=5000, m=20000, density=0.05, alpha=0.99),
}


def generate_synthetic(cfg: GeneratorConfig, name: str = "") -> QpInstance:
    """Draw one instance.

    ``b_i = alpha * a_i'u`` so ``x = u`` is feasible whenever ``a_i'u >= 0``;
    a row with ``a_i'u < 0`` is redrawn.
    """
    rng = np.random.default_rng(cfg.seed)
    n, m = cfg.n, cfg.m
    u = np.full(n, float(cfg.u_value))

    diag = np.maximum(rng.normal(cfg.diag_dist[0], cfg.diag_dist[1], size=n), DIAG_FLOOR)
    c = rng.normal(cfg.c_dist[0], cfg.c_dist[1], size=n)

    offsets = np.zeros(m + 1, dtype=np.int64)
    cols, vals = [], []
    b = np.empty(m)
    for i in range(m):
        for _ in range(_MAX_ROW_REDRAWS):
            idx = np.flatnonzero(rng.random(n) < cfg.density)
            v = rng.normal(cfg.a_dist[0], cfg.a_dist[1], size=len(idx))
            au = float(v @ u[idx])
            if au >= 0.0:
                break
        else:
            raise RuntimeError(f"row {i}: could not draw a row with a_i'u >= 0")
        cols.append(idx)
        vals.append(v)
        offsets[i + 1] = offsets[i] + len(idx)
        b[i] = cfg.alpha * au

    A = SparseMatrix(m, n, offsets,
                     np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
                     np.concatenate(vals) if vals else np.zeros(0))
    return QpInstance(
        Q=SparseMatrix.diag(diag), c=c, A=A, b=b,
        l=np.zeros(n), u=u, row_kind=(RowKind.INEQUALITY_GEQ,) * m,
        name=name or f"syn-n{n}-m{m}-s{cfg.seed}",
    )
