"""Restarted accelerated primal-dual hybrid gradient for convex QP (PDQP).

One inner step, with schedule values ``(beta, theta, eta, tau)`` for index k::

    x_md   = (1 - beta) x_bar + beta x
    x+     = proj_[l,u](x - eta (Q x_md + c - A'y))
    y+     = proj_dual(y + tau (b - A (theta (x+ - x) + x+)))
    x_bar+ = (1 - beta) x_bar + beta x+

Every ``restart_len`` inner steps the iteration restarts from ``(x_bar, y)``
with k reset to 0.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .instance import PrimalDualPoint, QpInstance
from .kkt import KktResiduals, full_residuals
from .sparse import spectral_norm_estimate, spmv, spmv_transpose


class DivergedError(RuntimeError):
    def __init__(self, k, msg="non-finite iterate"):
        super().__init__(f"{msg} at step {k}")
        self.k = k


class Termination(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"


# ---------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class StepSchedule:
    norm_Q: float
    norm_A: float
    restart_len: int

    def __post_init__(self):
        if not self.norm_Q >= 0:
            raise ValueError("norm_Q must be >= 0")
        if not self.norm_A > 0:
            raise ValueError("norm_A must be > 0")
        if self.restart_len < 1:
            raise ValueError("restart_len must be >= 1")


def default_restart_len(norm_Q: float, norm_A: float) -> int:
    return max(1, math.ceil(64.0 * max(norm_Q, norm_A) / norm_A))


def make_schedule(inst: QpInstance, restart_len: int | None = None, norm_iters: int = 100,
                  seed: int = 0) -> StepSchedule:
    """Estimate ``||Q||`` and ``||A||`` and build the schedule.

    When A has no nonzero entry the dual step is irrelevant; ``max(||Q||, 1)``
    stands in for ``||A||`` so the primal step stays well defined.
    """
    norm_Q = spectral_norm_estimate(inst.Q, norm_iters, seed)
    norm_A = spectral_norm_estimate(inst.A, norm_iters, seed) if inst.m else 0.0
    if norm_A == 0.0:
        norm_A = max(norm_Q, 1.0)
    if restart_len is None:
        restart_len = default_restart_len(norm_Q, norm_A)
    return StepSchedule(norm_Q, norm_A, restart_len)


def schedule_at(s: StepSchedule, k: int):
    """``(beta, theta, eta, tau)`` for inner index ``k``.

    ``beta = 2/(k+2)`` keeps ``x_md`` a convex combination.
    """
    K = s.restart_len
    beta = 2.0 / (k + 2.0)
    theta = k / (k + 1.0)
    eta = (k + 1.0) / (2.0 * (s.norm_Q + K * s.norm_A))
    tau = (k + 1.0) / (2.0 * K * s.norm_A)
    return beta, theta, eta, tau


# ---------------------------------------------------------------------------
# projections (shared with the network; accept vectors or n-by-d arrays)


def _col(v, like):
    return v if like.ndim == 1 else v[:, None]


def primal_projection_masks(x, inst: QpInstance):
    """Masks of entries clipped at the upper and at the lower bound.

    ``x - I_u ReLU(x - u)`` clips from above, then ``+ I_l ReLU(l - .)`` from
    below; ReLU is taken as strictly positive so values on a bound pass through.
    """
    u = _col(inst.u_finite, x)
    l = _col(inst.l_finite, x)
    hit_u = (_col(inst.mask_u, x) > 0) & (x > u)
    after_u = np.where(hit_u, u, x)
    hit_l = (_col(inst.mask_l, x) > 0) & (after_u < l)
    return hit_u, hit_l


def project_primal(x, inst: QpInstance, return_mask: bool = False):
    """Clamp to ``[l, u]`` with infinite sides passed through.

    Evaluates ``x + I_l ReLU(l - (x - I_u ReLU(x - u)))`` branch by branch, so
    ``x - (x - u)`` is replaced by ``u`` exactly. With ``return_mask`` also
    returns the boolean mask of entries that passed through unchanged (the
    derivative of the projection).
    """
    x = np.asarray(x, dtype=np.float64)
    hit_u, hit_l = primal_projection_masks(x, inst)
    out = np.where(hit_u, _col(inst.u_finite, x), x)
    out = np.where(hit_l, _col(inst.l_finite, x), out)
    if return_mask:
        return out, ~(hit_u | hit_l)
    return out


def project_dual(y, inst: QpInstance, return_mask: bool = False):
    """``y + I_y ReLU(-y)``: inequality duals clipped at 0, equality duals free."""
    y = np.asarray(y, dtype=np.float64)
    hit = (_col(inst.mask_ineq, y) > 0) & (y < 0)
    out = np.where(hit, 0.0, y)
    if return_mask:
        return out, ~hit
    return out


# ---------------------------------------------------------------------------
# iteration


@dataclass
class SolverState:
    x: np.ndarray
    x_bar: np.ndarray
    y: np.ndarray
    inner_k: int = 0
    outer_n: int = 0
    # scratch buffers reused across steps
    _qx: np.ndarray = field(default=None, repr=False)
    _aty: np.ndarray = field(default=None, repr=False)
    _ae: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._qx = np.empty_like(self.x)
        self._aty = np.empty_like(self.x)
        self._ae = np.empty_like(self.y)

    @classmethod
    def initial(cls, inst: QpInstance, warm_start: PrimalDualPoint | None = None) -> "SolverState":
        if warm_start is None:
            x, y = np.zeros(inst.n), np.zeros(inst.m)
        else:
            warm_start.check(inst)
            x = project_primal(warm_start.x, inst)
            y = project_dual(warm_start.y, inst)
        return cls(x=x.copy(), x_bar=x.copy(), y=y.copy())

    def point(self) -> PrimalDualPoint:
        return PrimalDualPoint(self.x, self.y)


def inner_step(state: SolverState, inst: QpInstance, schedule: StepSchedule, k: int) -> SolverState:
    """Apply one PDQP iteration in place with schedule index ``k``."""
    beta, theta, eta, tau = schedule_at(schedule, k)
    x, x_bar, y = state.x, state.x_bar, state.y

    x_md = (1.0 - beta) * x_bar + beta * x
    grad = (spmv(inst.Q, x_md, out=state._qx) + inst.c) - spmv_transpose(inst.A, y, out=state._aty)
    x_new = project_primal(x - eta * grad, inst)
    extrap = theta * (x_new - x) + x_new
    y_new = project_dual(y + tau * (inst.b - spmv(inst.A, extrap, out=state._ae)), inst)
    x_bar_new = (1.0 - beta) * x_bar + beta * x_new

    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(y_new))):
        raise DivergedError(k)
    state.x[:] = x_new
    state.y[:] = y_new
    state.x_bar[:] = x_bar_new
    state.inner_k = k + 1
    return state


def restart(state: SolverState) -> SolverState:
    state.x[:] = state.x_bar
    state.inner_k = 0
    state.outer_n += 1
    return state


def run_inner(inst: QpInstance, schedule: StepSchedule, steps: int,
              warm_start: PrimalDualPoint | None = None):
    """Iterates ``(x^k, x_bar^k, y^k)`` for k = 0..steps without restarting."""
    if steps > schedule.restart_len:
        raise ValueError("steps exceeds the restart length of the schedule")
    state = SolverState.initial(inst, warm_start)
    trace = [(state.x.copy(), state.x_bar.copy(), state.y.copy())]
    for k in range(steps):
        inner_step(state, inst, schedule, k)
        trace.append((state.x.copy(), state.x_bar.copy(), state.y.copy()))
    return trace


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class SolverConfig:
    restart_len: int | None = None
    max_outer: int = 1000
    tol: float = 1e-6
    warm_start: PrimalDualPoint | None = None
    norm_iters: int = 100
    check_every: int = 16
    seed: int = 0
    record_restarts: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.restart_len is not None and self.restart_len < 1:
            raise ValueError("restart_len must be >= 1")
        if self.max_outer < 1 or self.check_every < 1:
            raise ValueError("max_outer and check_every must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    point: PrimalDualPoint
    iterations: int
    outer_restarts: int
    wall_seconds: float
    termination: Termination
    final_residuals: KktResiduals
    restart_points: tuple = ()

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def to_dict(self) -> dict:
        r = self.final_residuals
        return {
            "termination": self.termination.value,
            "iterations": self.iterations,
            "outer_restarts": self.outer_restarts,
            "wall_seconds": self.wall_seconds,
            "r_primal": r.r_primal_hat,
            "r_dual": r.r_dual_hat,
            "r_gap": r.r_gap_hat,
            "x": [float(v) for v in self.point.x],
            "y": [float(v) for v in self.point.y],
        }


def solve(inst: QpInstance, cfg: SolverConfig = SolverConfig(),
          schedule: StepSchedule | None = None) -> SolveReport:
    """Run PDQP until the largest normalized KKT residual is ``<= cfg.tol``.

    Residuals are evaluated at the current iterate before the first step and
    then every ``cfg.check_every`` inner steps.
    """
    t0 = time.perf_counter()
    if schedule is None:
        schedule = make_schedule(inst, cfg.restart_len, cfg.norm_iters, cfg.seed)
    state = SolverState.initial(inst, cfg.warm_start)
    restarts = [state.point()] if cfg.record_restarts else None

    total = 0
    res = full_residuals(inst, state.point())
    termination = Termination.CONVERGED if res.max_hat <= cfg.tol else Termination.MAX_ITER
    outer = 0
    while termination is Termination.MAX_ITER and outer < cfg.max_outer:
        for k in range(schedule.restart_len):
            try:
                inner_step(state, inst, schedule, k)
            except DivergedError as exc:
                raise DivergedError(total, "non-finite iterate") from exc
            total += 1
            if total % cfg.check_every == 0:
                res = full_residuals(inst, state.point())
                if res.max_hat <= cfg.tol:
                    termination = Termination.CONVERGED
                    break
        if termination is Termination.CONVERGED:
            break
        restart(state)
        outer += 1
        if restarts is not None:
            restarts.append(PrimalDualPoint(state.x_bar, state.y))
    if termination is Termination.MAX_ITER:
        res = full_residuals(inst, state.point())
    return SolveReport(
        point=state.point(), iterations=total, outer_restarts=outer,
        wall_seconds=time.perf_counter() - t0, termination=termination,
        final_residuals=res, restart_points=tuple(restarts or ()),
    )


def improvement_ratio(base: SolveReport, ours: SolveReport, metric: str = "wall_seconds") -> float:
    """``(base - ours) / base`` for ``metric`` in {"wall_seconds", "iterations"}."""
    if metric not in ("wall_seconds", "iterations"):
        raise ValueError(f"unknown metric {metric!r}")
    b = float(getattr(base, metric))
    o = float(getattr(ours, metric))
    if b == 0.0:
        raise ZeroDivisionError(f"base {metric} is zero; improvement undefined")
    return (b - o) / b
