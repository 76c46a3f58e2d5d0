"""Normalized KKT residuals used for termination, evaluation and the loss.

For a point ``(x, y)`` with reduced cost ``zeta = c - A'y + Qx``:

* primal: bound violation ``BV`` and constraint violation ``CV``, scaled by
  ``eps + max(||b||_inf, ||Ax||_inf)``;
* dual: the part of ``zeta`` no bound multiplier can absorb (``RCV``) and the
  sign violation of inequality duals (``DV``), scaled by
  ``eps + max(||c||_inf, ||Qx||_inf, ||A'y||_inf)``;
* gap: ``|P - D - RCC|`` with ``P = c'x + x'Qx/2``, ``D = b'y - x'Qx/2`` and the
  bound contribution ``RCC``, scaled by ``eps + max(|P|, |D|)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .instance import PrimalDualPoint, QpInstance
from .sparse import spectral_norm_estimate, spmv, spmv_transpose

DEFAULT_EPS = 1e-8


def relu(v):
    return np.maximum(v, 0.0)


def inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if len(v) else 0.0


class PrimalTerms(NamedTuple):
    bv: np.ndarray
    cv: np.ndarray
    r_primal_hat: float


class DualTerms(NamedTuple):
    zeta: np.ndarray
    rcv: np.ndarray
    dv: np.ndarray
    r_dual_hat: float


class GapTerms(NamedTuple):
    P: float
    D: float
    rc: np.ndarray
    rcc: float
    r_gap_hat: float
    gap_abs: float


@dataclass(frozen=True)
class KktResiduals:
    r_primal_hat: float
    r_dual_hat: float
    r_gap_hat: float
    bv: np.ndarray
    cv: np.ndarray
    rcv: np.ndarray
    rc: np.ndarray
    dv: np.ndarray
    rcc: float
    P: float
    D: float
    gap_abs: float
    eps: float

    @property
    def max_hat(self) -> float:
        return max(self.r_primal_hat, self.r_dual_hat, self.r_gap_hat)

    @property
    def total(self) -> float:
        return self.r_primal_hat + self.r_dual_hat + self.r_gap_hat

    def summary(self) -> dict:
        return {"r_primal": self.r_primal_hat, "r_dual": self.r_dual_hat, "r_gap": self.r_gap_hat}


def constraint_violation(inst: QpInstance, Ax) -> np.ndarray:
    """``|Ax - b|`` on equality rows, ``ReLU(b - Ax)`` on ``>=`` rows."""
    diff = Ax - inst.b
    return np.where(inst.mask_ineq > 0, relu(-diff), np.abs(diff))


def bound_violation(inst: QpInstance, x) -> np.ndarray:
    return relu(inst.l_finite - x) * inst.mask_l + relu(x - inst.u_finite) * inst.mask_u


def reduced_cost_violation(inst: QpInstance, zeta) -> np.ndarray:
    return zeta - relu(zeta) * inst.mask_l - np.minimum(zeta, 0.0) * inst.mask_u


def reduced_cost(inst: QpInstance, zeta) -> np.ndarray:
    return relu(zeta) * inst.mask_l + np.minimum(zeta, 0.0) * inst.mask_u


def reduced_cost_contribution(inst: QpInstance, rc) -> float:
    pos = rc > 0
    neg = rc < 0
    return float(np.sum(inst.l_finite[pos] * rc[pos]) + np.sum(inst.u_finite[neg] * rc[neg]))


def primal_residual(inst: QpInstance, point: PrimalDualPoint, eps: float = DEFAULT_EPS) -> PrimalTerms:
    x = point.x
    Ax = spmv(inst.A, x)
    bv = bound_violation(inst, x)
    cv = constraint_violation(inst, Ax)
    num = max(inf_norm(bv), inf_norm(cv))
    return PrimalTerms(bv, cv, num / (eps + max(inf_norm(inst.b), inf_norm(Ax))))


def dual_residual(inst: QpInstance, point: PrimalDualPoint, eps: float = DEFAULT_EPS) -> DualTerms:
    x, y = point.x, point.y
    Qx = spmv(inst.Q, x)
    Aty = spmv_transpose(inst.A, y)
    zeta = inst.c - Aty + Qx
    rcv = reduced_cost_violation(inst, zeta)
    dv = relu(-y) * inst.mask_ineq
    num = max(inf_norm(rcv), inf_norm(dv))
    den = eps + max(inf_norm(inst.c), inf_norm(Qx), inf_norm(Aty))
    return DualTerms(zeta, rcv, dv, num / den)


def gap(inst: QpInstance, point: PrimalDualPoint, eps: float = DEFAULT_EPS) -> GapTerms:
    x, y = point.x, point.y
    Qx = spmv(inst.Q, x)
    zeta = inst.c - spmv_transpose(inst.A, y) + Qx
    xQx = float(x @ Qx)
    cx = float(inst.c @ x)
    by = float(inst.b @ y)
    P = cx + 0.5 * xQx
    D = by - 0.5 * xQx
    rc = reduced_cost(inst, zeta)
    rcc = reduced_cost_contribution(inst, rc)
    gap_abs = abs(cx - by + xQx - rcc)
    return GapTerms(P, D, rc, rcc, gap_abs / (eps + max(abs(P), abs(D))), gap_abs)


def full_residuals(inst: QpInstance, point: PrimalDualPoint, eps: float = DEFAULT_EPS) -> KktResiduals:
    point.check(inst)
    p = primal_residual(inst, point, eps)
    d = dual_residual(inst, point, eps)
    g = gap(inst, point, eps)
    return KktResiduals(
        r_primal_hat=p.r_primal_hat, r_dual_hat=d.r_dual_hat, r_gap_hat=g.r_gap_hat,
        bv=p.bv, cv=p.cv, rcv=d.rcv, rc=g.rc, dv=d.dv, rcc=g.rcc, P=g.P, D=g.D,
        gap_abs=g.gap_abs, eps=eps,
    )


@dataclass(frozen=True)
class GapBound:
    term_quadratic: float
    term_linear_primal: float
    term_dual: float
    term_R: float

    @property
    def bound(self) -> float:
        return self.term_quadratic + self.term_linear_primal + self.term_dual + self.term_R


def gap_upper_bound(inst: QpInstance, point: PrimalDualPoint, oracle: PrimalDualPoint,
                    norm_q: float | None = None, norm_iters: int = 200) -> GapBound:
    """Bound on the unnormalized gap ``|P - D - RCC|`` at ``point`` given an optimum.

    ``||Q||`` is the power-iteration estimate unless ``norm_q`` is supplied;
    all other norms are Euclidean.
    """
    if norm_q is None:
        norm_q = spectral_norm_estimate(inst.Q, norm_iters)
    dx = float(np.linalg.norm(point.x - oracle.x))
    dy = float(np.linalg.norm(point.y - oracle.y))
    R = abs(gap(inst, point).rcc - gap(inst, oracle).rcc)
    return GapBound(norm_q * dx * dx, float(np.linalg.norm(inst.c)) * dx,
                    float(np.linalg.norm(inst.b)) * dy, R)


def cross_term(inst: QpInstance, point: PrimalDualPoint, oracle: PrimalDualPoint) -> float:
    """``2 ||Q x*|| ||x - x*||``, the part of ``x'Qx - x*'Qx*`` the bound above omits.

    Adding it (and the optimum's own residual gap) to ``GapBound.bound`` gives
    an inequality that follows from the triangle inequality.
    """
    return 2.0 * float(np.linalg.norm(spmv(inst.Q, oracle.x))) * float(np.linalg.norm(point.x - oracle.x))


def corrected_gap_bound(inst: QpInstance, point: PrimalDualPoint, oracle: PrimalDualPoint,
                        norm_q: float | None = None, norm_iters: int = 200) -> float:
    return (gap_upper_bound(inst, point, oracle, norm_q, norm_iters).bound
            + cross_term(inst, point, oracle) + gap(inst, oracle).gap_abs)


def project_point(inst: QpInstance, x, y) -> PrimalDualPoint:
    from .solver import project_dual, project_primal
    return PrimalDualPoint(project_primal(x, inst), project_dual(y, inst))


def perturbation_study(inst: QpInstance, oracle: PrimalDualPoint, num_points: int = 200,
                       max_radius: float = 1.0, seed: int = 0, decades: float = 6.0):
    """Sample projected Gaussian perturbations of an optimum.

    Radii are log-spaced over ``decades`` decades ending at ``max_radius``. Each
    sample is ``z* + r * g/||g||`` projected onto the bounds and dual cone.
    Returns a list of ``(distance, gap)`` with the l2 distance taken on the
    concatenated ``(x, y)`` vector and the unnormalized gap ``|P - D - RCC|``.
    """
    rng = np.random.default_rng(seed)
    if max_radius <= 0:
        radii = np.zeros(num_points)
    else:
        radii = np.logspace(np.log10(max_radius) - decades, np.log10(max_radius), num_points)
    z_star = oracle.concat()
    rows = []
    for r in radii:
        g = rng.standard_normal(inst.n + inst.m)
        nrm = np.linalg.norm(g)
        step = r * g / nrm if nrm > 0 else np.zeros_like(g)
        p = project_point(inst, oracle.x + step[:inst.n], oracle.y + step[inst.n:])
        rows.append((float(np.linalg.norm(p.concat() - z_star)), gap(inst, p).gap_abs))
    return rows


def perturbation_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distance", "gap"])
    for d, g in rows:
        w.writerow([f"{d:.17g}", f"{g:.17g}"])
    return buf.getvalue()
