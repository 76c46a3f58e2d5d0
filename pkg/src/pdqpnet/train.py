"""Losses, the reverse sweep through a recorded forward, AdamW and the training loop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import PrimalDualPoint, QpInstance
from .kkt import DEFAULT_EPS, full_residuals, inf_norm, relu
from .net import (MIX_NAMES, STEP_NAMES, DivergedForward, ForwardTrace, NetConfig, NetParams,
                  forward, init_params)
from .solver import StepSchedule, make_schedule
from .sparse import DimensionError, spmv, spmv_transpose

UNSUPERVISED = "unsupervised"
SUPERVISED = "supervised"


class TrainingDiverged(RuntimeError):
    def __init__(self, step, why="non-finite loss"):
        super().__init__(f"{why} at step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# losses


@dataclass
class LossValue:
    total: float
    components: dict
    grad_x: np.ndarray | None = None
    grad_y: np.ndarray | None = None
    denominators: tuple | None = None


def _unit(size, i, val):
    e = np.zeros(size)
    e[i] = val
    return e


def unsupervised_loss(inst: QpInstance, point: PrimalDualPoint, eps: float = DEFAULT_EPS,
                      denominators: tuple | None = None, zero_tol: float = 1e-12) -> LossValue:
    """Sum of the three normalized KKT residuals with its gradient in (x, y).

    Denominators are constants for differentiation; pass ``denominators`` to
    freeze them at previously computed values. Infinity norms route their
    gradient to the first maximizer. A component at or below ``zero_tol`` is
    treated as sitting on its kink at zero and contributes the zero
    subgradient, so roundoff-level residuals at an optimum do not produce
    O(1) gradients.
    """
    x, y = point.x, point.y
    n, m = inst.n, inst.m
    Ax = spmv(inst.A, x)
    Qx = spmv(inst.Q, x)
    Aty = spmv_transpose(inst.A, y)
    zeta = inst.c - Aty + Qx
    lf, uf = inst.l_finite, inst.u_finite
    ml, mu, mi = inst.mask_l, inst.mask_u, inst.mask_ineq

    if denominators is None:
        den_p = eps + max(inf_norm(inst.b), inf_norm(Ax))
        den_d = eps + max(inf_norm(inst.c), inf_norm(Qx), inf_norm(Aty))
    else:
        den_p, den_d, den_g = denominators

    gx = np.zeros(n)
    gy = np.zeros(m)

    # primal: ||[BV; CV]||_inf
    below = (ml > 0) & (lf - x > 0)
    above = (mu > 0) & (x - uf > 0)
    bv = np.where(below, lf - x, 0.0) + np.where(above, x - uf, 0.0)
    diff = Ax - inst.b
    ineq = mi > 0
    cv = np.where(ineq, relu(-diff), np.abs(diff))
    pv = np.concatenate([bv, cv])
    r_primal = (pv.max() if len(pv) else 0.0) / den_p
    if len(pv) and r_primal > zero_tol:
        i = int(np.argmax(pv))
        if i < n:
            gx[i] += (float(above[i]) - float(below[i])) / den_p
        else:
            j = i - n
            s = (-1.0 if diff[j] < 0 else 0.0) if ineq[j] else float(np.sign(diff[j]))
            gx += spmv_transpose(inst.A, _unit(m, j, s / den_p))

    # dual: ||[RCV; DV]||_inf
    pos, neg = zeta > 0, zeta < 0
    keep = 1.0 - ml * pos - mu * neg
    rcv = zeta * keep
    dv = np.where(ineq & (y < 0), -y, 0.0)
    dvec = np.concatenate([np.abs(rcv), dv])
    r_dual = (dvec.max() if len(dvec) else 0.0) / den_d
    if len(dvec) and r_dual > zero_tol:
        i = int(np.argmax(dvec))
        if i < n:
            gz = _unit(n, i, np.sign(rcv[i]) * keep[i] / den_d)
            gx += spmv_transpose(inst.Q, gz)
            gy -= spmv(inst.A, gz)
        else:
            gy[i - n] -= 1.0 / den_d

    # gap: |c'x - b'y + x'Qx - RCC|
    rc = relu(zeta) * ml + np.minimum(zeta, 0.0) * mu
    rc_pos, rc_neg = rc > 0, rc < 0
    rcc = float(np.sum(lf[rc_pos] * rc[rc_pos]) + np.sum(uf[rc_neg] * rc[rc_neg]))
    xQx = float(x @ Qx)
    cx, by = float(inst.c @ x), float(inst.b @ y)
    P, D = cx + 0.5 * xQx, by - 0.5 * xQx
    num = cx - by + xQx - rcc
    if denominators is None:
        den_g = eps + max(abs(P), abs(D))
    r_gap = abs(num) / den_g
    s = float(np.sign(num)) / den_g
    if r_gap > zero_tol:
        g_rcc = np.where(rc_pos, lf, 0.0) + np.where(rc_neg, uf, 0.0)
        gx += s * (inst.c + Qx + spmv_transpose(inst.Q, x) - spmv_transpose(inst.Q, g_rcc))
        gy += s * (-inst.b + spmv(inst.A, g_rcc))

    comps = {"r_primal": float(r_primal), "r_dual": float(r_dual), "r_gap": float(r_gap)}
    return LossValue(comps["r_primal"] + comps["r_dual"] + comps["r_gap"], comps, gx, gy,
                     (den_p, den_d, den_g))


def supervised_loss(inst: QpInstance, point: PrimalDualPoint, oracle: PrimalDualPoint) -> LossValue:
    """``mean((x - x*)^2) + mean((y - y*)^2)`` with its gradient."""
    dx = point.x - oracle.x
    dy = point.y - oracle.y
    n, m = max(inst.n, 1), max(inst.m, 1)
    mse_x = float(dx @ dx) / n
    mse_y = float(dy @ dy) / m
    return LossValue(mse_x + mse_y, {"mse_x": mse_x, "mse_y": mse_y}, 2.0 * dx / n, 2.0 * dy / m)


# ---------------------------------------------------------------------------
# reverse sweep


@dataclass
class GradientSet:
    tensors: dict

    @classmethod
    def zeros_like(cls, params: NetParams) -> "GradientSet":
        return cls({k: np.zeros_like(v) for k, v in params.tensors.items()})

    def __getitem__(self, key):
        return self.tensors[key]

    def add_(self, other: "GradientSet", scale: float = 1.0) -> "GradientSet":
        for k, v in other.tensors.items():
            self.tensors[k] += scale * v
        return self

    def scaled(self, s: float) -> "GradientSet":
        return GradientSet({k: s * v for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.tensors.values()])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


def _mlp_backward(layers, inp, pre, g_out, grads: dict, name: str):
    hs = [inp] + [np.maximum(z, 0.0) for z in pre[:-1]]
    g = g_out
    for i in reversed(range(len(layers))):
        W, _ = layers[i]
        if i != len(layers) - 1:
            g = g * (pre[i] > 0)
        grads[f"{name}.{i}.weight"] += hs[i].T @ g
        grads[f"{name}.{i}.bias"] += g.sum(axis=0)
        g = g @ W.T
    return g


def backward(trace: ForwardTrace, params: NetParams, inst: QpInstance, grad_x, grad_y) -> GradientSet:
    """Gradient of ``<grad_x, x_out> + <grad_y, y_out>`` with respect to every parameter.

    Projections and ReLUs use the masks stored in ``trace``; the derivative of
    ReLU at 0 is 0.
    """
    grad_x = np.asarray(grad_x, dtype=np.float64)
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if trace is None or trace.x_out is None:
        raise ValueError("backward needs a trace recorded with record=True")
    if grad_x.shape != trace.x_out.shape or grad_y.shape != trace.y_out.shape:
        raise DimensionError("upstream gradient shape does not match the forward outputs")
    cfg = params.config
    out = GradientSet.zeros_like(params)
    g = out.tensors

    gX = _mlp_backward(params.mlp("g_x"), trace.X_final, trace.g_x_pre,
                       (grad_x * trace.mask_out_x)[:, None], g, "g_x")
    gY = _mlp_backward(params.mlp("g_y"), trace.Y_final, trace.g_y_pre,
                       (grad_y * trace.mask_out_y)[:, None], g, "g_y")
    gXb = np.zeros_like(gX)

    for k in reversed(range(cfg.layers)):
        r = trace.layers[k]
        beta, eta, tau, theta = params.steps(k)
        d_beta, d_eta, d_tau, d_theta = params.step_derivs(k)
        W_xbar = params[f"layer{k}.W_xbar"]
        W_y = params[f"layer{k}.W_y"]
        W_theta = params[f"layer{k}.W_theta"]

        # X_bar+ = (1 - beta) X_bar + beta X+
        gXn = gX + beta * gXb
        g_beta = float(np.sum(gXb * (r.X_new - r.X_bar)))
        gXb_prev = (1.0 - beta) * gXb

        # Y+ = Pi_y(Y + tau H),  H = b 1' - (A E) W_theta
        gYpre = gY * r.mask_y
        gY_prev = gYpre.copy()
        g_tau = float(np.sum(gYpre * r.H))
        gH = tau * gYpre
        g[f"layer{k}.W_theta"] -= r.AE.T @ gH
        gE = spmv_transpose(inst.A, -(gH @ W_theta.T))

        # E = theta (X+ - X) + X+
        gXn = gXn + (theta + 1.0) * gE
        gX_prev = -theta * gE
        g_theta = float(np.sum(gE * (r.X_new - r.X)))

        # X+ = Pi_x(X - eta G),  G = (Q X_md) W_xbar + c 1' - (A'Y) W_y
        gXpre = gXn * r.mask_x
        gX_prev += gXpre
        g_eta = -float(np.sum(gXpre * r.G))
        gG = -eta * gXpre
        g[f"layer{k}.W_xbar"] += r.QX_md.T @ gG
        g[f"layer{k}.W_y"] -= r.AtY.T @ gG
        gX_md = spmv_transpose(inst.Q, gG @ W_xbar.T)
        gY_prev += spmv(inst.A, -(gG @ W_y.T))

        # X_md = (1 - beta) X_bar + beta X
        gXb_prev += (1.0 - beta) * gX_md
        gX_prev += beta * gX_md
        g_beta += float(np.sum(gX_md * (r.X - r.X_bar)))

        for s, val, dv in zip(STEP_NAMES, (g_beta, g_eta, g_tau, g_theta),
                              (d_beta, d_eta, d_tau, d_theta)):
            g[f"layer{k}.{s}"] += val * dv
        gX, gY, gXb = gX_prev, gY_prev, gXb_prev

    # X_bar^0 = X^0
    _mlp_backward(params.mlp("f_x"), trace.x0_in, trace.f_x_pre, gX + gXb, g, "f_x")
    _mlp_backward(params.mlp("f_y"), trace.y0_in, trace.f_y_pre, gY, g, "f_y")
    return out


def loss_and_grad(inst: QpInstance, params: NetParams, mode: str = UNSUPERVISED,
                  oracle: PrimalDualPoint | None = None, eps: float = DEFAULT_EPS):
    point, trace = forward(inst, params, record=True)
    if mode == UNSUPERVISED:
        lv = unsupervised_loss(inst, point, eps)
    elif mode == SUPERVISED:
        if oracle is None:
            raise ValueError("supervised loss needs an oracle point")
        lv = supervised_loss(inst, point, oracle)
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    return lv, backward(trace, params, inst, lv.grad_x, lv.grad_y), point


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamW:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: NetParams, grads: GradientSet) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.tensors.items():
            gk = grads.tensors[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            p *= 1.0 - self.lr * self.weight_decay
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gk
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gk * gk
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    max_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    batch: int = 8
    loss_mode: str = UNSUPERVISED
    seed: int = 0
    init_noise: float = 0.01
    early_stop_window: int = 50
    early_stop_delta: float = 1e-8

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if self.max_steps < 1 or self.batch < 1:
            raise ValueError("max_steps and batch must be >= 1")
        if self.loss_mode not in (UNSUPERVISED, SUPERVISED):
            raise ValueError(f"loss_mode must be {UNSUPERVISED!r} or {SUPERVISED!r}")


@dataclass
class HistoryRow:
    step: int
    total: float
    r_primal: float
    r_dual: float
    r_gap: float


HISTORY_HEADER = ("step", "total", "r_primal", "r_dual", "r_gap")


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for h in history:
        w.writerow([h.step] + [f"{v:.17g}" for v in (h.total, h.r_primal, h.r_dual, h.r_gap)])
    return buf.getvalue()


def reference_schedule(instances, restart_len: int, norm_iters: int = 100) -> StepSchedule:
    """Median ``||Q||`` and ``||A||`` over a training set."""
    scheds = [make_schedule(inst, restart_len, norm_iters) for inst in instances]
    return StepSchedule(float(np.median([s.norm_Q for s in scheds])),
                        float(np.median([s.norm_A for s in scheds])), restart_len)


def train(instances, cfg: TrainConfig, net_cfg: NetConfig, labels=None,
          init: NetParams | None = None, log_every: int = 0, logger=None):
    """Mini-batch training; returns ``(params, history)``.

    ``labels`` (one oracle point per instance) is required in supervised mode.
    The history records, per step, the batch-mean training loss and the
    batch-mean normalized KKT residuals of the predictions.
    """
    instances = list(instances)
    if not instances:
        raise ValueError("need at least one training instance")
    if cfg.loss_mode == SUPERVISED and (labels is None or len(labels) != len(instances)):
        raise ValueError("supervised training needs one label per instance")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        init = init_params(net_cfg, reference_schedule(instances, net_cfg.layers), cfg.seed, cfg.init_noise)
    params = init.copy()
    opt = AdamW(cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.adam_eps)
    history = []
    order = np.array([], dtype=np.int64)
    losses = []
    W = cfg.early_stop_window
    for step in range(cfg.max_steps):
        if len(order) < cfg.batch:
            order = np.concatenate([order, rng.permutation(len(instances))])
        batch, order = order[:cfg.batch], order[cfg.batch:]

        grads = GradientSet.zeros_like(params)
        tot = 0.0
        comp = np.zeros(3)
        for idx in batch:
            inst = instances[idx]
            try:
                lv, gs, point = loss_and_grad(inst, params, cfg.loss_mode,
                                              labels[idx] if labels is not None else None)
            except DivergedForward as exc:
                raise TrainingDiverged(step, str(exc)) from exc
            grads.add_(gs)
            tot += lv.total
            if cfg.loss_mode == UNSUPERVISED:
                comp += [lv.components["r_primal"], lv.components["r_dual"], lv.components["r_gap"]]
            else:
                res = full_residuals(inst, point)
                comp += [res.r_primal_hat, res.r_dual_hat, res.r_gap_hat]
        nb = len(batch)
        tot /= nb
        comp /= nb
        if not math.isfinite(tot) or not grads.all_finite():
            raise TrainingDiverged(step)
        opt.step(params, grads.scaled(1.0 / nb))
        history.append(HistoryRow(step, tot, *map(float, comp)))
        losses.append(tot)
        if log_every and logger and step % log_every == 0:
            logger(f"step {step}: loss {tot:.6g}")
        if len(losses) >= 2 * W:
            prev = float(np.mean(losses[-2 * W:-W]))
            cur = float(np.mean(losses[-W:]))
            if prev - cur < cfg.early_stop_delta and cfg.lr > 0:
                break
    return params, history


# ---------------------------------------------------------------------------
# gradient verification


def _mode_loss(inst, params, mode, oracle, denominators):
    point, _ = forward(inst, params)
    if mode == UNSUPERVISED:
        return unsupervised_loss(inst, point, denominators=denominators).total
    return supervised_loss(inst, point, oracle).total


def gradcheck(net_cfg: NetConfig, inst: QpInstance, seed: int = 0, h: float = 1e-5,
              num_coords: int = 20, mode: str = UNSUPERVISED, oracle=None,
              params: NetParams | None = None, noise: float = 0.1) -> float:
    """Max relative error between backward and central differences.

    Coordinates are sampled uniformly from the flattened parameters. When
    ``params`` is omitted a noisy initialisation with jittered biases is used. Loss
    denominators are frozen at the unperturbed point, matching the constants
    used by the analytic gradient. Relative errors use
    ``max(|analytic|, |numeric|, 1e-4 max(1, |L|))`` as the denominator.
    """
    rng = np.random.default_rng(seed)
    if params is None:
        params = init_params(net_cfg, make_schedule(inst, net_cfg.layers), seed, noise)
        # zero inputs and clipped duals put bias-only pre-activations exactly on
        # the ReLU kink; jitter the biases so differences stay on one side
        for k, v in params.tensors.items():
            if k.endswith(".bias"):
                v += noise * rng.standard_normal(v.shape)
    point, trace = forward(inst, params, record=True)
    if mode == UNSUPERVISED:
        lv = unsupervised_loss(inst, point)
        dens = lv.denominators
    else:
        lv = supervised_loss(inst, point, oracle)
        dens = None
    analytic = backward(trace, params, inst, lv.grad_x, lv.grad_y)
    # central differences cannot resolve gradients much below eps_mach |L| / h
    floor = 1e-4 * max(1.0, abs(lv.total))

    names = list(params.tensors)
    sizes = np.array([params.tensors[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    picks = rng.choice(offsets[-1], size=min(num_coords, offsets[-1]), replace=False)
    worst = 0.0
    for flat_idx in np.sort(picks):
        t = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        name, local = names[t], int(flat_idx - offsets[t])
        arr = params.tensors[name]
        orig = arr.reshape(-1)[local]
        arr.reshape(-1)[local] = orig + h
        fp = _mode_loss(inst, params, mode, oracle, dens)
        arr.reshape(-1)[local] = orig - h
        fm = _mode_loss(inst, params, mode, oracle, dens)
        arr.reshape(-1)[local] = orig
        fd = (fp - fm) / (2.0 * h)
        an = float(analytic.tensors[name].reshape(-1)[local])
        worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), floor))
    return worst
