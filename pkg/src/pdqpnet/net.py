"""PDQP-Net: the solver's inner iteration unrolled into K layers.

Every scalar per node is widened to ``d`` channels. With ``X`` (n x d),
``Y`` (m x d) and per-layer scalars ``beta, eta, tau, theta`` and mixing
matrices ``W_xbar, W_y, W_theta`` (d x d), layer k computes::

    X_md = (1 - beta) X_bar + beta X
    X+   = Pi_x(X - eta (Q X_md W_xbar + c 1' - A'Y W_y))
    Y+   = Pi_y(Y + tau (b 1' - A (theta (X+ - X) + X+) W_theta))
    X_bar+ = (1 - beta) X_bar + beta X+

The projections act column by column. Node-wise MLPs embed the zero start
(``f_x``, ``f_y``: 1 -> d) and read out the final state (``g_x``, ``g_y``:
d -> 1); the readout is projected once more so predictions respect bounds.
Because all weights are shared across nodes the same parameters apply to
instances of any size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance import PrimalDualPoint, QpInstance
from .solver import StepSchedule, project_dual, project_primal, schedule_at
from .sparse import spmv, spmv_transpose

STEP_NAMES = ("beta", "eta", "tau", "theta")
MIX_NAMES = ("W_xbar", "W_y", "W_theta")
MLP_NAMES = ("f_x", "f_y", "g_x", "g_y")
# keeps beta off {0, 1} and theta off 0 when mapping schedule values to raw ones
_STEP_CLIP = 1e-6


class DivergedForward(RuntimeError):
    def __init__(self, layer):
        super().__init__(f"non-finite activation in layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class NetConfig:
    layers: int = 8
    width: int = 16
    mlp_hidden: int = 16
    mlp_depth: int = 2

    def __post_init__(self):
        if self.layers < 1 or self.width < 1:
            raise ValueError("layers and width must be >= 1")
        if self.mlp_depth < 1 or self.mlp_hidden < 1:
            raise ValueError("mlp_depth and mlp_hidden must be >= 1")

    def mlp_dims(self, name):
        d, h = self.width, self.mlp_hidden
        inp, out = (1, d) if name.startswith("f") else (d, 1)
        return [inp] + [h] * (self.mlp_depth - 1) + [out]


def logistic(r):
    return 0.5 * (1.0 + np.tanh(0.5 * r))


def softplus(r):
    return np.logaddexp(0.0, r)


def logit(p):
    return np.log(p) - np.log1p(-p)


def softplus_inv(v):
    return v + np.log(-np.expm1(-v))


def param_names(cfg: NetConfig):
    names = []
    for k in range(cfg.layers):
        names += [f"layer{k}.{s}" for s in STEP_NAMES]
        names += [f"layer{k}.{w}" for w in MIX_NAMES]
    for net in MLP_NAMES:
        for i in range(cfg.mlp_depth):
            names += [f"{net}.{i}.weight", f"{net}.{i}.bias"]
    return names


def param_shapes(cfg: NetConfig) -> dict:
    shapes = {}
    for k in range(cfg.layers):
        for s in STEP_NAMES:
            shapes[f"layer{k}.{s}"] = ()
        for w in MIX_NAMES:
            shapes[f"layer{k}.{w}"] = (cfg.width, cfg.width)
    for net in MLP_NAMES:
        dims = cfg.mlp_dims(net)
        for i in range(cfg.mlp_depth):
            shapes[f"{net}.{i}.weight"] = (dims[i], dims[i + 1])
            shapes[f"{net}.{i}.bias"] = (dims[i + 1],)
    return shapes


@dataclass
class NetParams:
    """Named parameter arrays in a fixed order.

    Step scalars are stored raw and squashed on use (``beta = logistic``,
    ``eta, tau, theta = softplus``) unless ``direct_steps`` is set, in which
    case the stored values are the step sizes themselves.
    """

    config: NetConfig
    tensors: dict
    direct_steps: bool = False

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if list(self.tensors) != list(shapes):
            self.tensors = {k: self.tensors[k] for k in shapes}
        for k, shp in shapes.items():
            arr = np.asarray(self.tensors[k], dtype=np.float64)
            if arr.shape != shp:
                raise ValueError(f"{k}: shape {arr.shape}, expected {shp}")
            self.tensors[k] = arr

    def __getitem__(self, key):
        return self.tensors[key]

    def copy(self) -> "NetParams":
        return NetParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.direct_steps)

    def steps(self, k):
        """Effective ``(beta, eta, tau, theta)`` of layer ``k``."""
        t = self.tensors
        rb, re, rt, rh = (float(t[f"layer{k}.{s}"]) for s in STEP_NAMES)
        if self.direct_steps:
            return rb, re, rt, rh
        return float(logistic(rb)), float(softplus(re)), float(softplus(rt)), float(softplus(rh))

    def step_derivs(self, k):
        """d(effective)/d(raw) for ``(beta, eta, tau, theta)`` of layer ``k``."""
        if self.direct_steps:
            return 1.0, 1.0, 1.0, 1.0
        t = self.tensors
        rb, re, rt, rh = (float(t[f"layer{k}.{s}"]) for s in STEP_NAMES)
        sb = float(logistic(rb))
        return sb * (1.0 - sb), float(logistic(re)), float(logistic(rt)), float(logistic(rh))

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.tensors.values()])

    def num_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def mlp(self, name):
        return [(self.tensors[f"{name}.{i}.weight"], self.tensors[f"{name}.{i}.bias"])
                for i in range(self.config.mlp_depth)]

    def equals(self, other: "NetParams") -> bool:
        return (self.config == other.config and self.direct_steps == other.direct_steps
                and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors))


# ---------------------------------------------------------------------------
# construction


def _schedule_raw(s: StepSchedule, k: int):
    beta, theta, eta, tau = schedule_at(s, k)
    beta = min(max(beta, _STEP_CLIP), 1.0 - _STEP_CLIP)
    theta = max(theta, _STEP_CLIP)
    return logit(beta), softplus_inv(eta), softplus_inv(tau), softplus_inv(theta)


def _identity_mlp(dims, rng, noise, name, tensors):
    """Dense stack that passes channel 0 through (ReLU(v) - ReLU(-v)) plus noise."""
    depth = len(dims) - 1
    for i in range(depth):
        W = noise * rng.standard_normal((dims[i], dims[i + 1])) if noise else np.zeros((dims[i], dims[i + 1]))
        if depth == 1:
            W[0, 0] = 1.0
        elif i == 0:
            W[0, 0], W[0, 1] = 1.0, -1.0
        elif i == depth - 1:
            W[0, 0], W[1, 0] = 1.0, -1.0
        else:
            W[0, 0], W[1, 1] = 1.0, 1.0
        tensors[f"{name}.{i}.weight"] = W
        tensors[f"{name}.{i}.bias"] = np.zeros(dims[i + 1])


def init_params(cfg: NetConfig, schedule: StepSchedule, seed: int = 0, noise: float = 0.01) -> NetParams:
    """Start near the solver: schedule step sizes, ``W = I + noise``, identity-like MLPs.

    ``schedule`` supplies representative ``||Q||``, ``||A||`` and the restart
    length used to evaluate the step-size formulas at each layer index.
    """
    if cfg.mlp_depth > 1 and cfg.mlp_hidden < 2:
        raise ValueError("identity-like initialisation needs mlp_hidden >= 2")
    rng = np.random.default_rng(seed)
    d = cfg.width
    tensors = {}
    for k in range(cfg.layers):
        for s, v in zip(STEP_NAMES, _schedule_raw(schedule, min(k, schedule.restart_len - 1))):
            tensors[f"layer{k}.{s}"] = np.array(v)
        for w in MIX_NAMES:
            tensors[f"layer{k}.{w}"] = np.eye(d) + (noise * rng.standard_normal((d, d)) if noise else 0.0)
    for name in MLP_NAMES:
        _identity_mlp(cfg.mlp_dims(name), rng, noise, name, tensors)
    return NetParams(cfg, tensors)


def alignment_params(inst: QpInstance | None, schedule: StepSchedule, K: int) -> NetParams:
    """Parameters under which a width-1 net reproduces K solver steps exactly.

    Mixing matrices are 1, the MLPs single identity layers, and the layer-k
    step sizes are stored directly (``direct_steps``) as the schedule's values.
    ``inst`` is accepted for symmetry with the solver; the construction only
    depends on the schedule.
    """
    if K > schedule.restart_len:
        raise ValueError("K exceeds the restart length; the solver would restart inside the net")
    cfg = NetConfig(layers=K, width=1, mlp_hidden=1, mlp_depth=1)
    tensors = {}
    for k in range(K):
        beta, theta, eta, tau = schedule_at(schedule, k)
        for s, v in zip(STEP_NAMES, (beta, eta, tau, theta)):
            tensors[f"layer{k}.{s}"] = np.array(v)
        for w in MIX_NAMES:
            tensors[f"layer{k}.{w}"] = np.ones((1, 1))
    for name in MLP_NAMES:
        tensors[f"{name}.0.weight"] = np.ones((1, 1))
        tensors[f"{name}.0.bias"] = np.zeros(1)
    return NetParams(cfg, tensors, direct_steps=True)


def pad_width(params: NetParams, width: int) -> NetParams:
    """Embed ``params`` into a wider net with zero extra channels and mixing rows."""
    cfg = params.config
    if width < cfg.width:
        raise ValueError("can only widen")
    new_cfg = NetConfig(cfg.layers, width, cfg.mlp_hidden, cfg.mlp_depth)
    shapes = param_shapes(new_cfg)
    tensors = {}
    for name, v in params.tensors.items():
        out = np.zeros(shapes[name])
        out[tuple(slice(0, s) for s in v.shape)] = v
        tensors[name] = out
    return NetParams(new_cfg, tensors, params.direct_steps)


# ---------------------------------------------------------------------------
# forward


def mlp_forward(layers, h):
    """Dense stack with ReLU between layers. Returns output and pre-activations."""
    pre = []
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        pre.append(z)
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
    return h, pre


@dataclass
class LayerRecord:
    X: np.ndarray
    X_bar: np.ndarray
    Y: np.ndarray
    X_md: np.ndarray
    QX_md: np.ndarray
    AtY: np.ndarray
    G: np.ndarray
    X_new: np.ndarray
    mask_x: np.ndarray
    E: np.ndarray
    AE: np.ndarray
    H: np.ndarray
    Y_new: np.ndarray
    mask_y: np.ndarray


@dataclass
class ForwardTrace:
    x0_in: np.ndarray
    y0_in: np.ndarray
    f_x_pre: list
    f_y_pre: list
    layers: list = field(default_factory=list)
    X_final: np.ndarray = None
    X_bar_final: np.ndarray = None
    Y_final: np.ndarray = None
    g_x_pre: list = None
    g_y_pre: list = None
    x_raw: np.ndarray = None
    y_raw: np.ndarray = None
    mask_out_x: np.ndarray = None
    mask_out_y: np.ndarray = None
    x_out: np.ndarray = None
    y_out: np.ndarray = None

    def states(self):
        """``(X^k, X_bar^k, Y^k)`` for k = 0..K."""
        out = [(r.X, r.X_bar, r.Y) for r in self.layers]
        out.append((self.X_final, self.X_bar_final, self.Y_final))
        return out


def forward(inst: QpInstance, params: NetParams, record: bool = False):
    """Run the net on ``inst`` from the zero start.

    Returns ``(PrimalDualPoint, ForwardTrace or None)``.
    """
    cfg = params.config
    n, m = inst.n, inst.m
    x0 = np.zeros((n, 1))
    y0 = np.zeros((m, 1))
    X, fx_pre = mlp_forward(params.mlp("f_x"), x0)
    Y, fy_pre = mlp_forward(params.mlp("f_y"), y0)
    X_bar = X
    c_col = inst.c[:, None]
    b_col = inst.b[:, None]
    trace = ForwardTrace(x0, y0, fx_pre, fy_pre) if record else None

    for k in range(cfg.layers):
        beta, eta, tau, theta = params.steps(k)
        W_xbar = params[f"layer{k}.W_xbar"]
        W_y = params[f"layer{k}.W_y"]
        W_theta = params[f"layer{k}.W_theta"]

        X_md = (1.0 - beta) * X_bar + beta * X
        QX_md = spmv(inst.Q, X_md)
        AtY = spmv_transpose(inst.A, Y)
        G = (QX_md @ W_xbar + c_col) - AtY @ W_y
        X_new, mask_x = project_primal(X - eta * G, inst, return_mask=True)
        E = theta * (X_new - X) + X_new
        AE = spmv(inst.A, E)
        H = b_col - AE @ W_theta
        Y_new, mask_y = project_dual(Y + tau * H, inst, return_mask=True)
        X_bar_new = (1.0 - beta) * X_bar + beta * X_new

        if not (np.all(np.isfinite(X_new)) and np.all(np.isfinite(Y_new))):
            raise DivergedForward(k)
        if record:
            trace.layers.append(LayerRecord(X, X_bar, Y, X_md, QX_md, AtY, G, X_new, mask_x,
                                            E, AE, H, Y_new, mask_y))
        X, Y, X_bar = X_new, Y_new, X_bar_new

    x_raw, gx_pre = mlp_forward(params.mlp("g_x"), X)
    y_raw, gy_pre = mlp_forward(params.mlp("g_y"), Y)
    x_raw, y_raw = x_raw[:, 0], y_raw[:, 0]
    x_out, mask_ox = project_primal(x_raw, inst, return_mask=True)
    y_out, mask_oy = project_dual(y_raw, inst, return_mask=True)
    if not (np.all(np.isfinite(x_out)) and np.all(np.isfinite(y_out))):
        raise DivergedForward(cfg.layers)

    if record:
        trace.X_final, trace.Y_final, trace.X_bar_final = X, Y, X_bar
        trace.g_x_pre, trace.g_y_pre = gx_pre, gy_pre
        trace.x_raw, trace.y_raw = x_raw, y_raw
        trace.mask_out_x, trace.mask_out_y = mask_ox, mask_oy
        trace.x_out, trace.y_out = x_out, y_out
    return PrimalDualPoint(x_out, y_out), trace


def predict(inst: QpInstance, params: NetParams) -> PrimalDualPoint:
    return forward(inst, params, record=False)[0]
