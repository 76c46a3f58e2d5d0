import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdqpnet.generator import GeneratorConfig, generate_synthetic
from pdqpnet.instance import PrimalDualPoint, make_instance
from pdqpnet.kkt import full_residuals
from pdqpnet.net import (DivergedForward, NetConfig, NetParams, alignment_params, forward, init_params,
                         logistic, pad_width, param_shapes, predict, softplus)
from pdqpnet.solver import StepSchedule, make_schedule, run_inner, schedule_at
from pdqpnet.tiny import random_tiny_instance


def _zero_instance(n=3, m=2):
    return make_instance(np.zeros((n, n)), np.zeros(n), np.zeros((m, n)), np.zeros(m),
                         l=[-1.0] * n, u=[1.0] * n)


def test_zero_instance_zero_output():
    cfg = NetConfig(layers=1, width=1, mlp_hidden=1, mlp_depth=1)
    params = alignment_params(None, StepSchedule(0.0, 1.0, 1), 1)
    p = predict(_zero_instance(), params)
    assert np.array_equal(p.x, np.zeros(3)) and np.array_equal(p.y, np.zeros(2))
    assert params.config == cfg


def test_alignment_two_var(two_var):
    s = make_schedule(two_var, 5)
    point, trace = forward(two_var, alignment_params(two_var, s, 5), record=True)
    x, _, y = run_inner(two_var, s, 5)[-1]
    assert np.abs(point.x - x).max() <= 1e-12 and np.abs(point.y - y).max() <= 1e-12


def test_alignment_first_layer_scalars(two_var):
    s = make_schedule(two_var, 8)
    params = alignment_params(two_var, s, 8)
    beta, eta, tau, theta = params.steps(0)
    assert (beta, theta, eta, tau) == schedule_at(s, 0)


def test_alignment_rejects_k_past_restart(two_var):
    with pytest.raises(ValueError):
        alignment_params(two_var, make_schedule(two_var, 4), 5)


@given(st.integers(0, 10_000), st.integers(1, 16))
def test_alignment_layer_for_layer(seed, K):
    rng = np.random.default_rng(seed)
    inst = generate_synthetic(GeneratorConfig(n=int(rng.integers(1, 51)), m=int(rng.integers(1, 51)), seed=seed))
    s = make_schedule(inst, 16)
    _, trace = forward(inst, alignment_params(inst, s, K), record=True)
    for (X, Xb, Y), (x, xb, y) in zip(trace.states(), run_inner(inst, s, K), strict=True):
        assert np.abs(X[:, 0] - x).max(initial=0) <= 1e-12
        assert np.abs(Xb[:, 0] - xb).max(initial=0) <= 1e-12
        assert np.abs(Y[:, 0] - y).max(initial=0) <= 1e-12


def test_padding_invariance():
    inst = random_tiny_instance(4)
    params = alignment_params(inst, make_schedule(inst, 6), 6)
    a = predict(inst, params)
    b = predict(inst, pad_width(params, 3))
    assert a == b


@given(st.integers(0, 10_000))
def test_columnwise_projection(seed):
    inst = random_tiny_instance(seed, n=5, m=4)
    params = init_params(NetConfig(layers=4, width=4, mlp_hidden=4), make_schedule(inst, 4), seed, noise=0.3)
    point, trace = forward(inst, params, record=True)
    for X, Xb, Y in trace.states()[1:]:
        assert np.all(X >= inst.l[:, None]) and np.all(X <= inst.u[:, None])
        assert np.all(Y[inst.mask_ineq > 0] >= 0)
    assert np.all(point.x >= inst.l) and np.all(point.x <= inst.u)


@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    inst = random_tiny_instance(seed, n=6, m=3)
    rng = np.random.default_rng(seed)
    perm, rperm = rng.permutation(6), rng.permutation(3)
    params = init_params(NetConfig(layers=3, width=4, mlp_hidden=4), make_schedule(inst, 3), seed, noise=0.2)
    a = predict(inst, params)
    b = predict(inst.permuted(perm, rperm), params)
    np.testing.assert_allclose(b.x, a.x[perm], atol=1e-10)
    np.testing.assert_allclose(b.y, a.y[rperm], atol=1e-10)


@given(st.integers(0, 12), st.integers(0, 12))
def test_output_shape_law(n, m):
    params = init_params(NetConfig(layers=2, width=3, mlp_hidden=3), StepSchedule(1.0, 1.0, 2), 0)
    inst = generate_synthetic(GeneratorConfig(n=n, m=m, seed=n * 13 + m))
    p = predict(inst, params)
    assert p.x.shape == (n,) and p.y.shape == (m,)


def test_init_deterministic_and_shapes():
    cfg = NetConfig(layers=3, width=5, mlp_hidden=6, mlp_depth=3)
    s = StepSchedule(2.0, 1.5, 3)
    a, b = init_params(cfg, s, 7), init_params(cfg, s, 7)
    assert a.equals(b)
    assert {k: v.shape for k, v in a.tensors.items()} == param_shapes(cfg)
    assert not a.equals(init_params(cfg, s, 8))


def test_init_steps_follow_schedule():
    s = StepSchedule(2.0, 1.5, 4)
    params = init_params(NetConfig(layers=4, width=2, mlp_hidden=2), s, 0)
    for k in range(1, 4):
        beta, eta, tau, theta = params.steps(k)
        np.testing.assert_allclose((beta, theta, eta, tau), schedule_at(s, k), rtol=1e-12)


def test_effective_step_ranges():
    cfg = NetConfig(layers=2, width=1, mlp_hidden=1, mlp_depth=1)
    shapes = param_shapes(cfg)
    rng = np.random.default_rng(0)
    params = NetParams(cfg, {k: rng.standard_normal(v) * 30 for k, v in shapes.items()})
    for k in range(2):
        beta, eta, tau, theta = params.steps(k)
        assert 0 <= beta <= 1 and eta >= 0 and tau >= 0 and theta >= 0
    assert logistic(0.0) == 0.5 and softplus(0.0) == pytest.approx(np.log(2))


def test_noise_free_init_matches_alignment_d1():
    inst = random_tiny_instance(2)
    s = make_schedule(inst, 6)
    init = init_params(NetConfig(layers=6, width=1, mlp_hidden=2), s, 0, noise=0.0)
    align = alignment_params(inst, s, 6)
    a, b = predict(inst, init), predict(inst, align)
    # only the beta_0 = 1 clip to 1 - 1e-6 separates the two
    assert np.abs(a.concat() - b.concat()).max() < 1e-5


def test_init_residuals_near_solver():
    for seed in range(4):
        inst = random_tiny_instance(seed)
        cfg = NetConfig()
        s = make_schedule(inst, cfg.layers)
        x, _, y = run_inner(inst, s, cfg.layers)[-1]
        net = full_residuals(inst, predict(inst, init_params(cfg, s, 0))).max_hat
        ref = full_residuals(inst, PrimalDualPoint(x, y)).max_hat
        assert abs(net - ref) <= 0.1 * ref


def test_diverged_forward_reports_layer():
    inst = make_instance(np.eye(1), [1.0], np.zeros((0, 1)), [], l=[-np.inf], u=[np.inf])
    params = alignment_params(inst, StepSchedule(1.0, 1.0, 3), 3)
    params.tensors["layer1.eta"][...] = 1e308
    params.tensors["layer1.W_xbar"][...] = 1e308
    with pytest.raises(DivergedForward) as exc, np.errstate(all="ignore"):
        forward(inst, params)
    assert exc.value.layer == 1


def test_param_shape_validation():
    cfg = NetConfig(layers=1, width=2, mlp_hidden=2)
    shapes = param_shapes(cfg)
    bad = {k: np.zeros(v) for k, v in shapes.items()}
    bad["layer0.W_y"] = np.zeros((3, 3))
    with pytest.raises(ValueError):
        NetParams(cfg, bad)
    with pytest.raises(ValueError):
        NetConfig(layers=0)
