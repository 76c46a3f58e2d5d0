import numpy as np
import pytest

from pdqpnet.instance import make_instance
from pdqpnet.oracle import OracleFailure, solve_active_set
from pdqpnet.tiny import random_tiny_instance


def test_two_var(two_var):
    o = solve_active_set(two_var)
    assert np.allclose(o.x, [1.0, 1.0], atol=1e-14) and np.allclose(o.y, [1.0], atol=1e-14)


def test_box_bound_active():
    # min 1/2 x^2 - 5x on [0, 2]: x = 2
    o = solve_active_set(make_instance([[1.0]], [-5.0], np.zeros((0, 1)), [], l=[0.0], u=[2.0]))
    assert o.x[0] == 2.0


def test_dependent_equality_rows():
    inst = make_instance(np.eye(2), [1.0, 1.0], [[0.0, 1.0], [0.0, 2.0]], [1.0, 2.0],
                         l=[-np.inf] * 2, u=[np.inf] * 2, row_kind="EE")
    o = solve_active_set(inst)
    assert np.allclose(o.x, [-1.0, 1.0])


def test_matches_scipy_on_random_tiny():
    from scipy.optimize import minimize
    for s in range(8):
        inst = random_tiny_instance(s, n=4, m=2)
        o = solve_active_set(inst)
        Q, A = inst.Q.to_dense(), inst.A.to_dense()
        cons = [{"type": "eq" if k.value == "E" else "ineq", "fun": (lambda x, a=A[j], bj=inst.b[j]: a @ x - bj)}
                for j, k in enumerate(inst.row_kind)]
        bounds = [(None if np.isinf(l) else l, None if np.isinf(u) else u) for l, u in zip(inst.l, inst.u)]
        r = minimize(lambda x: 0.5 * x @ Q @ x + inst.c @ x, np.clip(np.zeros(4), inst.l, inst.u),
                     jac=lambda x: Q @ x + inst.c, bounds=bounds, constraints=cons, method="SLSQP",
                     options={"ftol": 1e-12, "maxiter": 500})
        assert np.allclose(o.x, r.x, atol=1e-5), s


def test_infeasible_raises():
    inst = make_instance(np.eye(1), [0.0], [[1.0], [-1.0]], [1.0, 0.0], l=[-np.inf], u=[np.inf])
    with pytest.raises(OracleFailure):
        solve_active_set(inst)
