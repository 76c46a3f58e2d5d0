import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pdqpnet.instance import RowKind, make_instance
from pdqpnet.sparse import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def two_var():
    """min 1/2 ||x||^2  s.t.  x1 + x2 >= 2, x free; optimum x = (1, 1), y = 1."""
    return make_instance(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0],
                         l=[-np.inf, -np.inf], u=[np.inf, np.inf], name="two-var")


@pytest.fixture
def one_var():
    """min x^2 - 2x on [0, 10]; optimum x = 1."""
    return make_instance([[2.0]], [-2.0], np.zeros((0, 1)), [], l=[0.0], u=[10.0], name="one-var")


@st.composite
def sparse_matrices(draw, max_dim=6):
    nrows = draw(st.integers(0, max_dim))
    ncols = draw(st.integers(0, max_dim))
    mask = draw(st.lists(st.booleans(), min_size=nrows * ncols, max_size=nrows * ncols))
    vals = draw(st.lists(st.floats(-10, 10, allow_nan=False), min_size=nrows * ncols,
                         max_size=nrows * ncols))
    dense = (np.array(vals) * np.array(mask, dtype=float)).reshape(nrows, ncols)
    return SparseMatrix.from_dense(dense)


def dense_instance(Q, c, A, b, l, u, kinds):
    return make_instance(Q, c, A, b, l=l, u=u,
                         row_kind=[RowKind.EQUALITY if k == "E" else RowKind.INEQUALITY_GEQ for k in kinds])
