import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdqpnet.formats import write_json
from pdqpnet.generator import DIAG_FLOOR, PRESETS, GeneratorConfig, generate_synthetic
from pdqpnet.instance import RowKind
from pdqpnet.sparse import spmv


def test_preset_matches_table():
    p = PRESETS["syn-small"]
    assert (p["n"], p["m"], p["density"], p["alpha"]) == (1000, 1000, 0.3, 0.8)


def test_dense_when_density_one():
    inst = generate_synthetic(GeneratorConfig(n=2, m=2, density=1.0, seed=1))
    assert inst.A.nnz == 4


def test_deterministic_bytes():
    cfg = GeneratorConfig(n=20, m=15, seed=7)
    assert write_json(generate_synthetic(cfg)) == write_json(generate_synthetic(cfg))


@pytest.mark.parametrize("kw", [dict(density=0.0), dict(density=1.5), dict(alpha=1.0), dict(alpha=0.0),
                                dict(u_value=-1.0), dict(n=-1)])
def test_config_validation(kw):
    base = dict(n=3, m=3)
    base.update(kw)
    with pytest.raises(ValueError):
        GeneratorConfig(**base)


def test_config_dict_round_trip():
    cfg = GeneratorConfig(n=3, m=2, density=0.5, seed=11)
    assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg


@given(st.integers(1, 12), st.integers(0, 12), st.floats(0.05, 1.0), st.integers(0, 10_000))
def test_generated_structure(n, m, density, seed):
    cfg = GeneratorConfig(n=n, m=m, density=density, seed=seed)
    inst = generate_synthetic(cfg)
    Q = inst.Q.to_dense()
    assert np.array_equal(Q, np.diag(np.diag(Q)))
    assert np.all(np.diag(Q) >= DIAG_FLOOR)
    assert np.all(inst.l == 0.0) and np.all(inst.u == cfg.u_value)
    assert inst.row_kind == (RowKind.INEQUALITY_GEQ,) * m
    Au = spmv(inst.A, inst.u)
    assert np.all(Au >= 0)
    np.testing.assert_allclose(inst.b, cfg.alpha * Au, rtol=1e-15, atol=0)
    # x = u is feasible
    assert np.all(Au >= inst.b)


def test_density_roughly_matches():
    inst = generate_synthetic(GeneratorConfig(n=200, m=200, density=0.3, seed=0))
    assert abs(inst.A.nnz / 40_000 - 0.3) < 0.02
