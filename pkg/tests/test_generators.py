import math

import numpy as np
import pytest

from cdkernel.generators import FAMILIES, generate, periodic_symbol, rotation
from cdkernel.grid import make_grid


def test_conv_exp_mass_is_discrete_sum():
    g = make_grid(c=1, A=20, N=1024)
    inst = generate("conv-exp", g, {"a": 0.4, "lam": 1})
    w = np.arange(-(g.N - 1), g.N)
    expect = math.fsum(0.4 * math.exp(-abs(v) * g.h) for v in w) * g.h
    assert inst.log["beta_l1"] == pytest.approx(expect, rel=1e-13)
    assert inst.log["beta_l1"] == pytest.approx(0.8, abs=1e-3)


def test_modulated_eps_zero_is_base():
    g = make_grid(c=1, A=4, N=32)
    base = generate("conv-exp", g, {"a": 0.3})
    mod = generate("modulated", g, {"eps": 0.0, "a": 0.3})
    assert np.array_equal(base.obj.samples, mod.obj.samples)


def test_modulated_amplitude():
    g = make_grid(c=1, A=4, N=32)
    mod = generate("modulated", g, {"eps": 0.5, "a": 0.3, "lam": 1.0}).obj
    x = g.axis_points()
    np.testing.assert_allclose(mod.samples[:, 31, 0, 0], 0.3 * (1 + 0.5 * np.sin(np.pi * x / 4)))


def test_diffop_geom_norm():
    D = generate("diffop-geom", make_grid(c=1, A=4, N=16), {"rho": 0.5, "s": 1}).obj
    assert D.c_norm == 1.5
    assert D.shifts() == [(0,), (1,)]


def test_matrix_d2_blocks():
    g = make_grid(c=1, A=4, N=16, d=2)
    k = generate("matrix-d2", g, {"a": 0.3, "theta": 0.7}).obj
    np.testing.assert_allclose(k.samples[3, 15], 0.3 * rotation(0.7))
    with pytest.raises(ValueError, match="d = 2"):
        generate("matrix-d2", make_grid(c=1, A=4, N=16), {})


def test_conv_box_critical_symbol():
    g = make_grid(c=1, A=4, N=64)
    inst = generate("conv-box", g, {"b": 1.0, "critical": 1})
    assert inst.log["min_abs_one_plus_symbol"] < 1e-12
    prof = inst.obj.samples[0, :, 0, 0]
    sym = periodic_symbol(g, prof).real
    assert np.min(np.abs(1 + sym)) < 1e-12


def test_random_seeded_reproducible():
    g = make_grid(c=1, A=2, N=16)
    a = generate("random-kernel", g, {}, seed=7)
    b = generate("random-kernel", g, {}, seed=7)
    c = generate("random-kernel", g, {}, seed=8)
    assert np.array_equal(a.obj.samples, b.obj.samples)
    assert not np.array_equal(a.obj.samples, c.obj.samples)
    assert a.log["seed"] == 7 and a.log["prng"] == "numpy.random.PCG64"
    assert a.obj.beta.l1 == pytest.approx(0.5)
    D = generate("random-diffop", g, {"terms": 3}, seed=1).obj
    assert len(D.terms) == 3


def test_c2_families():
    g = make_grid(c=2, A=2, N=16)
    for fam in ("conv-exp", "conv-box", "modulated"):
        k = generate(fam, g, {}).obj
        assert k.half == 15
        assert k.samples.shape[:2] == (16, 16)


@pytest.mark.parametrize(
    "family, params",
    [("conv-exp", {"lam": -1}), ("conv-box", {"b": -1}), ("diffop-geom", {"s": 0}), ("conv-exp", {"window": 99})],
)
def test_out_of_range(family, params):
    with pytest.raises(ValueError):
        generate(family, make_grid(c=1, A=4, N=16), params)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown family"):
        generate("nope", make_grid(c=1, A=4, N=16))
    assert set(FAMILIES) >= {"conv-exp", "conv-box", "modulated", "matrix-d2", "diffop-geom"}
