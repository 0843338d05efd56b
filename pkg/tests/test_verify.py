import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdkernel.generators import generate
from cdkernel.grid import make_grid
from cdkernel.inversion import invert_dense
from cdkernel.io import dumps_stable
from cdkernel.kernel import Majorant, convolution_kernel, make_kernel, zero_kernel
from cdkernel.verify import (
    Check,
    block_singular_values,
    certify_inverse,
    check_domination,
    kernel_discrepancy,
    p_independence_report,
    residual,
    truncation_certificate,
)

from conftest import random_grid, random_kernel


def small_conv(N=128, A=8.0, a=0.4):
    return generate("conv-exp", make_grid(c=1, A=A, N=N), {"a": a, "lam": 1.0}).obj


def test_check_rule():
    assert Check("x", 1.0, 1.0).passed
    assert Check("x", 1.0, 1.05, 0.1).passed
    assert not Check("x", 1.0, 1.2, 0.1).passed


def test_domination_own_majorant_zero_slack(rng):
    k = random_kernel(rng, make_grid(c=1, A=2, N=8), half=2)
    c = check_domination(k, k.beta)
    assert c.passed and c.measured_value == 0.0
    i, w = c.witness["point"], c.witness["offset"]
    assert k.norms()[tuple(i) + tuple(v + k.half for v in w)] == k.beta.beta[tuple(v + k.half for v in w)]


def test_domination_failure_located():
    g = make_grid(c=1, A=2, N=8)
    samples = np.zeros((8, 3))
    samples[5, 2] = -0.7
    k = make_kernel(g, 1, samples)
    c = check_domination(k, Majorant.from_profile(np.zeros(3), g.w_quad))
    assert not c.passed
    assert c.witness["point"] == [5] and c.witness["offset"] == [1]
    assert c.measured_value == pytest.approx(0.7)


def test_domination_of_dense_inverse():
    n = small_conv()
    m = invert_dense(n).m
    assert check_domination(m, m.beta).passed


def test_domination_window_mismatch():
    g = make_grid(c=1, A=2, N=8)
    with pytest.raises(ValueError, match="window"):
        check_domination(zero_kernel(g, 1), Majorant.from_profile(np.zeros(5), g.w_quad))


def test_residual_examples(rng):
    g = make_grid(c=1, A=2, N=8)
    z = zero_kernel(g)
    for p in (1, 2, np.inf):
        assert residual(z, z, p) == 0.0
    n = random_kernel(rng, g, half=2, scale=0.4)
    m = invert_dense(n).m
    assert residual(n, m, 2) < 1e-10
    assert residual(n, n, np.inf) > 0.0
    with pytest.raises(ValueError, match="grid"):
        residual(n, zero_kernel(make_grid(c=1, A=2, N=4)), 1)


def test_p_independence():
    g = make_grid(c=1, A=2, N=8)
    assert p_independence_report(zero_kernel(g), zero_kernel(g)).passed
    n = small_conv()
    m = invert_dense(n).m
    rep = p_independence_report(n, m, tol=1e-8)
    assert rep.passed and len(rep.checks) == 3
    bad = np.array(m.samples)
    bad[64, 127, 0, 0] += 1e-2 / n.grid.h
    rep = p_independence_report(n, make_kernel(n.grid, m.half, bad), tol=1e-8)
    assert not rep.passed


def test_truncation_certificate_examples():
    g = make_grid(c=1, A=2, N=4)
    k = convolution_kernel(g, np.array([0.5, 1.0, 0.25]))
    assert all(c.measured_value == 0.0 and c.claimed_bound == 0.0 for c in truncation_certificate(k, 1.0))
    checks = truncation_certificate(k, 0.0)
    assert all(c.passed and c.claimed_bound == 0.75 for c in checks)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4))
def test_truncation_certificate_universal(seed, steps):
    rng = np.random.Generator(np.random.PCG64(seed))
    g = random_grid(rng, max_n=10)
    k = random_kernel(rng, g)
    assert all(c.passed for c in truncation_certificate(k, steps * g.h))


def test_block_zero_kernel():
    rep = block_singular_values(zero_kernel(make_grid(c=1, A=2, N=64), 10), [0], [0])
    assert np.all(rep.singular_values == 0.0)
    assert all(v == 0.0 for v in rep.ratios.values())


def test_block_rank_one():
    # n[i][w] = f(x_i) g(x_i - w h) couples cells through f(x) g(y): rank one
    g = make_grid(c=1, A=2, N=64)
    x = g.axis_points()
    half = g.N - 1
    samples = np.zeros((g.N, 2 * half + 1))
    for i in range(g.N):
        for w in range(-half, half + 1):
            j = i - w
            if 0 <= j < g.N:
                samples[i, w + half] = np.cos(x[i]) * np.exp(-x[j] ** 2)
    rep = block_singular_values(make_kernel(g, half, samples), [0], [-1])
    assert rep.ratios[2] < 1e-12


def test_block_translation_covariance():
    g = make_grid(c=1, A=4, N=64)
    k = generate("conv-exp", g, {"a": 0.4, "lam": 1.0}).obj
    a = block_singular_values(k, [0], [1]).singular_values
    b = block_singular_values(k, [-2], [-1]).singular_values
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14 * a[0])


def test_block_degenerate_cell():
    g = make_grid(c=1, A=2, N=8)
    with pytest.raises(ValueError, match="degenerate"):
        block_singular_values(zero_kernel(g), [0], [0])
    with pytest.raises(ValueError, match="degenerate"):
        block_singular_values(zero_kernel(make_grid(c=1, A=2, N=64)), [5], [0])


def test_block_c2():
    g = make_grid(c=2, A=2, N=32)
    k = generate("conv-exp", g, {"a": 0.2, "lam": 1.0, "window": 8}).obj
    rep = block_singular_values(k, [0, 0], [0, -1])
    assert rep.singular_values.shape == (64,)


def test_certify_zero_kernel():
    g = make_grid(c=1, A=2, N=8)
    z = zero_kernel(g, 1)
    cert = certify_inverse(z, zero_kernel(g, 1))
    assert cert.passed
    assert all(c.measured_value == 0.0 for c in cert.checks)


def test_certify_convolution_instance():
    n = small_conv(a=0.3)
    cert = certify_inverse(n, invert_dense(n))
    assert cert.passed, cert.failed()
    assert cert.profiles["method"] == "dense"


def test_certify_modulated_curve():
    g = make_grid(c=1, A=8, N=256)
    n = generate("modulated", g, {"eps": 0.5, "a": 0.3, "lam": 1.0}).obj
    cert = certify_inverse(n, invert_dense(n))
    assert cert.passed, cert.failed()
    om = cert.profiles["modulus"]["omega_m"]
    assert all(a <= b for a, b in zip(om, om[1:]))


def test_certify_decay_check_opt_in():
    n = small_conv(a=0.3)
    res = invert_dense(n)
    names = [c.name for c in certify_inverse(n, res).checks]
    assert "offset_decay" not in names
    cert = certify_inverse(n, res, decay_threshold=1e-3)
    assert "offset_decay" in [c.name for c in cert.checks]


def test_certificate_reproducible():
    n = small_conv(N=64, A=4.0)
    a = dumps_stable(certify_inverse(n, invert_dense(n)).as_dict())
    b = dumps_stable(certify_inverse(n, invert_dense(n)).as_dict())
    assert a == b
    json.loads(a)


def test_looser_tolerance_superset():
    n = small_conv(N=64, A=4.0)
    m = invert_dense(n).m
    bad = np.array(m.samples)
    bad[10, 70, 0, 0] += 0.5
    m = make_kernel(n.grid, m.half, bad)
    tight = certify_inverse(n, m)
    loose = certify_inverse(n, m, tolerances={"residual": 1.0})
    t = {c.name for c in tight.checks if c.passed}
    l_ = {c.name for c in loose.checks if c.passed}
    assert t <= l_ and t != l_


def test_kernel_discrepancy_regions():
    g = make_grid(c=1, A=4, N=16)
    a = zero_kernel(g, 3)
    s = np.zeros(a.samples.shape)
    s[0, 3] = 1.0  # edge point, centre offset
    b = make_kernel(g, 3, s)
    assert kernel_discrepancy(a, b) == 1.0
    assert kernel_discrepancy(a, b, x_radius=2.0) == 0.0
    wide = zero_kernel(g, 5)
    assert kernel_discrepancy(wide, b) == 1.0
