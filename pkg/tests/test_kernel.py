import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdkernel.grid import make_grid
from cdkernel.kernel import (
    ball_offsets,
    block_norms,
    continuity_modulus,
    convolution_kernel,
    make_kernel,
    mollify,
    shift_conjugate,
    truncate_band,
    zero_kernel,
)
from cdkernel.operator import materialize, op_norm

from conftest import random_grid, random_kernel

G4 = make_grid(c=1, A=2, N=4)


def test_zero_kernel_majorant():
    k = zero_kernel(G4, window=1)
    np.testing.assert_array_equal(k.beta.beta, 0.0)
    assert k.beta.l1 == 0.0


def test_constant_kernel_majorant():
    k = make_kernel(G4, 1, np.ones((4, 3)))
    np.testing.assert_array_equal(k.beta.beta, [1, 1, 1])
    assert k.beta.l1 == 3.0


def test_x_dependent_majorant():
    k = make_kernel(G4, 0, np.arange(4.0).reshape(4, 1))
    assert k.beta.beta[0] == 3.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        make_kernel(G4, 1, np.ones((4, 2)))


def test_matrix_norm_is_max_row_sum():
    b = np.array([[1.0, -2.0], [0.5, 0.5]])
    assert block_norms(b) == 3.0


def test_majorant_is_minimal(rng):
    for _ in range(20):
        k = random_kernel(rng, random_grid(rng))
        norms = k.norms()
        lead = tuple(range(k.c))
        # every beta entry is attained by some x
        np.testing.assert_array_equal(norms.max(axis=lead), k.beta.beta)


def test_modulus_of_convolution_vanishes():
    g = make_grid(c=1, A=4, N=16)
    k = convolution_kernel(g, np.exp(-np.abs(np.arange(-3, 4) * g.h)))
    rep = continuity_modulus(k, [0.0, g.h, 2 * g.h])
    assert rep.omega == [0.0, 0.0, 0.0]


def test_modulus_enumerated():
    # n[i][0] = x_i with h = 1: each admissible pair differs by exactly 1
    k = make_kernel(G4, 0, G4.axis_points().reshape(4, 1))
    assert continuity_modulus(k, [1.0]).omega == [1.0]


def test_modulus_rejects_off_lattice():
    k = zero_kernel(G4)
    with pytest.raises(ValueError, match="lattice"):
        continuity_modulus(k, [0.5])


def test_modulus_support_box_restricts():
    g = make_grid(c=1, A=2, N=8)
    samples = np.zeros((8, 3))
    samples[0, :] = 1.0  # only the leftmost x varies
    k = make_kernel(g, 1, samples)
    full = continuity_modulus(k, [g.h]).omega[0]
    inner = continuity_modulus(k, [g.h], support_box=0.5).omega[0]
    assert full > 0 and inner == 0.0


def test_mollify_constant_unchanged():
    g = make_grid(c=1, A=2, N=8)
    k = convolution_kernel(g, np.array([0.2, 1.0, 0.3]))
    np.testing.assert_allclose(mollify(k, g.h).samples, k.samples, rtol=0, atol=1e-15)


def test_mollify_edge_convention():
    # interior points average three samples, the right edge averages two
    k = make_kernel(G4, 0, np.array([0.0, 0.0, 1.0, 0.0]).reshape(4, 1))
    got = mollify(k, 1.0).samples[:, 0, 0, 0]
    np.testing.assert_allclose(got, [0.0, 1 / 3, 1 / 3, 1 / 2], atol=1e-15)


def test_mollify_bad_radius():
    with pytest.raises(ValueError):
        mollify(zero_kernel(G4), 0.0)


def test_ball_offsets_c2_euclidean():
    offs = {tuple(w) for w in ball_offsets(2, 1)}
    assert offs == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_mollify_never_raises_beta(rng):
    for _ in range(20):
        g = random_grid(rng)
        k = random_kernel(rng, g)
        r = g.h * int(rng.integers(1, max(2, g.N // 2)))
        assert np.all(mollify(k, r).beta.beta <= k.beta.beta + 1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mollify_does_not_raise_modulus(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    g = random_grid(rng)
    k = random_kernel(rng, g)
    R = int(rng.integers(1, g.N))
    smooth = mollify(k, R * g.h)
    deltas = [s * g.h for s in range(R + 1)]
    a = continuity_modulus(smooth, deltas).omega
    b = continuity_modulus(k, deltas).omega
    assert all(x <= y + 1e-12 for x, y in zip(a, b))


def test_shift_conjugate_zero_is_identity(rng):
    k = random_kernel(rng, random_grid(rng))
    assert np.array_equal(shift_conjugate(k, (0,) * k.c).samples, k.samples)


def test_shift_conjugate_convolution_interior():
    g = make_grid(c=1, A=4, N=16)
    k = convolution_kernel(g, np.array([0.1, 0.5, 0.2]))
    sk = shift_conjugate(k, (3,))
    np.testing.assert_array_equal(sk.samples[3:], k.samples[3:])
    np.testing.assert_array_equal(sk.samples[:3], 0.0)


def test_shift_conjugate_matches_permutation(rng):
    for _ in range(20):
        g = random_grid(rng, allow_c2=False)
        k = random_kernel(rng, g)
        s = int(rng.integers(-(g.N - 1), g.N))
        P = np.zeros((g.N, g.N))
        for i in range(g.N):
            if 0 <= i - s < g.N:
                P[i, i - s] = 1.0
        P = np.kron(P, np.eye(g.d))
        lhs = materialize(shift_conjugate(k, (s,))).entries
        rhs = P @ materialize(k).entries @ P.T
        keep = np.zeros(g.N, dtype=bool)
        keep[max(0, s) : g.N + min(0, s)] = True
        keep = np.repeat(keep, g.d)
        np.testing.assert_allclose(lhs[np.ix_(keep, keep)], rhs[np.ix_(keep, keep)], atol=1e-14)


def test_shift_conjugate_roundtrip(rng):
    g = make_grid(c=2, A=2, N=8)
    k = random_kernel(rng, g, half=2)
    s = (2, -1)
    back = shift_conjugate(shift_conjugate(k, s), (-2, 1))
    # i + s must stay in the box: i0 <= 5 and i1 >= 1
    np.testing.assert_array_equal(back.samples[:6, 1:], k.samples[:6, 1:])


def test_truncate_full_window():
    g = make_grid(c=1, A=4, N=8)
    k = convolution_kernel(g, np.array([0.3, 1.0, 0.2]))
    kd, tail = truncate_band(k, 1 * g.h)
    assert tail == 0.0 and np.array_equal(kd.samples, k.samples)


def test_truncate_tail_example():
    k = convolution_kernel(G4, np.array([0.5, 1.0, 0.25]))
    kd, tail = truncate_band(k, 0.0)
    assert tail == 0.75
    np.testing.assert_array_equal(kd.beta.beta, [0, 1, 0])


def test_truncate_negative_delta():
    with pytest.raises(ValueError):
        truncate_band(zero_kernel(G4), -1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4))
def test_truncation_bound_all_p(seed, dsteps):
    rng = np.random.Generator(np.random.PCG64(seed))
    g = random_grid(rng, max_n=8)
    k = random_kernel(rng, g)
    kd, tail = truncate_band(k, dsteps * g.h)
    diff = materialize(k).entries - materialize(kd).entries
    for p in (1, 2, np.inf):
        assert op_norm(diff, p, d=g.d) <= tail * (1 + 1e-12) + 1e-15
