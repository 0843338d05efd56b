import itertools

import numpy as np
import pytest

from cdkernel.algebra import make_diffop
from cdkernel.grid import make_grid
from cdkernel.kernel import make_kernel


def naive_kernel_matrix(k):
    """Dense matrix by explicit loops over (i, w); independent of materialize."""
    g = k.grid
    d = g.d
    P = g.size
    out = np.zeros((P * d, P * d))
    pts = list(itertools.product(range(g.N), repeat=g.c))
    offs = list(itertools.product(range(-k.half, k.half + 1), repeat=g.c))
    for i in pts:
        row = np.ravel_multi_index(i, g.shape)
        for w in offs:
            j = tuple(a - b for a, b in zip(i, w))
            if not all(0 <= v < g.N for v in j):
                continue
            col = np.ravel_multi_index(j, g.shape)
            widx = tuple(v + k.half for v in w)
            out[row * d : (row + 1) * d, col * d : (col + 1) * d] += k.samples[i + widx] * g.w_quad
    return out


def naive_diffop_matrix(D):
    g = D.grid
    d = g.d
    out = np.zeros((g.size * d, g.size * d))
    for t in D.terms:
        for i in itertools.product(range(g.N), repeat=g.c):
            j = tuple(a - b for a, b in zip(i, t.shift))
            if not all(0 <= v < g.N for v in j):
                continue
            r, c = np.ravel_multi_index(i, g.shape), np.ravel_multi_index(j, g.shape)
            out[r * d : (r + 1) * d, c * d : (c + 1) * d] += t.coeffs[i]
    return out


def random_grid(rng, max_n=12, allow_c2=True, allow_d2=True):
    c = int(rng.integers(1, 3)) if allow_c2 else 1
    n_hi = max_n if c == 1 else min(max_n, 6)
    N = int(rng.integers(2, n_hi + 1))
    d = int(rng.integers(1, 3)) if allow_d2 else 1
    # A = N * h keeps 2A/N exact
    h = float(rng.choice([0.125, 0.25, 0.5, 1.0]))
    return make_grid(c=c, A=N * h / 2, N=N, d=d)


def random_kernel(rng, grid, half=None, scale=1.0):
    if half is None:
        half = int(rng.integers(0, min(3, grid.N - 1) + 1))
    shape = grid.shape + (2 * half + 1,) * grid.c + (grid.d, grid.d)
    return make_kernel(grid, half, scale * rng.uniform(-1, 1, size=shape))


def random_diffop(rng, grid, n_terms=None, reach=2):
    reach = min(reach, grid.N - 1)
    pool = list(itertools.product(range(-reach, reach + 1), repeat=grid.c))
    if n_terms is None:
        n_terms = int(rng.integers(1, min(4, len(pool)) + 1))
    picks = rng.choice(len(pool), size=n_terms, replace=False)
    terms = [(pool[j], rng.uniform(-1, 1, size=grid.shape + (grid.d, grid.d))) for j in picks]
    return make_diffop(grid, terms)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))


CRITERIA_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request, capsys):
    """Record one pass/fail line per acceptance criterion; printed inline and in the summary."""
    lines = request.config.stash.setdefault(CRITERIA_KEY, {})

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        lines[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
