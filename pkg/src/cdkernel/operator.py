"""Application, dense materialization and discrete L_p norms.

Discrete norms use the quadrature weight for finite p and the max-abs
norm on the value space E = R^d:

    ||u||_p = (sum_i |u[i]|_inf^p h^c)^(1/p),    ||u||_inf = max_i |u[i]|_inf.

The weight cancels in operator norms, so ``||identity||_p = 1`` for all p.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import GridSpec, inside_mask, shift_field
from .kernel import Kernel

DENSE_CAP = 8192
POWER_TOL = 1e-10
POWER_MAX_ITER = 20000
RESIDUAL_POWER_ITER = 2000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteFunction:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.grid.d == 1 and values.shape == self.grid.shape:
            values = values[..., None]
        if values.shape != self.grid.shape + (self.grid.d,):
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape + (self.grid.d,)}")
        object.__setattr__(self, "values", values)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class DenseOperator:
    grid: GridSpec
    entries: np.ndarray

    def block(self, i: int, j: int) -> np.ndarray:
        d = self.grid.d
        return self.entries[i * d : (i + 1) * d, j * d : (j + 1) * d]

    def __matmul__(self, other):
        if isinstance(other, DenseOperator):
            return DenseOperator(self.grid, self.entries @ other.entries)
        if isinstance(other, DiscreteFunction):
            return DiscreteFunction(self.grid, (self.entries @ other.flat()).reshape(other.values.shape))
        return NotImplemented

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.grid, self.entries + other.entries)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.grid, self.entries - other.entries)


def identity(grid: GridSpec) -> DenseOperator:
    return DenseOperator(grid, np.eye(grid.size * grid.d))


def _check_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def _matvec(blocks: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.einsum("...kl,...l->...k", blocks, vectors)


def apply(k: Kernel, u: DiscreteFunction) -> DiscreteFunction:
    """``out[i] = sum_w n[i][w] u[i - w] h^c`` with zero-fill outside the box."""
    _check_grid(k.grid, u.grid)
    out = np.zeros_like(u.values)
    for w in k.offsets():
        out += _matvec(k.slab(w), shift_field(u.values, w))
    return DiscreteFunction(u.grid, out * k.grid.w_quad)


def _dense_shape_check(grid: GridSpec, cap: int):
    if grid.size * grid.d > cap:
        raise ValueError(f"dense size N^c*d = {grid.size * grid.d} exceeds the cap of {cap}")


def scatter_blocks(grid: GridSpec, out: np.ndarray, s, blocks: np.ndarray):
    """Add ``blocks[i]`` into block (i, i - s) of the dense matrix ``out`` wherever valid."""
    d = grid.d
    P = grid.size
    valid = inside_mask(grid, s).reshape(-1)
    rows = np.nonzero(valid)[0]
    if rows.size == 0:
        return
    multi = np.stack(np.unravel_index(rows, grid.shape), axis=-1) - np.asarray(s)
    cols = np.ravel_multi_index(tuple(multi.T), grid.shape)
    view = out.reshape(P, d, P, d)
    view[rows, :, cols, :] += blocks.reshape((P, d, d))[rows]


def materialize(k: Kernel, cap: int = DENSE_CAP) -> DenseOperator:
    """Dense matrix with block (i, i - w) = n[i][w] h^c."""
    grid = k.grid
    _dense_shape_check(grid, cap)
    out = np.zeros((grid.size * grid.d, grid.size * grid.d))
    for w in k.offsets():
        scatter_blocks(grid, out, w, k.slab(w) * grid.w_quad)
    return DenseOperator(grid, out)


def op_norm_bound(k: Kernel) -> float:
    if k.beta is None:
        raise ValueError("kernel has no majorant attached")
    return k.beta.l1


def _sign_vectors(d: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=d)))


def holder_bound(M: np.ndarray) -> float:
    """Upper bound ``min(sqrt(||M||_1 ||M||_inf), ||M||_F)`` on the spectral norm."""
    a = np.abs(M)
    return float(min(math.sqrt(a.sum(axis=0).max() * a.sum(axis=1).max()), np.linalg.norm(M)))


def power_norm(M: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER, on_stall: str = "raise") -> float:
    """Largest singular value by power iteration on ``M^T M``.

    Clustered top singular values (rounding-noise residuals) can stall the
    iteration; ``on_stall="bound"`` then returns ``holder_bound(M)``, which
    never underestimates.
    """
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    sigma_old = 0.0
    for _ in range(max_iter):
        y = M @ x
        sigma = float(np.linalg.norm(y))
        if sigma == 0.0:
            x = rng.standard_normal(M.shape[1])
            x /= np.linalg.norm(x)
            continue
        if abs(sigma - sigma_old) <= tol * sigma:
            return sigma
        sigma_old = sigma
        x = M.T @ y
        x /= np.linalg.norm(x)
    if on_stall == "bound":
        return holder_bound(M)
    raise ConvergenceError(f"power iteration did not reach relative tolerance {tol} in {max_iter} iterations")


def op_norm(dense: Union[DenseOperator, np.ndarray], p, d: int = 1, **power_kw) -> float:
    """Operator norm on the discrete L_p space, p in {1, 2, inf}.

    p = inf is the max absolute row sum.  p = 1 is exact for the
    l1-of-l_inf norm: the extreme points of the unit ball are signed
    vertices supported on one lattice point, which gives a max column sum
    when d = 1.  p = 2 is the top singular value, i.e. Euclidean norm on E
    when d > 1.
    """
    if isinstance(dense, DenseOperator):
        d = dense.grid.d
        dense = dense.entries
    M = np.asarray(dense)
    if p in (math.inf, "inf", np.inf):
        return float(np.abs(M).sum(axis=1).max())
    if p == 1:
        if d == 1:
            return float(np.abs(M).sum(axis=0).max())
        n = M.shape[1] // d
        cols = M.reshape(M.shape[0] // d, d, n, d)
        best = 0.0
        for s in _sign_vectors(d):
            image = np.einsum("akbl,l->akb", cols, s)
            best = max(best, float(np.abs(image).max(axis=1).sum(axis=0).max()))
        return best
    if p == 2:
        return power_norm(M, **power_kw)
    raise ValueError(f"p must be 1, 2 or inf, got {p!r}")


def lp_norm(u: DiscreteFunction, p) -> float:
    mags = np.abs(u.values).max(axis=-1)
    if p in (math.inf, "inf", np.inf):
        return float(mags.max())
    if p not in (1, 2):
        raise ValueError(f"p must be 1, 2 or inf, got {p!r}")
    return float((np.sum(mags**p) * u.grid.w_quad) ** (1.0 / p))


P_VALUES = (1, 2, math.inf)


def p_label(p) -> str:
    return "inf" if p == math.inf else str(p)


def residual_norms(product: np.ndarray, d: int = 1) -> dict:
    """``||product - I||_p`` for p in {1, 2, inf}, keyed "1", "2", "inf"."""
    R = product - np.eye(product.shape[0])
    power = {"on_stall": "bound", "max_iter": RESIDUAL_POWER_ITER}
    return {p_label(p): op_norm(R, p, d=d, **(power if p == 2 else {})) for p in P_VALUES}
