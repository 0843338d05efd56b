"""Difference operators and the four compositions NN, DN, ND, DD.

A difference operator is a finite sum ``(Du)(x_i) = sum_t d_t[i] u[i - s_t]``
of zero-filled lattice shifts with sampled d x d coefficients.  Every
composition below reproduces the dense matrix product exactly (up to
floating-point rounding); the offset formulas are

    NN:  n[i][w] = sum_v  n1[i][v] n2[i - v][w - v] h^c
    DN:  n[i][w] = sum_t  d_t[i] n[i - s_t][w - s_t]
    ND:  n[i][w] = sum_t  n[i][w - s_t] d_t[i - w + s_t]
    DD:  d[s_a + s_b][i] = d1_a[i] d2_b[i - s_a]

with every sample taken as zero when its lattice argument leaves the box.
Composed windows are clipped at ``N - 1`` (wider offsets never couple two
in-box points); the clipped majorant mass is kept in ``info``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .grid import GridSpec, ShiftLike, as_shift, shift_field, window_offsets
from .kernel import Kernel, Majorant, block_norms, make_kernel
from .operator import DENSE_CAP, DenseOperator, DiscreteFunction, _check_grid, _dense_shape_check, _matvec, scatter_blocks


@dataclass(frozen=True)
class Term:
    shift: tuple[int, ...]
    coeffs: np.ndarray

    def sup_norm(self) -> float:
        return float(block_norms(self.coeffs).max())


@dataclass(frozen=True)
class DiffOp:
    grid: GridSpec
    terms: tuple[Term, ...]
    c_norm: float
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def shifts(self) -> list[tuple[int, ...]]:
        return [t.shift for t in self.terms]

    def term(self, shift: Sequence[int]) -> Optional[Term]:
        shift = tuple(shift)
        for t in self.terms:
            if t.shift == shift:
                return t
        return None

    def max_shift(self) -> int:
        return max((max(abs(v) for v in t.shift) for t in self.terms), default=0)


def _coeff_array(grid: GridSpec, coeffs) -> np.ndarray:
    a = np.asarray(coeffs, dtype=np.float64)
    d = grid.d
    full = grid.shape + (d, d)
    if a.shape == full:
        out = a
    elif a.ndim == 0:
        out = np.broadcast_to(a * np.eye(d), full)
    elif a.shape == (d, d):
        out = np.broadcast_to(a, full)
    elif d == 1 and a.shape == grid.shape:
        out = a[..., None, None]
    else:
        raise ValueError(f"coefficient shape {a.shape} does not match grid {full}")
    out = np.array(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError("coefficients must be finite")
    out.flags.writeable = False
    return out


def make_diffop(grid: GridSpec, terms: Iterable, tail: float = 0.0) -> DiffOp:
    """Build a DiffOp from ``(shift, coeffs)`` pairs with distinct shifts.

    ``coeffs`` may be a scalar (times the identity), a constant d x d
    matrix, a scalar lattice array (d = 1) or a full lattice array of
    matrices.  ``tail`` records the norm of any discarded terms.
    """
    built: list[Term] = []
    seen = set()
    for item in terms:
        if isinstance(item, Term):
            shift, coeffs = item.shift, item.coeffs
        else:
            shift, coeffs = item
        s = as_shift(shift, grid.c)
        if s in seen:
            raise ValueError(f"duplicate shift {s} in difference operator")
        seen.add(s)
        built.append(Term(s, _coeff_array(grid, coeffs)))
    c_norm = float(sum(t.sup_norm() for t in built))
    info = {"tail": float(tail)} if tail else {}
    return DiffOp(grid=grid, terms=tuple(built), c_norm=c_norm, info=info)


def identity_diffop(grid: GridSpec) -> DiffOp:
    return make_diffop(grid, [((0,) * grid.c, 1.0)])


def merge_terms(grid: GridSpec, pairs: Iterable[tuple[Sequence[int], np.ndarray]], drop_zero: bool = True) -> list[Term]:
    """Sum coefficient arrays over equal shifts; drop identically zero terms."""
    acc: dict[tuple[int, ...], np.ndarray] = {}
    for shift, coeffs in pairs:
        s = tuple(int(v) for v in shift)
        if s in acc:
            acc[s] = acc[s] + coeffs
        else:
            acc[s] = np.array(coeffs)
    out = []
    for s in sorted(acc):
        if drop_zero and not np.any(acc[s]):
            continue
        out.append(Term(s, acc[s]))
    return out


def apply_diffop(D: DiffOp, u: DiscreteFunction) -> DiscreteFunction:
    _check_grid(D.grid, u.grid)
    out = np.zeros_like(u.values)
    for t in D.terms:
        out += _matvec(t.coeffs, shift_field(u.values, t.shift))
    return DiscreteFunction(u.grid, out)


def materialize_diffop(D: DiffOp, cap: int = DENSE_CAP) -> DenseOperator:
    """Dense matrix with block (i, i - s_t) = d_t[i]; no quadrature weight."""
    grid = D.grid
    _dense_shape_check(grid, cap)
    out = np.zeros((grid.size * grid.d, grid.size * grid.d))
    for t in D.terms:
        scatter_blocks(grid, out, t.shift, t.coeffs)
    return DenseOperator(grid, out)


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 1:
        return a * b
    return a @ b


def _slot(c: int, center: Sequence[int], out_half: int, inner_half: int) -> tuple:
    """Index of an inner window recentred at offset ``center`` inside the output window."""
    return (slice(None),) * c + tuple(
        slice(v + out_half - inner_half, v + out_half + inner_half + 1) for v in center
    )


def _window_zeros(grid: GridSpec, half: int) -> np.ndarray:
    return np.zeros(grid.shape + (2 * half + 1,) * grid.c + (grid.d, grid.d))


def _crop_profile(profile: np.ndarray, c: int, half: int, keep: int) -> np.ndarray:
    sl = (slice(half - keep, half + keep + 1),) * c
    return profile[sl]


def _finish(grid: GridSpec, half: int, samples: np.ndarray, beta_profile: Optional[np.ndarray] = None) -> Kernel:
    keep = min(half, grid.N - 1)
    clipped = 0.0
    if keep < half:
        norms = block_norms(samples).reshape((grid.size,) + samples.shape[grid.c : 2 * grid.c])
        full = norms.max(axis=0)
        clipped = float((full.sum() - _crop_profile(full, grid.c, half, keep).sum()) * grid.w_quad)
        samples = samples[(slice(None),) * grid.c + (slice(half - keep, half + keep + 1),) * grid.c]
        if beta_profile is not None:
            beta_profile = _crop_profile(beta_profile, grid.c, half, keep)
    beta = None if beta_profile is None else Majorant.from_profile(beta_profile, grid.w_quad)
    k = make_kernel(grid, keep, samples, beta=beta)
    k.info["clipped_mass"] = clipped
    return k


def _source_gather(grid: GridSpec, half: int, values: np.ndarray) -> np.ndarray:
    """``G[i][w] = values[i - w]`` over the window of the given half-width, zero off the box."""
    out = np.zeros(grid.shape + (2 * half + 1,) * grid.c + values.shape[grid.c :])
    for w in window_offsets(grid.c, half):
        out[(slice(None),) * grid.c + tuple(int(v) + half for v in w)] = shift_field(values, w)
    return out


def compose_nn(k1: Kernel, k2: Kernel) -> Kernel:
    _check_grid(k1.grid, k2.grid)
    grid = k1.grid
    out_half = k1.half + k2.half
    out = _window_zeros(grid, out_half)
    lift = (1,) * grid.c
    for v in k1.offsets():
        a = k1.slab(v)
        if not np.any(a):
            continue
        b = shift_field(k2.samples, v)
        a = a.reshape(grid.shape + lift + a.shape[-2:])
        out[_slot(grid.c, v, out_half, k2.half)] += _mul(a, b)
    return _finish(grid, out_half, out * grid.w_quad)


def _shifted_profile(profile: np.ndarray, s: Sequence[int], out_half: int, inner_half: int, scale: float, acc: np.ndarray):
    acc[tuple(slice(v + out_half - inner_half, v + out_half + inner_half + 1) for v in s)] += scale * profile


def _require_beta(k: Kernel) -> Majorant:
    if k.beta is not None:
        return k.beta
    return make_kernel(k.grid, k.half, k.samples).beta


def compose_dn(D: DiffOp, k: Kernel) -> Kernel:
    """Kernel of D N, with majorant ``sum_t ||d_t||_sup beta[w - s_t]``."""
    _check_grid(D.grid, k.grid)
    grid = k.grid
    out_half = k.half + D.max_shift()
    out = _window_zeros(grid, out_half)
    beta = _require_beta(k).beta
    beta_out = np.zeros((2 * out_half + 1,) * grid.c)
    lift = (1,) * grid.c
    for t in D.terms:
        a = t.coeffs.reshape(grid.shape + lift + (grid.d, grid.d))
        out[_slot(grid.c, t.shift, out_half, k.half)] += _mul(a, shift_field(k.samples, t.shift))
        _shifted_profile(beta, t.shift, out_half, k.half, t.sup_norm(), beta_out)
    return _finish(grid, out_half, out, beta_out)


def compose_nd(k: Kernel, D: DiffOp) -> Kernel:
    """Kernel of N D, with majorant ``sum_t ||d_t||_sup beta[w - s_t]``."""
    _check_grid(D.grid, k.grid)
    grid = k.grid
    out_half = k.half + D.max_shift()
    out = _window_zeros(grid, out_half)
    beta = _require_beta(k).beta
    beta_out = np.zeros((2 * out_half + 1,) * grid.c)
    for t in D.terms:
        gathered = _source_gather(grid, k.half, t.coeffs)
        out[_slot(grid.c, t.shift, out_half, k.half)] += _mul(k.samples, gathered)
        _shifted_profile(beta, t.shift, out_half, k.half, t.sup_norm(), beta_out)
    return _finish(grid, out_half, out, beta_out)


def compose_dd(D1: DiffOp, D2: DiffOp) -> DiffOp:
    _check_grid(D1.grid, D2.grid)
    pairs = []
    for a in D1.terms:
        for b in D2.terms:
            shift = tuple(x + y for x, y in zip(a.shift, b.shift))
            pairs.append((shift, _mul(a.coeffs, shift_field(b.coeffs, a.shift))))
    terms = merge_terms(D1.grid, pairs)
    if not terms:
        terms = [Term((0,) * D1.grid.c, np.zeros(D1.grid.shape + (D1.grid.d, D1.grid.d)))]
    return make_diffop(D1.grid, terms, tail=D1.info.get("tail", 0.0) * D2.c_norm + D2.info.get("tail", 0.0) * D1.c_norm)


def scale_diffop(D: DiffOp, alpha: float) -> DiffOp:
    return make_diffop(D.grid, [(t.shift, alpha * t.coeffs) for t in D.terms])


def add_diffops(*ops: DiffOp) -> DiffOp:
    grid = ops[0].grid
    for op in ops[1:]:
        _check_grid(grid, op.grid)
    terms = merge_terms(grid, [(t.shift, t.coeffs) for op in ops for t in op.terms])
    if not terms:
        terms = [Term((0,) * grid.c, np.zeros(grid.shape + (grid.d, grid.d)))]
    return make_diffop(grid, terms)


def multiplication_op(grid: GridSpec, coeffs) -> DiffOp:
    return make_diffop(grid, [((0,) * grid.c, coeffs)])


def shift_op(grid: GridSpec, s: ShiftLike, coeff=1.0) -> DiffOp:
    return make_diffop(grid, [(as_shift(s, grid.c), coeff)])

