"""Uniform midpoint lattice on the truncated box [-A, A]^c.

Functions on the lattice are zero-extended outside the box, so a lattice
shift is a permutation with zero-fill rather than a cyclic roll.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

DEFAULT_POINT_CAP = 4096


@dataclass(frozen=True)
class GridSpec:
    c: int
    A: float
    N: int
    d: int = 1
    cap: int = field(default=DEFAULT_POINT_CAP, compare=False, repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.A / self.N

    @property
    def w_quad(self) -> float:
        return self.h**self.c

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.c

    @property
    def size(self) -> int:
        return self.N**self.c

    def axis_points(self) -> np.ndarray:
        return -self.A + (np.arange(self.N) + 0.5) * self.h

    def points(self) -> np.ndarray:
        """Lattice coordinates, shape ``shape + (c,)``."""
        axes = np.meshgrid(*([self.axis_points()] * self.c), indexing="ij")
        return np.stack(axes, axis=-1)

    def header(self) -> dict:
        return {"c": self.c, "A": self.A, "N": self.N, "d": self.d}


def make_grid(c: int = 1, A: float = 1.0, N: int = 64, d: int = 1, cap: int = DEFAULT_POINT_CAP) -> GridSpec:
    if int(c) != c or c < 1 or c > 2:
        raise ValueError(f"spatial dimension c must be 1 or 2, got {c}")
    if not A > 0:
        raise ValueError(f"box half-width A must be positive, got {A}")
    if int(N) != N or N < 2:
        raise ValueError(f"points per axis N must be an integer >= 2, got {N}")
    if int(d) != d or d < 1:
        raise ValueError(f"value dimension d must be a positive integer, got {d}")
    c, N, d, A = int(c), int(N), int(d), float(A)
    if N**c > cap:
        raise ValueError(f"N^c = {N**c} lattice points exceeds the dense-oracle cap of {cap}")
    grid = GridSpec(c=c, A=A, N=N, d=d, cap=cap)
    if grid.h * N != 2.0 * A:
        raise ValueError(f"step 2A/N is not exact in floating point for A={A}, N={N}")
    return grid


@dataclass(frozen=True)
class LatticeShift:
    """Integer offset vector; the physical displacement is ``s * h``."""

    s: tuple[int, ...]

    def __neg__(self) -> "LatticeShift":
        return LatticeShift(tuple(-v for v in self.s))

    def physical(self, grid: GridSpec) -> np.ndarray:
        return np.asarray(self.s, dtype=float) * grid.h


ShiftLike = Union[int, Sequence[int], LatticeShift, np.ndarray]


def as_shift(s: ShiftLike, c: int) -> tuple[int, ...]:
    if isinstance(s, LatticeShift):
        s = s.s
    arr = np.atleast_1d(np.asarray(s))
    if arr.size == 1 and c > 1:
        raise ValueError(f"shift {s!r} must have {c} components")
    if arr.shape != (c,):
        raise ValueError(f"shift {s!r} must have {c} components")
    if not np.all(arr == np.round(arr)):
        raise ValueError(f"shift {s!r} is not an integer lattice offset")
    return tuple(int(v) for v in arr)


def _axis_slices(n: int, s: int) -> tuple[slice, slice]:
    if s >= 0:
        return slice(s, n), slice(0, n - s)
    return slice(0, n + s), slice(-s, n)


def shift_field(arr: np.ndarray, s: Sequence[int]) -> np.ndarray:
    """``out[i] = arr[i - s]`` over the leading ``len(s)`` axes, zero outside."""
    out = np.zeros_like(arr)
    dst, src = [], []
    for axis, si in enumerate(s):
        n = arr.shape[axis]
        if abs(si) >= n:
            return out
        a, b = _axis_slices(n, si)
        dst.append(a)
        src.append(b)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def inside_mask(grid: GridSpec, s: Sequence[int]) -> np.ndarray:
    """Boolean lattice array: True where ``i - s`` lies inside the box."""
    return shift_field(np.ones(grid.shape, dtype=bool), s)


def shift_indices(grid: GridSpec, s: ShiftLike) -> np.ndarray:
    """Index map of the discrete shift by ``s``.

    Returns ``src`` of length ``N**c``: output sample ``i`` (flat, row-major)
    reads input sample ``src[i]``, or is zero when ``src[i] == -1``.
    """
    s = as_shift(s, grid.c)
    if any(abs(v) > grid.N for v in s):
        raise ValueError(f"shift {s} exceeds the lattice extent {grid.N}")
    flat = np.arange(grid.size).reshape(grid.shape)
    src = shift_field(flat + 1, s) - 1
    return src.reshape(-1)


def apply_index_map(src: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Apply a map from :func:`shift_indices` to a flat sample array."""
    u = np.asarray(u)
    out = np.zeros_like(u)
    ok = src >= 0
    out[ok] = u[src[ok]]
    return out


def window_offsets(c: int, half: int) -> np.ndarray:
    """All offsets of the cubic window ``|w_axis| <= half``, row-major, shape (Q, c)."""
    rng = np.arange(-half, half + 1)
    axes = np.meshgrid(*([rng] * c), indexing="ij")
    return np.stack([a.reshape(-1) for a in axes], axis=-1)
