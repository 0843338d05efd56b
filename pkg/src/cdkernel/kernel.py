"""Convolution-dominated kernels stored in fiber (offset-window) form.

A kernel is held as ``samples[i][w]``, the d x d matrix n(x_i, w h) for
lattice point ``i`` and integer offset ``w`` in the cubic window
``|w_axis| <= half``.  The corresponding operator reads input sample
``i - w``, so entries whose ``i - w`` falls outside the box never act;
they are kept as stored and called *dead* below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import GridSpec, ShiftLike, as_shift, inside_mask, shift_field, window_offsets


def block_norms(blocks: np.ndarray) -> np.ndarray:
    """l-inf induced norm (max absolute row sum) over the trailing d x d axes."""
    return np.abs(blocks).sum(axis=-1).max(axis=-1)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Majorant:
    beta: np.ndarray
    l1: float

    @classmethod
    def from_profile(cls, beta: np.ndarray, w_quad: float) -> "Majorant":
        beta = np.asarray(beta, dtype=np.float64)
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ValueError("majorant values must be finite and nonnegative")
        return cls(beta=_frozen(beta), l1=float(beta.sum() * w_quad))


@dataclass(frozen=True)
class Kernel:
    grid: GridSpec
    half: int
    samples: np.ndarray
    beta: Optional[Majorant] = None
    info: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def c(self) -> int:
        return self.grid.c

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def window_shape(self) -> tuple[int, ...]:
        return (2 * self.half + 1,) * self.grid.c

    def offsets(self) -> np.ndarray:
        return window_offsets(self.grid.c, self.half)

    def offset_index(self, w: Sequence[int]) -> tuple:
        return (slice(None),) * self.grid.c + tuple(int(v) + self.half for v in w)

    def slab(self, w: Sequence[int]) -> np.ndarray:
        """All samples at offset ``w``: shape ``grid.shape + (d, d)``."""
        return self.samples[self.offset_index(w)]

    def norms(self) -> np.ndarray:
        """``||n[i][w]||_op`` with shape ``grid.shape + window_shape``."""
        return block_norms(self.samples)

    def live_mask(self) -> np.ndarray:
        """True where entry ``(i, w)`` couples two in-box points."""
        mask = np.zeros(self.grid.shape + self.window_shape, dtype=bool)
        for w in self.offsets():
            mask[self.offset_index(w)] = inside_mask(self.grid, w)
        return mask

    def offset_lengths(self) -> np.ndarray:
        """Physical size ``max_axis |w_axis| h`` of each window offset."""
        rng = np.abs(np.arange(-self.half, self.half + 1))
        axes = np.meshgrid(*([rng] * self.grid.c), indexing="ij")
        return np.maximum.reduce(axes) * self.grid.h

    def is_translation_invariant(self) -> bool:
        flat = self.samples.reshape((self.grid.size, -1))
        return bool(np.all(flat == flat[:1]))


def make_kernel(grid: GridSpec, window: int, samples: np.ndarray, beta: Optional[Majorant] = None) -> Kernel:
    """Validate samples and attach the tightest majorant ``max_i ||n[i][w]||``.

    ``samples`` may omit the trailing d x d axes when ``d == 1``.  A supplied
    ``beta`` is kept as given (it is what a file claimed); otherwise it is
    computed.
    """
    if int(window) != window or window < 0:
        raise ValueError(f"window half-width must be a nonnegative integer, got {window}")
    window = int(window)
    samples = np.asarray(samples, dtype=np.float64)
    lead = grid.shape + (2 * window + 1,) * grid.c
    if grid.d == 1 and samples.shape == lead:
        samples = samples[..., None, None]
    if samples.shape != lead + (grid.d, grid.d):
        raise ValueError(f"samples shape {samples.shape} does not match grid/window shape {lead + (grid.d, grid.d)}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    if beta is None:
        norms = block_norms(samples).reshape((grid.size,) + lead[grid.c :])
        beta = Majorant.from_profile(norms.max(axis=0), grid.w_quad)
    elif beta.beta.shape != lead[grid.c :]:
        raise ValueError(f"majorant shape {beta.beta.shape} does not match window {lead[grid.c:]}")
    return Kernel(grid=grid, half=window, samples=_frozen(samples), beta=beta)


def zero_kernel(grid: GridSpec, window: int = 0) -> Kernel:
    shape = grid.shape + (2 * window + 1,) * grid.c + (grid.d, grid.d)
    return make_kernel(grid, window, np.zeros(shape))


def convolution_kernel(grid: GridSpec, profile: np.ndarray) -> Kernel:
    """x-constant kernel from an offset profile of shape ``(2W+1,)*c [+ (d, d)]``."""
    profile = np.asarray(profile, dtype=np.float64)
    if grid.d == 1 and profile.ndim == grid.c:
        profile = profile[..., None, None]
    half = (profile.shape[0] - 1) // 2
    samples = np.broadcast_to(profile, grid.shape + profile.shape)
    return make_kernel(grid, half, samples)


def resize_window(k: Kernel, half: int) -> Kernel:
    """Zero-pad or crop the offset window; cropping discards samples."""
    if half == k.half:
        return k
    shape = k.grid.shape + (2 * half + 1,) * k.c + (k.d, k.d)
    out = np.zeros(shape)
    m = min(half, k.half)
    dst = (slice(None),) * k.c + (slice(half - m, half + m + 1),) * k.c
    src = (slice(None),) * k.c + (slice(k.half - m, k.half + m + 1),) * k.c
    out[dst] = k.samples[src]
    return make_kernel(k.grid, half, out)


def _delta_steps(grid: GridSpec, delta) -> tuple[int, ...]:
    arr = np.atleast_1d(np.asarray(delta, dtype=float))
    if arr.size == 1 and grid.c > 1:
        arr = np.concatenate([arr, np.zeros(grid.c - 1)])
    if arr.shape != (grid.c,):
        raise ValueError(f"displacement {delta!r} must have {grid.c} components")
    steps = arr / grid.h
    rounded = np.round(steps)
    if np.any(np.abs(steps - rounded) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise ValueError(f"displacement {delta!r} is not a multiple of the lattice step {grid.h}")
    return tuple(int(v) for v in rounded)


@dataclass(frozen=True)
class ModulusReport:
    deltas: list
    steps: list
    omega: list
    support_box: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "deltas": [float(np.max(np.abs(np.atleast_1d(d)))) for d in self.deltas],
            "omega": [float(v) for v in self.omega],
            "support_box": self.support_box,
        }


def continuity_modulus(k: Kernel, deltas, support_box: Optional[float] = None) -> ModulusReport:
    """Discrete L1 modulus of continuity of the fiber map x -> n(x, .).

    ``omega(delta) = max_i sum_w ||n[i - delta][w] - n[i][w]|| h^c`` over the
    points ``i`` whose ``i - delta`` is in the box.  Displacements are
    physical lattice multiples; for c = 2 a scalar means a step along the
    first axis.  With ``support_box = alpha`` only entries whose source
    point ``y = x - w h`` satisfies ``|y|_inf <= alpha`` are counted, the
    discrete form of restricting the operator to inputs supported in
    ``[-alpha, alpha]^c``.
    """
    grid = k.grid
    weight = np.ones(grid.shape + k.window_shape)
    if support_box is not None:
        weight = np.zeros_like(weight)
        for w in k.offsets():
            y = grid.points() - w * grid.h
            ok = np.all(np.abs(y) <= support_box + 1e-12, axis=-1)
            weight[k.offset_index(w)] = ok
    axes = tuple(range(grid.c, 2 * grid.c))
    out_deltas, steps, omega = [], [], []
    for delta in deltas:
        s = _delta_steps(grid, delta)
        valid = inside_mask(grid, s)
        diff = block_norms(shift_field(k.samples, s) - k.samples) * weight
        row = diff.sum(axis=axes) * grid.w_quad
        omega.append(float(row[valid].max()) if valid.any() else 0.0)
        out_deltas.append(delta)
        steps.append(s)
    return ModulusReport(deltas=out_deltas, steps=steps, omega=omega, support_box=support_box)


def box_operator_kernel(k: Kernel) -> Kernel:
    """Copy with dead entries (source point off the box) set to zero.

    This is the kernel the materialized operator actually sees; stored
    kernels keep whatever the generator wrote there.
    """
    mask = k.live_mask()[(...,) + (None, None)]
    return make_kernel(k.grid, k.half, np.where(mask, k.samples, 0.0))


def ball_offsets(c: int, radius: int) -> np.ndarray:
    """Integer offsets inside the Euclidean ball of the given lattice radius."""
    cube = window_offsets(c, radius)
    return cube[(cube**2).sum(axis=1) <= radius**2]


def mollify(k: Kernel, r: float) -> Kernel:
    """Average the fiber map over the lattice ball of radius ``r`` about each x.

    The ball is intersected with the box and the sum is divided by the
    number of points actually present, so the result stays an average.
    """
    grid = k.grid
    (R,) = _delta_steps(grid, r)[:1]
    if R <= 0:
        raise ValueError(f"mollifier radius must be a positive lattice multiple, got {r}")
    acc = np.zeros_like(k.samples)
    count = np.zeros(grid.shape)
    for z in ball_offsets(grid.c, R):
        acc += shift_field(k.samples, z)
        count += inside_mask(grid, z)
    expand = count.reshape(grid.shape + (1,) * (grid.c + 2))
    return make_kernel(grid, k.half, acc / expand)


def shift_conjugate(k: Kernel, s: ShiftLike) -> Kernel:
    """Kernel of ``S_h N S_{-h}``: samples ``n[i - s][w]``, zero where ``i - s`` leaves the box."""
    s = as_shift(s, k.c)
    if any(abs(v) > k.grid.N for v in s):
        raise ValueError(f"shift {s} exceeds the lattice extent {k.grid.N}")
    return make_kernel(k.grid, k.half, shift_field(k.samples, s))


def truncate_band(k: Kernel, delta: float) -> tuple[Kernel, float]:
    """Zero all offsets with ``|w h|_inf > delta``; return the kernel and the majorant tail."""
    if delta < 0:
        raise ValueError(f"band width must be nonnegative, got {delta}")
    beta = k.beta if k.beta is not None else make_kernel(k.grid, k.half, k.samples).beta
    far = k.offset_lengths() > delta + 1e-12 * k.grid.h
    tail = float(beta.beta[far].sum() * k.grid.w_quad)
    samples = np.array(k.samples)
    samples[(slice(None),) * k.c + (far,)] = 0.0
    return make_kernel(k.grid, k.half, samples), tail
