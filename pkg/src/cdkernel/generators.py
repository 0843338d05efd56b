"""Instance families for the CLI and the test suites.

Each family maps a grid and a flat parameter dict to a kernel or a
difference operator plus a log of derived quantities (majorant mass,
symbol extremes, dropped tails).  Random families draw from numpy's
PCG64 generator with the seed recorded in the log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .algebra import DiffOp, make_diffop
from .grid import GridSpec, window_offsets
from .kernel import Kernel, convolution_kernel, make_kernel

PRNG_NAME = "numpy.random.PCG64"


@dataclass
class Instance:
    family: str
    params: dict
    obj: Union[Kernel, DiffOp]
    log: dict = field(default_factory=dict)

    @property
    def is_kernel(self) -> bool:
        return isinstance(self.obj, Kernel)


def _offset_radius(grid: GridSpec, half: int) -> np.ndarray:
    """Euclidean length ``|w h|`` over the offset window."""
    w = window_offsets(grid.c, half).astype(float) * grid.h
    return np.sqrt((w**2).sum(axis=-1)).reshape((2 * half + 1,) * grid.c)


def default_window(grid: GridSpec) -> int:
    # full bandwidth in 1-D; a bounded window keeps 2-D samples in memory
    return grid.N - 1 if grid.c == 1 else min(grid.N - 1, 16)


def _window(grid: GridSpec, params: dict) -> int:
    half = params.get("window")
    half = default_window(grid) if half is None else int(half)
    if not 0 <= half <= grid.N - 1:
        raise ValueError(f"window must lie in [0, {grid.N - 1}], got {half}")
    return half


def exp_profile(grid: GridSpec, half: int, a: float, lam: float) -> np.ndarray:
    return a * np.exp(-lam * _offset_radius(grid, half))


def box_profile(grid: GridSpec, half: int, a: float, b: float) -> np.ndarray:
    return a * (_offset_radius(grid, half) <= b + 1e-12 * grid.h).astype(float)


def periodic_symbol(grid: GridSpec, profile: np.ndarray) -> np.ndarray:
    """``h^c * DFT`` of a scalar offset profile wrapped modulo N."""
    half = (profile.shape[0] - 1) // 2
    circ = np.zeros((grid.N,) * grid.c)
    idx = np.arange(-half, half + 1) % grid.N
    np.add.at(circ, np.ix_(*([idx] * grid.c)), profile)
    return np.fft.fftn(circ) * grid.w_quad


def _kernel_log(k: Kernel) -> dict:
    return {"beta_l1": k.beta.l1, "beta_max": float(k.beta.beta.max()), "W_half": k.half}


def _positive(name: str, value: float):
    if not value > 0:
        raise ValueError(f"parameter {name} must be positive, got {value}")


def gen_conv_exp(grid: GridSpec, params: dict, rng=None) -> Instance:
    a, lam = float(params.get("a", 0.4)), float(params.get("lam", 1.0))
    _positive("lam", lam)
    half = _window(grid, params)
    k = convolution_kernel(grid, _expand(grid, exp_profile(grid, half, a, lam)))
    return Instance("conv-exp", {"a": a, "lam": lam, "window": half}, k, _kernel_log(k))


def gen_conv_box(grid: GridSpec, params: dict, rng=None) -> Instance:
    a, b = float(params.get("a", 0.2)), float(params.get("b", 1.0))
    if b < 0:
        raise ValueError(f"parameter b must be nonnegative, got {b}")
    critical = bool(int(params.get("critical", 0)))
    half = _window(grid, params)
    log = {}
    if critical:
        # put a root of 1 + n_hat at the frequency where the unit box symbol is largest
        g = periodic_symbol(grid, box_profile(grid, half, 1.0, b)).real
        flat = int(np.argmax(np.abs(g)))
        if abs(g.flat[flat]) == 0.0:
            raise ValueError("box profile is empty; cannot tune the symbol")
        a = -1.0 / float(g.flat[flat])
        log["critical_frequency"] = [int(v) for v in np.unravel_index(flat, g.shape)]
    k = convolution_kernel(grid, _expand(grid, box_profile(grid, half, a, b)))
    sym = periodic_symbol(grid, box_profile(grid, half, a, b)).real
    log.update(_kernel_log(k))
    log["min_abs_one_plus_symbol"] = float(np.abs(1.0 + sym).min())
    return Instance("conv-box", {"a": a, "b": b, "critical": int(critical), "window": half}, k, log)


def _expand(grid: GridSpec, profile: np.ndarray) -> np.ndarray:
    if grid.d == 1:
        return profile
    return profile[..., None, None] * np.eye(grid.d)


def gen_modulated(grid: GridSpec, params: dict, rng=None) -> Instance:
    eps = float(params.get("eps", 0.5))
    base = str(params.get("base", "conv-exp"))
    if base not in ("conv-exp", "conv-box"):
        raise ValueError(f"modulated base must be conv-exp or conv-box, got {base!r}")
    base_params = {k: v for k, v in params.items() if k not in ("eps", "base")}
    inner = FAMILIES[base](grid, base_params)
    if eps == 0.0:
        return Instance("modulated", {"eps": eps, "base": base, **inner.params}, inner.obj, inner.log)
    x1 = grid.points()[..., 0]
    amp = 1.0 + eps * np.sin(np.pi * x1 / grid.A)
    lift = (1,) * (grid.c + 2)
    samples = amp.reshape(grid.shape + lift) * inner.obj.samples
    k = make_kernel(grid, inner.obj.half, samples)
    return Instance("modulated", {"eps": eps, "base": base, **inner.params}, k, _kernel_log(k))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def gen_matrix_d2(grid: GridSpec, params: dict, rng=None) -> Instance:
    if grid.d != 2:
        raise ValueError(f"matrix-d2 needs a grid with d = 2, got d = {grid.d}")
    a, lam = float(params.get("a", 0.3)), float(params.get("lam", 1.0))
    theta = float(params.get("theta", 0.5))
    _positive("lam", lam)
    half = _window(grid, params)
    profile = exp_profile(grid, half, a, lam)[..., None, None] * rotation(theta)
    k = convolution_kernel(grid, profile)
    return Instance("matrix-d2", {"a": a, "lam": lam, "theta": theta, "window": half}, k, _kernel_log(k))


def gen_diffop_geom(grid: GridSpec, params: dict, rng=None) -> Instance:
    rho = float(params.get("rho", 0.5))
    s = int(params.get("s", 1))
    if s == 0:
        raise ValueError("diffop-geom shift s must be nonzero")
    if abs(s) > grid.N - 1:
        raise ValueError(f"shift |s| = {abs(s)} leaves the box of {grid.N} points")
    zero = (0,) * grid.c
    shift = (s,) + (0,) * (grid.c - 1)
    D = make_diffop(grid, [(zero, 1.0), (shift, rho)])
    return Instance("diffop-geom", {"rho": rho, "s": s}, D, {"c_norm": D.c_norm, "tail": 0.0})


def _rng(rng, params: dict):
    if rng is not None:
        return rng
    return np.random.Generator(np.random.PCG64(int(params.get("seed", 0))))


def gen_random_kernel(grid: GridSpec, params: dict, rng=None) -> Instance:
    """Uniform samples rescaled so that ``beta.l1`` equals ``scale``."""
    rng = _rng(rng, params)
    half = int(params.get("window", min(3, grid.N - 1)))
    scale = float(params.get("scale", 0.5))
    shape = grid.shape + (2 * half + 1,) * grid.c + (grid.d, grid.d)
    raw = rng.uniform(-1.0, 1.0, size=shape)
    k = make_kernel(grid, half, raw)
    if k.beta.l1 > 0:
        k = make_kernel(grid, half, raw * (scale / k.beta.l1))
    return Instance("random-kernel", {"window": half, "scale": scale}, k, _kernel_log(k))


def gen_random_diffop(grid: GridSpec, params: dict, rng=None) -> Instance:
    rng = _rng(rng, params)
    n_terms = int(params.get("terms", 3))
    reach = int(params.get("reach", 2))
    if n_terms < 1:
        raise ValueError("random-diffop needs at least one term")
    pool = [tuple(int(v) for v in w) for w in window_offsets(grid.c, min(reach, grid.N - 1))]
    picks = rng.choice(len(pool), size=min(n_terms, len(pool)), replace=False)
    terms = [(pool[j], rng.uniform(-1.0, 1.0, size=grid.shape + (grid.d, grid.d))) for j in sorted(picks)]
    D = make_diffop(grid, terms)
    return Instance("random-diffop", {"terms": n_terms, "reach": reach}, D, {"c_norm": D.c_norm, "tail": 0.0})


FAMILIES: dict[str, Callable] = {
    "conv-exp": gen_conv_exp,
    "conv-box": gen_conv_box,
    "modulated": gen_modulated,
    "matrix-d2": gen_matrix_d2,
    "diffop-geom": gen_diffop_geom,
    "random-kernel": gen_random_kernel,
    "random-diffop": gen_random_diffop,
}

RANDOM_FAMILIES = ("random-kernel", "random-diffop")


def generate(family: str, grid: GridSpec, params: Optional[dict] = None, seed: Optional[int] = None) -> Instance:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    params = dict(params or {})
    rng = None
    if family in RANDOM_FAMILIES:
        seed = int(params.pop("seed", 0) if seed is None else seed)
        rng = np.random.Generator(np.random.PCG64(seed))
    inst = FAMILIES[family](grid, params, rng)
    if rng is not None:
        inst.log.update({"prng": PRNG_NAME, "seed": seed})
    return inst
