"""Structured inverses of 1 + N, of difference operators D, and of D + N.

Four routes are provided:

* :func:`invert_neumann` sums the geometric series ``sum_j (-N)^j`` with
  kernel compositions; valid when ``||beta||_1 < 1``.
* :func:`invert_dense` factorizes ``I + mat(N)`` and reads the inverse
  kernel back off the block diagonals.  No smallness is assumed.
* :func:`fourier_oracle_invert` inverts a pure convolution through its
  discrete symbol on the periodized box; it is an independent check of
  the dense route away from the boundary.
* :func:`invert_diffop` / :func:`invert_diffint` handle ``D`` and ``D + N``
  via ``(D + N)^{-1} = (1 + D^{-1} N)^{-1} D^{-1} = D^{-1} + K' D^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import (
    DiffOp,
    add_diffops,
    compose_dd,
    compose_dn,
    compose_nd,
    compose_nn,
    identity_diffop,
    make_diffop,
    materialize_diffop,
    scale_diffop,
)
from .grid import GridSpec, inside_mask
from .kernel import Kernel, continuity_modulus, convolution_kernel, make_kernel, resize_window, zero_kernel
from .operator import materialize, residual_norms

COND_MAX = 1e12
SYMBOL_EPS = 1e-12


class InversionError(RuntimeError):
    """Base class for solver failures."""


class NotInvertibleError(InversionError):
    pass


class SeriesError(InversionError):
    pass


class InversionCancelled(InversionError):
    pass


def _cancelled(cancel) -> bool:
    # cancel: None, a zero-argument callable, or anything with is_set() (threading.Event)
    if cancel is None:
        return False
    if hasattr(cancel, "is_set"):
        return bool(cancel.is_set())
    return bool(cancel())


@dataclass
class InverseResult:
    m: Kernel
    method: str
    residuals: dict
    tail_report: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DiffIntInverse:
    a: DiffOp
    m: Kernel
    residuals: dict
    diagnostics: dict = field(default_factory=dict)


def kernel_residuals(n: Kernel, m: Kernel) -> dict:
    """Right and left residuals of ``I + mat(m)`` as inverse of ``I + mat(n)``."""
    eye = np.eye(n.grid.size * n.grid.d)
    A = eye + materialize(n).entries
    B = eye + materialize(m).entries
    return {"right": residual_norms(A @ B, n.grid.d), "left": residual_norms(B @ A, n.grid.d)}


def geometric_terms(q: float, tol: float) -> int:
    """Smallest J with ``q^(J+1) / (1 - q) < tol``."""
    if q == 0.0:
        return 0
    J = max(0, math.ceil(math.log(tol * (1.0 - q)) / math.log(q) - 1.0))
    while q ** (J + 1) / (1.0 - q) >= tol:
        J += 1
    return J


def invert_neumann(k: Kernel, tol: float = 1e-12, k_max: int = 10000, cancel=None) -> InverseResult:
    q = k.beta.l1 if k.beta is not None else make_kernel(k.grid, k.half, k.samples).beta.l1
    if not q < 1.0:
        raise ValueError(f"Neumann requires ||beta||_1 < 1, got {q!r}")
    J = geometric_terms(q, tol)
    if J > k_max:
        raise SeriesError(f"Neumann series needs {J} terms for tolerance {tol}, above k_max={k_max}")
    grid = k.grid
    half = min(max(J, 1) * k.half, grid.N - 1)
    acc = np.zeros(grid.shape + (2 * half + 1,) * grid.c + (grid.d, grid.d))
    power = None
    used = 0
    clipped = 0.0
    for j in range(1, J + 1):
        if _cancelled(cancel):
            raise InversionCancelled(f"cancelled after {used} Neumann terms")
        power = k if power is None else compose_nn(k, power)
        clipped += power.info.get("clipped_mass", 0.0)
        acc += (-1.0) ** j * resize_window(power, half).samples
        used = j
        if not np.any(power.samples):
            break
    m = make_kernel(grid, half, acc)
    tail = q ** (used + 1) / (1.0 - q) if used == J else 0.0
    residuals = kernel_residuals(k, m)
    return InverseResult(
        m=m,
        method="neumann",
        residuals=residuals,
        tail_report={"geometric_tail": tail, "clipped_mass": clipped},
        diagnostics={
            "terms": used,
            "beta_l1": q,
            "beta_m_l1": m.beta.l1,
            "beta_m_bound": q / (1.0 - q),
        },
    )


def extract_kernel(grid: GridSpec, dense: np.ndarray, half: Optional[int] = None) -> Kernel:
    """Kernel whose materialization is ``dense``: ``m[i][w] = block(i, i - w) / h^c``."""
    if half is None:
        half = grid.N - 1
    P, d = grid.size, grid.d
    view = dense.reshape(P, d, P, d)
    probe = zero_kernel(grid, half)
    samples = np.zeros(probe.samples.shape)
    for w in probe.offsets():
        valid = inside_mask(grid, w).reshape(-1)
        rows = np.nonzero(valid)[0]
        if rows.size == 0:
            continue
        multi = np.stack(np.unravel_index(rows, grid.shape), axis=-1) - w
        cols = np.ravel_multi_index(tuple(multi.T), grid.shape)
        slab = np.zeros((P, d, d))
        slab[rows] = view[rows, :, cols, :]
        samples[probe.offset_index(w)] = slab.reshape(grid.shape + (d, d)) / grid.w_quad
    return make_kernel(grid, half, samples)


def dense_inverse(A: np.ndarray, cond_max: float = COND_MAX) -> tuple[np.ndarray, float]:
    """Inverse with a 1-norm condition estimate; raises when not invertible at this resolution."""
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise NotInvertibleError(f"operator not invertible at this resolution: {exc}") from None
    cond = float(np.abs(A).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())
    if not np.isfinite(cond) or cond > cond_max:
        raise NotInvertibleError(
            f"operator not invertible at this resolution: condition estimate {cond:.3e} exceeds {cond_max:.1e}"
        )
    return inv, cond


def modulus_deltas(grid: GridSpec, multiples=(1, 2, 4, 8)) -> list[float]:
    return [m * grid.h for m in multiples if m < grid.N]


def invert_dense(k: Kernel, cond_max: float = COND_MAX) -> InverseResult:
    grid = k.grid
    eye = np.eye(grid.size * grid.d)
    inv, cond = dense_inverse(eye + materialize(k).entries, cond_max)
    m = extract_kernel(grid, inv - eye)
    modulus = continuity_modulus(m, modulus_deltas(grid))
    return InverseResult(
        m=m,
        method="dense",
        residuals=kernel_residuals(k, m),
        tail_report={"clipped_mass": 0.0},
        diagnostics={"condition_estimate": cond, "modulus": modulus.as_dict()},
    )


def fourier_oracle_invert(profile: np.ndarray, grid: GridSpec, symbol_eps: float = SYMBOL_EPS) -> Kernel:
    """Invert a pure convolution on the periodized box through its discrete symbol.

    ``profile`` holds offset samples, shape ``(2W+1,)*c`` (d = 1) or
    ``(2W+1,)*c + (d, d)``.  Offsets are wrapped modulo N, the symbol is
    ``n_hat = h^c * DFT(profile)`` and ``m_hat = -(1 + n_hat)^{-1} n_hat``.
    """
    c, N, d = grid.c, grid.N, grid.d
    profile = np.asarray(profile, dtype=np.float64)
    if d == 1 and profile.ndim == c:
        profile = profile[..., None, None]
    half = (profile.shape[0] - 1) // 2
    if profile.shape != (2 * half + 1,) * c + (d, d):
        raise ValueError(f"profile shape {profile.shape} is not a centred window of d x d blocks")
    circ = np.zeros((N,) * c + (d, d))
    rng = np.arange(-half, half + 1) % N
    for idx in np.ndindex(*profile.shape[:c]):
        target = tuple(rng[j] for j in idx)
        circ[target] += profile[idx]
    axes = tuple(range(c))
    n_hat = np.fft.fftn(circ, axes=axes) * grid.w_quad
    lhs = np.eye(d) + n_hat
    smallest = np.linalg.svd(lhs, compute_uv=False)[..., -1]
    worst = np.unravel_index(np.argmin(smallest), smallest.shape)
    if smallest[worst] < symbol_eps:
        raise NotInvertibleError(
            f"symbol 1 + n_hat vanishes at frequency index {tuple(int(v) for v in worst)}"
            f" (|.| = {smallest[worst]:.3e}): operator not invertible at this resolution"
        )
    m_hat = -np.linalg.solve(lhs, n_hat)
    m_circ = np.real(np.fft.ifftn(m_hat, axes=axes)) / grid.w_quad
    out_half = (N - 1) // 2
    out_rng = np.arange(-out_half, out_half + 1) % N
    m_profile = m_circ[np.ix_(*([out_rng] * c))]
    return convolution_kernel(grid, m_profile)


def kernel_profile(k: Kernel) -> np.ndarray:
    """Offset profile of an x-constant kernel."""
    if not k.is_translation_invariant():
        raise ValueError("kernel is not translation invariant (x-dependent samples)")
    return np.array(k.samples[(0,) * k.c])


def invert_fourier(k: Kernel) -> InverseResult:
    m = fourier_oracle_invert(kernel_profile(k), k.grid)
    return InverseResult(m=m, method="fourier", residuals=kernel_residuals(k, m), tail_report={"clipped_mass": 0.0})


def invert_diffop(D: DiffOp, tol: float = 1e-12, k_max: int = 10000, cancel=None) -> DiffOp:
    """Inverse of D under zero-shift dominance, as a finite difference operator.

    With ``D = D0 (I + R)`` and ``R = D0^{-1} (D - D0)``, the inverse is
    ``(sum_j (-R)^j) D0^{-1}``; the series is cut once the geometric tail
    ``q^(J+1) / (1 - q)`` drops below ``tol``, ``q = sum_t sup_i ||R_t[i]||``.
    """
    grid = D.grid
    zero = (0,) * grid.c
    t0 = D.term(zero)
    if t0 is None:
        raise ValueError("difference operator has no zero-shift term")
    cond = np.linalg.cond(t0.coeffs)
    bad = ~np.isfinite(cond) | (cond > COND_MAX)
    if np.any(bad):
        where = tuple(int(v) for v in np.argwhere(bad)[0])
        raise ValueError(f"zero-shift coefficient is singular at lattice point {where}")
    d0_inv = np.linalg.inv(t0.coeffs)
    rest = [(t.shift, d0_inv @ t.coeffs) for t in D.terms if t.shift != zero]
    R = make_diffop(grid, rest) if rest else None
    q = R.c_norm if R is not None else 0.0
    if not q < 1.0:
        raise ValueError(f"off-diagonal dominance fails: q = {q!r} >= 1")
    J = geometric_terms(q, tol)
    if J > k_max:
        raise SeriesError(f"difference-operator series needs {J} terms, above k_max={k_max}")
    series = identity_diffop(grid)
    if R is not None:
        neg_r = scale_diffop(R, -1.0)
        power = identity_diffop(grid)
        for j in range(1, J + 1):
            if _cancelled(cancel):
                raise InversionCancelled(f"cancelled after {j - 1} series terms")
            power = compose_dd(neg_r, power)
            if not any(np.any(t.coeffs) for t in power.terms):
                break
            series = add_diffops(series, power)
    inverse = compose_dd(series, make_diffop(grid, [(zero, d0_inv)]))
    d0_norm = float(np.abs(d0_inv).sum(axis=-1).max())
    tail = (q ** (J + 1) / (1.0 - q)) * d0_norm if q > 0 else 0.0
    inverse = make_diffop(grid, inverse.terms, tail=tail)
    product = materialize_diffop(D).entries @ materialize_diffop(inverse).entries
    inverse.info.update({"q": q, "terms": J, "tail": tail, "residual": residual_norms(product, grid.d)})
    return inverse


def invert_diffint(D: DiffOp, k: Kernel, tol: float = 1e-12, method: str = "dense", cancel=None) -> DiffIntInverse:
    """``(D + N)^{-1} = A + M`` with ``A = D^{-1}`` and ``M`` the kernel of ``K' D^{-1}``."""
    a = invert_diffop(D, tol=tol, cancel=cancel)
    K = compose_dn(a, k)
    if method == "neumann":
        inner = invert_neumann(K, tol=tol, cancel=cancel)
    elif method == "dense":
        inner = invert_dense(K)
    else:
        raise ValueError(f"unknown inner method {method!r}")
    m = compose_nd(inner.m, a)
    grid = k.grid
    forward = materialize_diffop(D).entries + materialize(k).entries
    backward = materialize_diffop(a).entries + materialize(m).entries
    residuals = {
        "right": residual_norms(forward @ backward, grid.d),
        "left": residual_norms(backward @ forward, grid.d),
    }
    return DiffIntInverse(
        a=a,
        m=m,
        residuals=residuals,
        diagnostics={
            "q": a.info.get("q"),
            "diffop_terms": len(a.terms),
            "diffop_tail": a.info.get("tail", 0.0),
            "inner_method": inner.method,
            "inner_residuals": inner.residuals,
            "clipped_mass": K.info.get("clipped_mass", 0.0) + m.info.get("clipped_mass", 0.0),
        },
    )
