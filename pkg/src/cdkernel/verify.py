"""Machine-checkable certificates for kernels and their inverses.

Every check records a claimed bound, the measured value and a tolerance,
and passes exactly when ``measured <= claimed + tolerance``.  Certificates
are deterministic folds over their checks in declaration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .grid import GridSpec
from .inversion import DiffIntInverse, InverseResult, modulus_deltas
from .io import diffop_digest, kernel_digest
from .kernel import Kernel, Majorant, block_norms, box_operator_kernel, continuity_modulus, resize_window, truncate_band
from .operator import P_VALUES, materialize, op_norm, p_label, residual_norms

DEFAULT_TOLERANCES = {
    "residual": 1e-10,
    "modulus_ratio": 10.0,
    "modulus_abs": 1e-8,
    "monotone_noise": 1e-8,
    "agreement": 1e-8,
}


@dataclass
class Check:
    name: str
    claimed_bound: float
    measured_value: float
    tolerance: float = 0.0
    witness: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return bool(self.measured_value <= self.claimed_bound + self.tolerance)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "claimed_bound": float(self.claimed_bound),
            "measured_value": float(self.measured_value),
            "tolerance": float(self.tolerance),
            "pass": self.passed,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class Certificate:
    subject: dict
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "subject": self.subject,
            "checks": [c.as_dict() for c in self.checks],
            "tolerances": self.tolerances,
            "environment": self.environment,
            "profiles": self.profiles,
            "pass": self.passed,
        }

    def summary_rows(self) -> list[list]:
        return [[c.name, float(c.claimed_bound), float(c.measured_value), float(c.tolerance), int(c.passed)] for c in self.checks]


SUMMARY_HEADER = ["name", "claimed_bound", "measured_value", "tolerance", "pass"]


def environment_of(grid: GridSpec) -> dict:
    from . import __version__

    return {**grid.header(), "h": grid.h, "library_version": __version__}


def subject_ids(**items) -> dict:
    out = {}
    for key, obj in items.items():
        if obj is None:
            continue
        if isinstance(obj, Kernel):
            out[key] = {"kind": "kernel", "sha256": kernel_digest(obj), "W_half": obj.half}
        else:
            out[key] = {"kind": "diffop", "sha256": diffop_digest(obj), "terms": len(obj.terms)}
    return out


def check_domination(k: Kernel, beta_claimed: Majorant, name: str = "domination") -> Check:
    """Worst excess ``max_{i,w} (||n[i][w]|| - beta[w])``; passes when it is <= 0."""
    if beta_claimed.beta.shape != k.window_shape:
        raise ValueError(f"majorant window {beta_claimed.beta.shape} does not match kernel window {k.window_shape}")
    excess = k.norms() - beta_claimed.beta
    flat = int(np.argmax(excess))
    idx = np.unravel_index(flat, excess.shape)
    i, w = idx[: k.c], idx[k.c :]
    worst = float(excess[idx])
    witness = {
        "point": [int(v) for v in i],
        "offset": [int(v) - k.half for v in w],
        "norm": float(k.norms()[idx]),
        "beta": float(beta_claimed.beta[w]),
    }
    return Check(name, 0.0, worst, 0.0, witness)


def residual(nK: Kernel, mK: Kernel, p) -> float:
    """``||(I + mat(n))(I + mat(m)) - I||_p`` from freshly materialized matrices."""
    if nK.grid != mK.grid:
        raise ValueError(f"grid mismatch: {nK.grid} vs {mK.grid}")
    eye = np.eye(nK.grid.size * nK.grid.d)
    A = eye + materialize(nK).entries
    B = eye + materialize(mK).entries
    return op_norm(A @ B - eye, p, d=nK.grid.d)


def _both_sided(nK: Kernel, mK: Kernel) -> dict:
    eye = np.eye(nK.grid.size * nK.grid.d)
    A = eye + materialize(nK).entries
    B = eye + materialize(mK).entries
    return {"right": residual_norms(A @ B, nK.grid.d), "left": residual_norms(B @ A, nK.grid.d)}


def p_independence_report(nK: Kernel, mK: Kernel, tol: float = 1e-8) -> Certificate:
    """One kernel m checked as inverse in l1, l2 and l-inf against a single tolerance."""
    checks = [Check(f"residual_p{p_label(p)}", tol, residual(nK, mK, p)) for p in P_VALUES]
    return Certificate(
        subject=subject_ids(n=nK, m=mK),
        checks=checks,
        tolerances={"residual": tol},
        environment=environment_of(nK.grid),
    )


def truncation_certificate(k: Kernel, delta: float) -> list[Check]:
    """``||mat(k) - mat(k_delta)||_p <= tail`` for p in {1, inf}."""
    kd, tail = truncate_band(k, delta)
    diff = materialize(k).entries - materialize(kd).entries
    return [
        Check(f"truncation_p{p_label(p)}", tail, op_norm(diff, p, d=k.d), witness={"delta": float(delta)})
        for p in (1, math.inf)
    ]


@dataclass
class BlockDecayReport:
    cell_k: tuple
    cell_m: tuple
    singular_values: np.ndarray
    ratios: dict

    def as_dict(self) -> dict:
        return {
            "cell_k": list(self.cell_k),
            "cell_m": list(self.cell_m),
            "singular_values": [float(v) for v in self.singular_values],
            "ratios": {str(r): float(v) for r, v in self.ratios.items()},
        }


def cell_points(grid: GridSpec, cell: Sequence[int]) -> np.ndarray:
    """Multi-indices of lattice points with ``x`` in ``cell + (0, 1]^c``, shape (n, c)."""
    x = grid.axis_points()
    per_axis = [np.nonzero((x > k) & (x <= k + 1))[0] for k in cell]
    if any(a.size == 0 for a in per_axis):
        return np.zeros((0, grid.c), dtype=int)
    mesh = np.meshgrid(*per_axis, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def block_singular_values(k: Kernel, cell_k: Sequence[int], cell_m: Sequence[int], ranks=(2, 3, 5, 10), min_points: int = 8) -> BlockDecayReport:
    """Singular values of the block of mat(N) from unit cell ``cell_k`` into ``cell_m``."""
    grid = k.grid
    cell_k = tuple(int(v) for v in np.atleast_1d(cell_k))
    cell_m = tuple(int(v) for v in np.atleast_1d(cell_m))
    cols = cell_points(grid, cell_k)
    rows = cell_points(grid, cell_m)
    if len(cols) < min_points or len(rows) < min_points:
        raise ValueError(
            f"degenerate cell pair {cell_k} -> {cell_m}: {len(cols)} and {len(rows)} lattice points, need {min_points}"
        )
    w = rows[:, None, :] - cols[None, :, :]
    ok = np.all(np.abs(w) <= k.half, axis=-1)
    wi = np.clip(w + k.half, 0, 2 * k.half)
    index = tuple(np.broadcast_to(rows[:, None, a], ok.shape) for a in range(grid.c)) + tuple(wi[..., a] for a in range(grid.c))
    blocks = k.samples[index] * ok[..., None, None] * grid.w_quad
    R, C, d = len(rows), len(cols), grid.d
    mat = blocks.transpose(0, 2, 1, 3).reshape(R * d, C * d)
    sv = np.linalg.svd(mat, compute_uv=False)
    top = sv[0] if sv.size else 0.0
    ratios = {r: (float(sv[r - 1] / top) if top > 0 and r <= sv.size else 0.0) for r in ranks}
    return BlockDecayReport(cell_k, cell_m, sv, ratios)


def decay_profile(k: Kernel) -> dict:
    """Majorant against offset: signed offsets for c = 1, shells ``|w|_inf`` otherwise."""
    beta = k.beta.beta
    if k.c == 1:
        return {"offset": [float(v) for v in np.arange(-k.half, k.half + 1) * k.grid.h], "beta": [float(v) for v in beta]}
    lengths = k.offset_lengths()
    shells = np.arange(k.half + 1)
    vals = [float(beta[np.isclose(lengths, s * k.grid.h)].max()) for s in shells]
    return {"offset": [float(s * k.grid.h) for s in shells], "beta": vals}


def _modulus_checks(nK: Kernel, mK: Kernel, tol: dict, support_box) -> tuple[list[Check], dict]:
    deltas = modulus_deltas(nK.grid)
    om = continuity_modulus(box_operator_kernel(mK), deltas, support_box=support_box).omega
    on = continuity_modulus(box_operator_kernel(nK), deltas, support_box=support_box).omega
    ratio = tol["modulus_ratio"]
    checks = [
        Check("modulus_ratio", ratio * on[0] + tol["modulus_abs"], om[0], 0.0, {"omega_n": on[0], "ratio": ratio}),
    ]
    drops = [max(0.0, om[j] - om[j + 1]) for j in range(len(om) - 1)]
    checks.append(Check("modulus_monotone", 0.0, max(drops, default=0.0), tol["monotone_noise"]))
    profile = {"delta": deltas, "omega_m": om, "omega_n": on, "support_box": support_box}
    return checks, profile


def _decay_check(mK: Kernel, threshold: float, radius: float) -> Check:
    far = mK.offset_lengths() >= radius - 1e-12 * mK.grid.h
    beyond = float(mK.beta.beta[far].max()) if np.any(far) else 0.0
    return Check("offset_decay", threshold, beyond, 0.0, {"radius": radius})


def residual_checks(res: dict, tol: float) -> list[Check]:
    out = []
    for side in ("right", "left"):
        for p in P_VALUES:
            out.append(Check(f"residual_{side}_p{p_label(p)}", tol, res[side][p_label(p)]))
    return out


def certify_inverse(
    nK: Kernel,
    result: Union[InverseResult, Kernel],
    tolerances: Optional[dict] = None,
    support_box: Optional[float] = None,
    decay_threshold: Optional[float] = None,
    decay_radius: Optional[float] = None,
    references: Optional[dict] = None,
    certify_residuals: bool = True,
) -> Certificate:
    """Bundle the closure properties of a claimed inverse kernel.

    Residuals are recomputed from the files' kernels, never taken from
    ``result``.  The offset-decay check runs only when ``decay_threshold``
    is given (radius defaults to A/2); otherwise the profile is reported.
    ``references`` maps a label to another inverse kernel, or to a dict
    ``{m, bound, x_radius, w_radius}``, and adds a sup-discrepancy
    agreement check for each.  With ``certify_residuals=False`` the
    residuals are reported in the profiles only (used for the periodized
    Fourier oracle, which inverts a different operator).  Moduli are
    measured on the box-operator kernels, dead entries zeroed.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    mK = result.m if isinstance(result, InverseResult) else result
    if mK.beta is None:
        raise ValueError("inverse kernel carries no majorant")
    res = _both_sided(nK, mK)
    checks = residual_checks(res, tol["residual"]) if certify_residuals else []
    checks.append(check_domination(mK, mK.beta, "domination_m"))
    mod_checks, mod_profile = _modulus_checks(nK, mK, tol, support_box)
    checks.extend(mod_checks)
    if decay_threshold is not None:
        radius = nK.grid.A / 2 if decay_radius is None else decay_radius
        checks.append(_decay_check(mK, decay_threshold, radius))
        tol = {**tol, "decay_threshold": decay_threshold, "decay_radius": radius}
    for label, ref in sorted((references or {}).items()):
        if isinstance(ref, Kernel):
            ref = {"m": ref}
        bound = ref.get("bound", tol["agreement"])
        x_r, w_r = ref.get("x_radius"), ref.get("w_radius")
        gap = kernel_discrepancy(mK, ref["m"], x_radius=x_r, w_radius=w_r)
        checks.append(Check(f"agreement_{label}", bound, gap, 0.0, {"x_radius": x_r, "w_radius": w_r}))
    profiles = {
        "modulus": mod_profile,
        "decay": decay_profile(mK),
        "residuals": res,
    }
    if isinstance(result, InverseResult):
        profiles["method"] = result.method
    return Certificate(
        subject=subject_ids(n=nK, m=mK),
        checks=checks,
        tolerances=tol,
        environment=environment_of(nK.grid),
        profiles=profiles,
    )


def certify_diffint(D, nK: Kernel, inv: DiffIntInverse, tolerances: Optional[dict] = None) -> Certificate:
    """Residuals of ``(D + N)(A + M)`` both ways plus domination of M."""
    from .algebra import materialize_diffop

    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    forward = materialize_diffop(D).entries + materialize(nK).entries
    backward = materialize_diffop(inv.a).entries + materialize(inv.m).entries
    res = {"right": residual_norms(forward @ backward, nK.d), "left": residual_norms(backward @ forward, nK.d)}
    checks = residual_checks(res, tol["residual"])
    checks.append(check_domination(inv.m, inv.m.beta, "domination_m"))
    return Certificate(
        subject=subject_ids(d=D, n=nK, a=inv.a, m=inv.m),
        checks=checks,
        tolerances=tol,
        environment=environment_of(nK.grid),
        profiles={"decay": decay_profile(inv.m), "residuals": res},
    )


def kernel_discrepancy(a: Kernel, b: Kernel, x_radius: Optional[float] = None, w_radius: Optional[float] = None) -> float:
    """``sup ||a[i][w] - b[i][w]||`` over live entries, optionally restricted to
    ``|x_i|_inf <= x_radius`` and ``|w h|_inf <= w_radius``."""
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    half = max(a.half, b.half)
    # the zero-padded windows agree outside each kernel's own window
    wa, wb = resize_window(a, half), resize_window(b, half)
    grid = a.grid
    mask = wa.live_mask()
    if x_radius is not None:
        near = np.abs(grid.points()).max(axis=-1) <= x_radius + 1e-12
        mask = mask & near.reshape(grid.shape + (1,) * grid.c)
    if w_radius is not None:
        mask = mask & (wa.offset_lengths() <= w_radius + 1e-12)[(None,) * grid.c]
    diff = block_norms(wa.samples - wb.samples)
    return float(diff[mask].max()) if mask.any() else 0.0
