"""Command-line front end: gen | invert | compose | verify | report.

Exit codes: 0 pass, 1 check failure, 2 usage or I/O error, 3 solver failure.

Run configuration may come from ``--config FILE``, either a JSON object or
flat ``key=value`` lines (``#`` starts a comment).  Recognised keys:
grid, family, method, tol, decay_tol, seed, and ``param.NAME`` for family
parameters (a JSON config may instead hold a ``params`` object).  Flags
given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .algebra import DiffOp, compose_dd, compose_dn, compose_nd, compose_nn, materialize_diffop
from .generators import FAMILIES, generate
from .grid import make_grid
from .inversion import (
    DiffIntInverse,
    InversionError,
    NotInvertibleError,
    invert_dense,
    invert_diffint,
    invert_diffop,
    invert_fourier,
    invert_neumann,
)
from .io import diffop_digest, kernel_digest, read_operator, write_csv, write_diffop, write_json, write_kernel
from .kernel import Kernel
from .operator import ConvergenceError, materialize, residual_norms
from .report import ReportError, build_report
from .verify import (
    DEFAULT_TOLERANCES,
    SUMMARY_HEADER,
    Certificate,
    Check,
    certify_diffint,
    certify_inverse,
    check_domination,
    environment_of,
    residual_checks,
    subject_ids,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
METHODS = ("neumann", "dense", "fourier")
SOLVER_ERRORS = (InversionError, ConvergenceError, ValueError, np.linalg.LinAlgError)
DEFAULT_GRID = "20,1024"
COMPOSE_TOL = 1e-12


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    grid: Optional[dict] = None
    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    method: str = "dense"
    tol: float = 1e-10
    decay_tol: Optional[float] = None
    tolerances: dict = field(default_factory=dict)
    seed: Optional[int] = None
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_value(text: str):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_pairs(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def parse_grid(text, family: Optional[str] = None) -> dict:
    if isinstance(text, dict):
        spec = dict(text)
    else:
        parts = [p for p in str(text).split(",") if p.strip()]
        if not 2 <= len(parts) <= 4:
            raise UsageError(f"--grid expects A,N[,c[,d]], got {text!r}")
        spec = {"A": float(parts[0]), "N": int(parts[1])}
        if len(parts) > 2:
            spec["c"] = int(parts[2])
        if len(parts) > 3:
            spec["d"] = int(parts[3])
    spec.setdefault("c", 1)
    spec.setdefault("d", 2 if family == "matrix-d2" else 1)
    return {"A": float(spec["A"]), "N": int(spec["N"]), "c": int(spec["c"]), "d": int(spec["d"])}


def load_config(path: Path) -> dict:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON config ({exc})") from None
        return doc
    doc: dict = {"params": {}}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("param."):
            doc["params"][key[len("param.") :]] = parse_value(value)
        else:
            doc[key] = parse_value(value) if key != "grid" else value
    return doc


def build_config(args) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else {}
    family = getattr(args, "family", None) or base.get("family")
    if family is not None and family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    params = {**base.get("params", {}), **parse_pairs(getattr(args, "param", None))}
    grid_text = getattr(args, "grid", None) or base.get("grid")
    grid = parse_grid(grid_text or DEFAULT_GRID, family) if family is not None or grid_text else None
    seed = getattr(args, "seed", None)
    seed = base.get("seed") if seed is None else seed
    tol = getattr(args, "tol", None)
    tol = base.get("tol", 1e-10) if tol is None else tol
    decay = getattr(args, "decay_tol", None)
    decay = base.get("decay_tol") if decay is None else decay
    method = getattr(args, "method", None) or base.get("method", "dense")
    tolerances = {**base.get("tolerances", {}), **parse_pairs(getattr(args, "check_tol", None))}
    return RunConfig(
        command=args.command,
        grid=grid,
        family=family,
        params=params,
        method=method,
        tol=float(tol),
        decay_tol=None if decay is None else float(decay),
        tolerances={k: float(v) for k, v in tolerances.items()},
        seed=None if seed is None else int(seed),
    )


def _digest(obj) -> str:
    return kernel_digest(obj) if isinstance(obj, Kernel) else diffop_digest(obj)


def _write_operator(out: Path, stem: str, obj) -> str:
    if isinstance(obj, Kernel):
        name = f"{stem}.kernel"
        write_kernel(out / name, obj)
    else:
        name = f"{stem}.diffop.json"
        write_diffop(out / name, obj)
    return name


def _write_manifest(out: Path, cfg: RunConfig, outputs: dict, extra: Optional[dict] = None):
    doc = {"config": cfg.to_dict(), "library_version": __version__, "outputs": outputs}
    if extra:
        doc.update(extra)
    write_json(out / "manifest.json", doc)


def _write_certificate(out: Path, cert: Certificate):
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "certificate.json", cert.as_dict())
    write_csv(out / "summary.csv", SUMMARY_HEADER, cert.summary_rows())


def _print_summary(label: str, cert: Certificate):
    for row in cert.summary_rows():
        name, claimed, measured, tol, ok = row
        print(f"{label},{name},{claimed:.6e},{measured:.6e},{tol:.3e},{'pass' if ok else 'FAIL'}")


def _write_error(out: Path, method: str, exc: Exception) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "error": "solver failure",
        "method": method,
        "type": type(exc).__name__,
        "message": str(exc),
        "status": "not invertible at this resolution" if isinstance(exc, (NotInvertibleError, np.linalg.LinAlgError)) else "solver failure",
    }
    write_json(out / "error.json", doc)
    print(f"{method},error,{doc['status']}: {exc}", file=sys.stderr)
    return doc


def _instance(cfg: RunConfig):
    if cfg.family is None:
        raise UsageError("a --family (or --config with family) is required")
    grid = make_grid(cfg.grid["c"], cfg.grid["A"], cfg.grid["N"], cfg.grid["d"])
    try:
        return generate(cfg.family, grid, cfg.params, seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(f"{cfg.family}: {exc}") from None


def cmd_gen(args) -> int:
    cfg = build_config(args)
    inst = _instance(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = "n" if inst.is_kernel else "d"
    name = _write_operator(out, stem, inst.obj)
    _write_manifest(out, cfg, {name: _digest(inst.obj)}, {"family_params": inst.params, "generator_log": inst.log})
    for key, value in sorted(inst.log.items()):
        print(f"{key},{value}")
    return EXIT_PASS


def _load_inputs(args, cfg: RunConfig):
    kernel = diffop = None
    if args.kernel:
        kernel = read_operator(args.kernel)
        cfg.inputs["kernel"] = {"path": str(args.kernel), "sha256": _digest(kernel)}
    if args.diffop:
        diffop = read_operator(args.diffop)
        cfg.inputs["diffop"] = {"path": str(args.diffop), "sha256": _digest(diffop)}
    if kernel is None and diffop is None:
        inst = _instance(cfg)
        if inst.is_kernel:
            kernel = inst.obj
        else:
            diffop = inst.obj
    if isinstance(kernel, DiffOp):
        kernel, diffop = (None, kernel) if diffop is None else (kernel, diffop)
    if isinstance(kernel, DiffOp) or isinstance(diffop, Kernel):
        raise UsageError("--kernel must name a kernel file and --diffop a difference-operator file")
    return kernel, diffop


def _methods(cfg: RunConfig) -> list[str]:
    if cfg.method == "all":
        return list(METHODS)
    if cfg.method not in METHODS:
        raise UsageError(f"unknown method {cfg.method!r}")
    return [cfg.method]


def _tolerances(cfg: RunConfig) -> dict:
    return {**cfg.tolerances, "residual": cfg.tol}


def _invert_kernel(n: Kernel, cfg: RunConfig, out: Path) -> int:
    solvers = {"neumann": invert_neumann, "dense": invert_dense, "fourier": invert_fourier}
    results, status = {}, EXIT_PASS
    outputs = {}
    for method in _methods(cfg):
        try:
            results[method] = solvers[method](n)
        except SOLVER_ERRORS as exc:
            _write_error(out / method, method, exc)
            outputs[f"{method}/error.json"] = "error"
            status = EXIT_SOLVER
    A = n.grid.A
    for method, res in results.items():
        refs = {}
        if method == "dense" and "fourier" in results:
            # the periodized oracle only matches away from the box edges
            refs["fourier"] = {"m": results["fourier"].m, "bound": cfg.tolerances.get("agreement_fourier", 1e-6), "x_radius": A / 2, "w_radius": A / 2}
        if method == "dense" and "neumann" in results:
            tail = results["neumann"].tail_report["geometric_tail"]
            refs["neumann"] = {"m": results["neumann"].m, "bound": cfg.tolerances.get("agreement", 1e-8) + tail}
        # the oracle inverts the periodized operator, so box residuals are informational
        cert = certify_inverse(
            n, res, _tolerances(cfg), decay_threshold=cfg.decay_tol, references=refs, certify_residuals=method != "fourier"
        )
        cert.profiles["diagnostics"] = _clean(res.diagnostics)
        cert.profiles["tail_report"] = _clean(res.tail_report)
        sub = out / method
        _write_certificate(sub, cert)
        name = _write_operator(sub, "m", res.m)
        outputs[f"{method}/{name}"] = _digest(res.m)
        outputs[f"{method}/certificate.json"] = "certificate"
        _print_summary(method, cert)
        if not cert.passed and status == EXIT_PASS:
            status = EXIT_FAIL
    _write_manifest(out, cfg, outputs)
    return status


def _clean(obj):
    # drop non-finite and non-JSON values from diagnostics
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if _clean(v) is not None}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, str, int, np.integer)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return None


def _invert_diffop_only(D: DiffOp, cfg: RunConfig, out: Path) -> int:
    try:
        a = invert_diffop(D)
    except SOLVER_ERRORS as exc:
        _write_error(out / "diffop", "diffop", exc)
        _write_manifest(out, cfg, {"diffop/error.json": "error"})
        return EXIT_SOLVER
    product = materialize_diffop(D).entries @ materialize_diffop(a).entries
    back = materialize_diffop(a).entries @ materialize_diffop(D).entries
    res = {"right": residual_norms(product, D.grid.d), "left": residual_norms(back, D.grid.d)}
    cert = Certificate(
        subject=subject_ids(d=D, a=a),
        checks=residual_checks(res, cfg.tol),
        tolerances={"residual": cfg.tol},
        environment=environment_of(D.grid),
        profiles={"residuals": res, "diagnostics": _clean({"q": a.info["q"], "terms": a.info["terms"], "tail": a.info["tail"]})},
    )
    sub = out / "diffop"
    _write_certificate(sub, cert)
    name = _write_operator(sub, "a", a)
    _write_manifest(out, cfg, {f"diffop/{name}": _digest(a), "diffop/certificate.json": "certificate"})
    _print_summary("diffop", cert)
    return EXIT_PASS if cert.passed else EXIT_FAIL


def _invert_pair(D: DiffOp, n: Kernel, cfg: RunConfig, out: Path) -> int:
    inner = [m for m in _methods(cfg) if m != "fourier"] or ["dense"]
    status, outputs = EXIT_PASS, {}
    for method in inner:
        try:
            inv = invert_diffint(D, n, method=method)
        except SOLVER_ERRORS as exc:
            _write_error(out / f"diffint-{method}", method, exc)
            outputs[f"diffint-{method}/error.json"] = "error"
            status = EXIT_SOLVER
            continue
        cert = certify_diffint(D, n, inv, _tolerances(cfg))
        cert.profiles["diagnostics"] = _clean(inv.diagnostics)
        sub = out / f"diffint-{method}"
        _write_certificate(sub, cert)
        outputs[f"diffint-{method}/{_write_operator(sub, 'a', inv.a)}"] = _digest(inv.a)
        outputs[f"diffint-{method}/{_write_operator(sub, 'm', inv.m)}"] = _digest(inv.m)
        _print_summary(f"diffint-{method}", cert)
        if not cert.passed and status == EXIT_PASS:
            status = EXIT_FAIL
    _write_manifest(out, cfg, outputs)
    return status


def cmd_invert(args) -> int:
    cfg = build_config(args)
    kernel, diffop = _load_inputs(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if kernel is not None and diffop is not None:
        return _invert_pair(diffop, kernel, cfg, out)
    if diffop is not None:
        return _invert_diffop_only(diffop, cfg, out)
    return _invert_kernel(kernel, cfg, out)


def _dense(obj) -> np.ndarray:
    return (materialize(obj) if isinstance(obj, Kernel) else materialize_diffop(obj)).entries


def cmd_compose(args) -> int:
    cfg = build_config(args)
    left, right = read_operator(args.left), read_operator(args.right)
    cfg.inputs = {
        "left": {"path": str(args.left), "sha256": _digest(left)},
        "right": {"path": str(args.right), "sha256": _digest(right)},
    }
    if left.grid != right.grid:
        raise UsageError(f"grid mismatch: {left.grid} vs {right.grid}")
    rule = {
        (True, True): compose_nn,
        (False, True): compose_dn,
        (True, False): compose_nd,
        (False, False): compose_dd,
    }[(isinstance(left, Kernel), isinstance(right, Kernel))]
    product = rule(left, right)
    gap = float(np.abs(_dense(product) - _dense(left) @ _dense(right)).max())
    tol = cfg.tolerances.get("compose", COMPOSE_TOL)
    checks = [Check("compose_exact", tol, gap)]
    if isinstance(product, Kernel):
        checks.append(check_domination(product, product.beta, "domination_product"))
    cert = Certificate(
        subject=subject_ids(left=left, right=right, product=product),
        checks=checks,
        tolerances={"compose": tol},
        environment=environment_of(left.grid),
        profiles={"clipped_mass": product.info.get("clipped_mass", 0.0)},
    )
    out = Path(args.out)
    _write_certificate(out, cert)
    name = _write_operator(out, "product", product)
    _write_manifest(out, cfg, {name: _digest(product), "certificate.json": "certificate"})
    _print_summary(rule.__name__, cert)
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    cfg = build_config(args)
    n = read_operator(args.kernel)
    m = read_operator(args.inverse)
    cfg.inputs = {"kernel": {"path": str(args.kernel), "sha256": _digest(n)}, "inverse": {"path": str(args.inverse), "sha256": _digest(m)}}
    if not isinstance(n, Kernel) or not isinstance(m, Kernel):
        raise UsageError("verify expects kernel files for --kernel and --inverse")
    if n.grid != m.grid:
        raise UsageError(f"grid mismatch: {n.grid} vs {m.grid}")
    if args.diffop:
        D = read_operator(args.diffop)
        a = read_operator(args.a) if args.a else None
        if not isinstance(D, DiffOp) or not isinstance(a, DiffOp):
            raise UsageError("--diffop and --a must both name difference-operator files")
        cert = certify_diffint(D, n, DiffIntInverse(a=a, m=m, residuals={}), _tolerances(cfg))
    else:
        cert = certify_inverse(n, m, _tolerances(cfg), decay_threshold=cfg.decay_tol)
    out = Path(args.out)
    _write_certificate(out, cert)
    _write_manifest(out, cfg, {"certificate.json": "certificate"})
    _print_summary("verify", cert)
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        print(f"error: run directory {run_dir} does not exist", file=sys.stderr)
        return EXIT_USAGE
    paths = build_report(run_dir, args.out, figures=not args.no_figures)
    for name in sorted(paths):
        print(f"wrote,{paths[name]}")
    return EXIT_PASS


def _add_run_flags(p: argparse.ArgumentParser, family=True):
    p.add_argument("--config", type=Path, help="JSON or key=value run configuration")
    if family:
        p.add_argument("--family", help=f"instance family: {', '.join(FAMILIES)}")
        p.add_argument("--grid", help=f"A,N[,c[,d]] (default {DEFAULT_GRID})")
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="family parameter (repeatable)")
        p.add_argument("--seed", type=int, help="seed for random families (PCG64)")
    p.add_argument("--out", required=True, help="output directory")


def _add_tol_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, help="residual tolerance (default 1e-10)")
    p.add_argument("--decay-tol", type=float, help="require beta_m below this value from |w h| = A/2 on")
    p.add_argument(
        "--check-tol",
        action="append",
        metavar="NAME=VALUE",
        help=f"override a check tolerance ({', '.join(sorted(DEFAULT_TOLERANCES))}, agreement_fourier)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdkernel",
        description="Generate, compose, invert and certify discretized integral-operator kernels.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write an instance file and manifest")
    _add_run_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("invert", help="invert 1 + N (or D, or D + N) and certify the result")
    _add_run_flags(p)
    p.add_argument("--kernel", type=Path, help="kernel file (otherwise generated from --family)")
    p.add_argument("--diffop", type=Path, help="difference-operator file")
    p.add_argument("--method", choices=list(METHODS) + ["all"], help="inversion route (default dense)")
    _add_tol_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("compose", help="compose two operator files and check exactness")
    _add_run_flags(p, family=False)
    p.add_argument("--left", type=Path, required=True)
    p.add_argument("--right", type=Path, required=True)
    p.add_argument("--check-tol", action="append", metavar="NAME=VALUE", help="e.g. compose=1e-12")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("verify", help="re-certify an existing (n, m) pair")
    _add_run_flags(p, family=False)
    p.add_argument("--kernel", type=Path, required=True, help="kernel n")
    p.add_argument("--inverse", type=Path, required=True, help="claimed inverse kernel m")
    p.add_argument("--diffop", type=Path, help="difference operator D for a D + N pair")
    p.add_argument("--a", type=Path, help="claimed inverse difference operator of D")
    _add_tol_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="aggregate certificates into CSV tables and figures")
    p.add_argument("run_dir", help="directory searched recursively for certificate.json")
    p.add_argument("--out", help="output directory (default RUN_DIR/report)")
    p.add_argument("--no-figures", action="store_true", help="write CSV tables only")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the message; report its status as a return value
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ReportError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
