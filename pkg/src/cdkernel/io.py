"""File formats: kernels, difference operators, certificates.

Binary kernel file (any suffix other than ``.json``)::

    CDKERNEL 1\\n
    <header JSON, sorted keys>\\n
    <samples: little-endian float64, row-major x then w then d x d>
    <beta: little-endian float64 over the window, if has_beta>

The JSON kernel variant stores the same header plus flat ``samples`` and
``beta`` lists; Python's float repr makes both variants bit-exact.
Certificates are JSON with sorted keys and every float written with 17
significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np

from .algebra import DiffOp, make_diffop
from .grid import GridSpec, make_grid
from .kernel import Kernel, Majorant, make_kernel

MAGIC = b"CDKERNEL 1\n"
LAYOUT = "row-major x then w then dxd entries"

PathLike = Union[str, Path]


def _grid_from_header(h: dict) -> GridSpec:
    return make_grid(c=h["c"], A=h["A"], N=h["N"], d=h["d"], cap=max(h["N"] ** h["c"], 4096))


def kernel_header(k: Kernel) -> dict:
    return {
        "format": "cdkernel",
        "version": 1,
        **k.grid.header(),
        "W_half": k.half,
        "layout": LAYOUT,
        "endianness": "little",
        "dtype": "float64",
        "count": int(k.samples.size),
        "has_beta": k.beta is not None,
        "beta_count": int(k.beta.beta.size) if k.beta is not None else 0,
    }


def kernel_bytes(k: Kernel) -> bytes:
    head = json.dumps(kernel_header(k), sort_keys=True).encode("ascii")
    parts = [MAGIC, head, b"\n", k.samples.astype("<f8").tobytes()]
    if k.beta is not None:
        parts.append(k.beta.beta.astype("<f8").tobytes())
    return b"".join(parts)


def kernel_digest(k: Kernel) -> str:
    return hashlib.sha256(kernel_bytes(k)).hexdigest()


def _kernel_from_parts(header: dict, samples: np.ndarray, beta) -> Kernel:
    grid = _grid_from_header(header)
    W = header["W_half"]
    shape = grid.shape + (2 * W + 1,) * grid.c + (grid.d, grid.d)
    if samples.size != int(np.prod(shape)):
        raise ValueError(f"kernel file holds {samples.size} samples, header implies {int(np.prod(shape))}")
    majorant = None
    if beta is not None:
        majorant = Majorant.from_profile(np.asarray(beta, dtype=np.float64).reshape((2 * W + 1,) * grid.c), grid.w_quad)
    return make_kernel(grid, W, samples.reshape(shape), beta=majorant)


def write_kernel(path: PathLike, k: Kernel):
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "header": kernel_header(k),
            "samples": k.samples.reshape(-1).tolist(),
            "beta": k.beta.beta.reshape(-1).tolist() if k.beta is not None else None,
        }
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    else:
        path.write_bytes(kernel_bytes(k))


def read_kernel(path: PathLike) -> Kernel:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(MAGIC):
        end = raw.index(b"\n", len(MAGIC))
        header = json.loads(raw[len(MAGIC) : end])
        if header.get("endianness") != "little" or header.get("dtype") != "float64":
            raise ValueError(f"{path}: unsupported sample encoding {header.get('endianness')}/{header.get('dtype')}")
        body = raw[end + 1 :]
        n = header["count"]
        samples = np.frombuffer(body[: 8 * n], dtype="<f8").astype(np.float64)
        beta = None
        if header.get("has_beta"):
            beta = np.frombuffer(body[8 * n : 8 * (n + header["beta_count"])], dtype="<f8").astype(np.float64)
        return _kernel_from_parts(header, samples, beta)
    try:
        doc = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ValueError(f"{path}: not a kernel file") from None
    if not isinstance(doc, dict) or doc.get("header", {}).get("format") != "cdkernel":
        raise ValueError(f"{path}: not a kernel file")
    return _kernel_from_parts(doc["header"], np.asarray(doc["samples"], dtype=np.float64), doc.get("beta"))


def diffop_doc(D: DiffOp) -> dict:
    return {
        "format": "cdkernel-diffop",
        "version": 1,
        **D.grid.header(),
        "tail": D.info.get("tail", 0.0),
        "terms": [{"shift": list(t.shift), "coeffs": t.coeffs.reshape(-1).tolist()} for t in D.terms],
    }


def write_diffop(path: PathLike, D: DiffOp):
    Path(path).write_text(json.dumps(diffop_doc(D), sort_keys=True) + "\n")


def diffop_digest(D: DiffOp) -> str:
    return hashlib.sha256(json.dumps(diffop_doc(D), sort_keys=True).encode()).hexdigest()


def read_diffop(path: PathLike) -> DiffOp:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "cdkernel-diffop":
        raise ValueError(f"{path}: not a difference-operator file")
    grid = _grid_from_header(doc)
    shape = grid.shape + (grid.d, grid.d)
    terms = [(t["shift"], np.asarray(t["coeffs"], dtype=np.float64).reshape(shape)) for t in doc["terms"]]
    return make_diffop(grid, terms, tail=doc.get("tail", 0.0))


def read_operator(path: PathLike) -> Union[Kernel, DiffOp]:
    """Read either a kernel or a difference-operator file."""
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        try:
            doc = json.loads(raw)
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError(f"{path}: unrecognised operator file") from None
        if isinstance(doc, dict) and doc.get("format") == "cdkernel-diffop":
            return read_diffop(path)
    return read_kernel(path)


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be written to a certificate")
    return format(x, ".16e")


def dumps_stable(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with sorted keys and 17-significant-digit floats."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_stable(v, indent, _level + 1)}" for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps_stable(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps_stable(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: PathLike, obj: Any):
    Path(path).write_text(dumps_stable(obj) + "\n")


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(path: PathLike, header: list[str], rows: list[list]):
    Path(path).write_text(csv_text(header, rows))
