"""Aggregate certificate files under a run directory into CSV tables and figures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .io import write_csv

TABLES = {
    "checks.csv": ["run", "name", "claimed_bound", "measured_value", "tolerance", "pass"],
    "residuals.csv": ["run", "side", "p", "residual"],
    "modulus.csv": ["run", "delta", "omega_m", "omega_n"],
    "decay.csv": ["run", "offset", "beta_m"],
}


class ReportError(RuntimeError):
    pass


def find_certificates(run_dir: Path) -> list[Path]:
    return sorted(p for p in run_dir.rglob("certificate.json") if p.is_file())


def _label(run_dir: Path, path: Path) -> str:
    rel = path.parent.relative_to(run_dir).as_posix()
    return rel if rel else "."


def collect(run_dir: Path) -> dict[str, list[list]]:
    tables: dict[str, list[list]] = {name: [] for name in TABLES}
    for path in find_certificates(run_dir):
        run = _label(run_dir, path)
        try:
            cert = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ReportError(f"{path}: malformed certificate ({exc})") from None
        for c in cert.get("checks", []):
            tables["checks.csv"].append(
                [run, c["name"], float(c["claimed_bound"]), float(c["measured_value"]), float(c["tolerance"]), int(bool(c["pass"]))]
            )
        profiles = cert.get("profiles", {})
        for side, per_p in sorted(profiles.get("residuals", {}).items()):
            for p in ("1", "2", "inf"):
                if p in per_p:
                    tables["residuals.csv"].append([run, side, p, float(per_p[p])])
        mod = profiles.get("modulus")
        if mod:
            for row in zip(mod["delta"], mod["omega_m"], mod["omega_n"]):
                tables["modulus.csv"].append([run] + [float(v) for v in row])
        dec = profiles.get("decay")
        if dec:
            for off, b in zip(dec["offset"], dec["beta"]):
                tables["decay.csv"].append([run, float(off), float(b)])
    return tables


def _by_run(rows: list[list]) -> dict[str, list[list]]:
    out: dict[str, list[list]] = {}
    for r in rows:
        out.setdefault(r[0], []).append(r)
    return out


def render_figures(tables: dict[str, list[list]], out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    meta = {"Software": None}

    mod = _by_run(tables["modulus.csv"])
    if mod:
        fig, ax = plt.subplots(figsize=(6, 4))
        for run, rows in mod.items():
            ax.plot([r[1] for r in rows], [r[2] for r in rows], "o-", label=f"{run} m")
            ax.plot([r[1] for r in rows], [r[3] for r in rows], "s--", label=f"{run} n")
        ax.set_xlabel("delta")
        ax.set_ylabel("omega(delta)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        written.append(out_dir / "modulus.png")
        fig.savefig(written[-1], metadata=meta)
        plt.close(fig)

    dec = _by_run(tables["decay.csv"])
    if dec:
        fig, ax = plt.subplots(figsize=(6, 4))
        for run, rows in dec.items():
            pos = [(r[1], r[2]) for r in rows if r[2] > 0]
            if pos:
                ax.semilogy([p[0] for p in pos], [p[1] for p in pos], label=run)
        ax.set_xlabel("w h")
        ax.set_ylabel("beta_m[w]")
        ax.legend(fontsize=7)
        fig.tight_layout()
        written.append(out_dir / "decay.png")
        fig.savefig(written[-1], metadata=meta)
        plt.close(fig)

    res = tables["residuals.csv"]
    if res:
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = sorted({(r[0], r[1]) for r in res})
        order = {"1": 0, "2": 1, "inf": 2}
        for run, side in labels:
            pts = sorted((order[r[2]], max(r[3], 1e-300)) for r in res if (r[0], r[1]) == (run, side))
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"{run} {side}")
        ax.set_xticks([0, 1, 2], ["1", "2", "inf"])
        ax.set_xlabel("p")
        ax.set_ylabel("residual")
        ax.legend(fontsize=7)
        fig.tight_layout()
        written.append(out_dir / "residuals.png")
        fig.savefig(written[-1], metadata=meta)
        plt.close(fig)
    return written


def build_report(run_dir, out_dir: Optional[Path] = None, figures: bool = True) -> dict[str, Path]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = collect(run_dir)
    paths = {}
    for name, header in TABLES.items():
        paths[name] = out_dir / name
        write_csv(paths[name], header, tables[name])
    if figures:
        for p in render_figures(tables, out_dir):
            paths[p.name] = p
    return paths
