"""Plain-text verification report plus figures rendered from output tables.

``generate_report(outdir)`` scans an output directory for the tables the
CLI writes (run.csv, sweep_kappa.csv, sweep_lambda.csv, sweep_kappa_conv.csv,
attractor_distances.csv), re-evaluates the bound checks they encode, writes
``report.txt`` with one PASS/FAIL line per check, and renders the matching
figures as PNG files next to the tables.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import List, Optional

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .diagnostics import read_csv_columns  # noqa: E402


class Check:
    def __init__(self, name: str, ok: bool, detail: str):
        self.name, self.ok, self.detail = name, ok, detail

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def _finite(a: np.ndarray) -> np.ndarray:
    return a[np.isfinite(a)]


def _margin_check(cols, key: str, label: str, checks: List[Check]):
    if key in cols:
        m = _finite(cols[key])
        if m.size:
            worst = float(np.min(m))
            checks.append(Check(label, worst >= -1e-6 * max(1.0, abs(worst)), f"worst margin {worst:.3e}"))


def _report_run(path: Path, checks: List[Check], figures: List[Path]):
    comments, cols = read_csv_columns(path)
    t = cols["t"]
    res = _finite(cols["budget_residual"])
    if res.size:
        worst = float(np.max(np.abs(res)))
        checks.append(Check(f"{path.name}: energy budget residual", worst < 1e-2, f"max |residual| {worst:.3e}"))
    _margin_check(cols, "lp2_margin", f"{path.name}: L^2 damping bound", checks)
    _margin_check(cols, "lpinf_margin", f"{path.name}: L^inf damping bound", checks)
    _margin_check(cols, "linf_decay_margin", f"{path.name}: L^inf decay bound", checks)
    _margin_check(cols, "linf_uniform_margin", f"{path.name}: uniform L^inf bound", checks)

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(t, cols["l2"], label="$L^2$")
    axes[0].plot(t, cols["hs_1"], label="$H^1$")
    axes[0].plot(t, cols["linf"], label="$L^\\infty$")
    axes[0].set_xlabel("t")
    axes[0].set_title("norms")
    axes[0].legend(fontsize=8)
    live = np.isfinite(cols["budget_residual"])
    axes[1].semilogy(t[live], np.abs(cols["budget_residual"][live]) + 1e-300, color="k")
    axes[1].set_xlabel("t")
    axes[1].set_title("|budget residual|")
    live = np.isfinite(cols["eps"])
    axes[2].plot(t[live], cols["eps"][live], color="tab:red")
    axes[2].set_xlabel("t")
    axes[2].set_title(r"$\varepsilon^\kappa(t)$")
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    figures.append(out)


def _report_kappa_sweep(path: Path, checks: List[Check], figures: List[Path]):
    comments, cols = read_csv_columns(path)
    k = cols["kappa"]
    eps = cols["eps_T"]
    ok = bool(np.all(np.diff(eps) < 0)) if eps.size > 1 else True
    checks.append(Check(f"{path.name}: eps^kappa strictly decreasing in kappa", ok,
                        f"eps range [{eps.min():.3e}, {eps.max():.3e}]"))
    if eps.size > 1:
        ratio = float(eps[-1] / eps[0])
        checks.append(Check(f"{path.name}: smallest-kappa eps <= half of largest", ratio <= 0.5,
                            f"ratio {ratio:.3f}"))
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.loglog(k, eps, "o-")
    ax.set_xlabel(r"$\kappa$")
    ax.set_ylabel(r"$\varepsilon^\kappa(T)$")
    ax.set_title("dissipation-rate sweep")
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    figures.append(out)


def _report_convergence_sweep(path: Path, parameter: str, checks: List[Check], figures: List[Path]):
    comments, cols = read_csv_columns(path)
    v = cols[parameter]
    err_cols = [c for c in cols if c.startswith("sup_err_s")]
    for ec in err_cols:
        e = cols[ec]
        live = np.isfinite(e) & (v > 0)
        ok = bool(np.all(np.diff(e[live]) < 0)) if live.sum() > 1 else True
        checks.append(Check(f"{path.name}: {ec} monotone decreasing", ok, f"errors {e[live]}"))
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for ec in err_cols:
        live = np.isfinite(cols[ec]) & (v > 0)
        ax.loglog(v[live], cols[ec][live], "o-", label=ec)
    ax.set_xlabel(parameter)
    ax.set_ylabel("sup error")
    ax.set_title(f"convergence as {parameter} -> 0")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    figures.append(out)


def _report_attractor(path: Path, checks: List[Check], figures: List[Path]):
    comments, cols = read_csv_columns(path)
    lam = cols["lambda"]
    d = cols["distance_h1"]
    ok = bool(np.all(np.diff(d[np.argsort(lam)]) >= 0)) if d.size > 1 else True
    checks.append(Check(f"{path.name}: semi-distance nonincreasing as lambda -> 0", ok,
                        f"distances {d}"))
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.plot(lam, d, "o-")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$H^1$ semi-distance")
    ax.set_title("attractor upper-semicontinuity probe")
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    figures.append(out)


def generate_report(outdir) -> Path:
    outdir = Path(outdir)
    checks: List[Check] = []
    figures: List[Path] = []
    found = False
    for path in sorted(outdir.glob("*.csv")):
        head = path.read_text().splitlines()[0] if path.stat().st_size else ""
        try:
            if "kappa sweep" in head:
                _report_kappa_sweep(path, checks, figures)
            elif "lambda convergence sweep" in head:
                _report_convergence_sweep(path, "lambda", checks, figures)
            elif "kappa convergence sweep" in head:
                _report_convergence_sweep(path, "kappa", checks, figures)
            elif "attractor" in head:
                _report_attractor(path, checks, figures)
            elif "asclab record" in head:
                _report_run(path, checks, figures)
            else:
                continue
            found = True
        except Exception as exc:  # noqa: BLE001 - a bad table must not block the report
            checks.append(Check(f"{path.name}", False, f"unreadable table: {exc}"))
    report = outdir / "report.txt"
    lines = ["asclab verification report", "=" * 26, ""]
    if not found:
        lines.append("no recognized tables found")
    lines += [c.line() for c in checks]
    lines.append("")
    lines.append(f"figures: {', '.join(f.name for f in figures) if figures else 'none'}")
    passed = sum(1 for c in checks if c.ok)
    lines.append(f"summary: {passed}/{len(checks)} checks passed")
    report.write_text("\n".join(lines) + "\n")
    return report
