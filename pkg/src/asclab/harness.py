"""Parameter sweeps, convergence fits, and attractor sampling.

Sweep members run in a thread pool (numpy transforms release the GIL); each
member is internally sequential and fully determined by its config, so
outputs are byte-identical regardless of the parallelism degree.  Every
table row carries the member config fingerprint.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import io as ascio
from .config import ExperimentConfig, build_forcing, build_grid, build_params, build_symbol, build_theta0, default_threads, run_kwargs
from .diagnostics import TrajectoryRecord, dissipation_rate
from .dynamics import ForcingSpec, ModelParams, run
from .errors import NumericalFault
from .profiles import random_smooth_field
from .spectral import SpectralField
from .tangent import attractor_distance


def _fmt(x: float) -> str:
    return repr(float(x))


def map_ordered(fn, items, workers: Optional[int] = None) -> list:
    """Apply ``fn`` over ``items`` preserving order; thread pool when workers > 1."""
    workers = workers if workers is not None else default_threads()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# log-log regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points_used: int


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> Optional[FitResult]:
    """Least-squares fit of log10 y against log10 x; None for < 2 usable points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if int(np.sum(ok)) < 2:
        return None
    lx, ly = np.log10(x[ok]), np.log10(y[ok])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return FitResult(slope=float(coef[0]), intercept=float(coef[1]), r_squared=r2, points_used=int(np.sum(ok)))


# ---------------------------------------------------------------------------
# shared member machinery
# ---------------------------------------------------------------------------


def run_from_config(cfg: ExperimentConfig, capture: Optional[bool] = None) -> TrajectoryRecord:
    grid = build_grid(cfg)
    sym = build_symbol(cfg)
    params = build_params(cfg, sym)
    forcing = build_forcing(cfg, grid, sym)
    theta0 = build_theta0(cfg, grid, sym)
    kw = run_kwargs(cfg)
    if capture is not None:
        kw["capture_fields"] = capture
    return run(params, theta0, forcing, cfg["time"]["t_end"], cfg["time"]["dt"], **kw)


def _member_config(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    return cfg.with_model_value(cfg["sweep"]["parameter"], value)


# ---------------------------------------------------------------------------
# kappa sweep: anomalous-dissipation trend
# ---------------------------------------------------------------------------


@dataclass
class KappaRow:
    kappa: float
    eps_T: float
    eps_tail_max: float
    fingerprint: str
    error: str = ""


@dataclass
class KappaSweepResult:
    rows: List[KappaRow]
    fit: Optional[FitResult]
    strictly_decreasing: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("# asclab kappa sweep\n")
            if self.fit:
                fh.write(
                    f"# fit: slope={_fmt(self.fit.slope)} intercept={_fmt(self.fit.intercept)} "
                    f"r2={_fmt(self.fit.r_squared)} points={self.fit.points_used}\n"
                )
            fh.write(f"# strictly_decreasing={str(self.strictly_decreasing).lower()}\n")
            fh.write("kappa,eps_T,eps_tail_max,fingerprint,error\n")
            for r in self.rows:
                fh.write(f"{_fmt(r.kappa)},{_fmt(r.eps_T)},{_fmt(r.eps_tail_max)},{r.fingerprint},{r.error}\n")


def sweep_kappa(cfg: ExperimentConfig, workers: Optional[int] = None) -> KappaSweepResult:
    """Run each kappa to the horizon from identical data; tabulate eps^kappa(T).

    The limsup proxy is reported two ways per member: the value at the
    horizon and the maximum over the final 20% of samples.
    """
    if cfg["sweep"]["parameter"] != "kappa":
        raise ValueError("config sweep parameter must be 'kappa'")
    if cfg["model"]["lambda"] <= 0:
        raise ValueError("kappa sweep requires fixed lambda > 0")
    values = cfg["sweep"]["values"]

    def member(kappa: float) -> KappaRow:
        mcfg = _member_config(cfg, kappa)
        try:
            rec = run_from_config(mcfg, capture=False)
            series = dissipation_rate(rec, kappa)
            t_end = series.t[-1]
            tail = series.t >= 0.8 * t_end
            return KappaRow(
                kappa=kappa,
                eps_T=float(series.eps[-1]),
                eps_tail_max=float(np.max(series.eps[tail])),
                fingerprint=mcfg.fingerprint(),
            )
        except NumericalFault as exc:
            return KappaRow(kappa=kappa, eps_T=math.nan, eps_tail_max=math.nan,
                            fingerprint=mcfg.fingerprint(), error=str(exc))

    rows = map_ordered(member, values, workers)
    good = [r for r in rows if not r.error]
    eps = [r.eps_T for r in good]
    dec = all(b < a for a, b in zip(eps, eps[1:])) and len(good) == len(rows)
    fit = fit_loglog([r.kappa for r in good], eps) if len(good) > 1 else None
    return KappaSweepResult(rows=rows, fit=fit, strictly_decreasing=dec)


def analytic_linear_eps(cfg: ExperimentConfig, kappa: float) -> float:
    """Closed-form eps^kappa(T) of the u = 0 linearization (test oracle)."""
    grid = build_grid(cfg)
    sym = build_symbol(cfg)
    params = ModelParams(lam=cfg["model"]["lambda"], kappa=kappa, gamma=cfg["model"]["gamma"], sym=sym)
    forcing = build_forcing(cfg, grid, sym)
    theta0 = build_theta0(cfg, grid, sym)
    keep = grid.dealias_keep & sym.state_keep_mask(grid)
    T = cfg["time"]["t_end"]
    sig = params.lam * (grid.k_abs + 1.0) + kappa * grid.lambda_multiplier(params.gamma)
    th0 = theta0.coeffs * keep
    sc = forcing.field.coeffs * keep
    ksq = grid.lambda_multiplier(2.0)
    total = 0.0
    # integral of |k|^2 |theta_hat(k,t)|^2 with theta_hat = a e^{-sig t} + b,
    # b = S/sig (sig > 0): int_0^T = |a|^2 (1-e^{-2sT})/(2s) + 2Re(a conj(b)) (1-e^{-sT})/s + |b|^2 T
    live = (sig > 0) & keep
    a = np.where(live, th0 - np.where(live, sc / np.where(live, sig, 1.0), 0.0), th0)
    b = np.where(live, sc / np.where(live, sig, 1.0), 0.0)
    s = np.where(live, sig, 1.0)
    i_aa = np.abs(a) ** 2 * np.where(live, -np.expm1(-2 * s * T) / (2 * s), T)
    i_ab = 2 * np.real(a * np.conj(b)) * np.where(live, -np.expm1(-s * T) / s, 0.0)
    i_bb = np.abs(b) ** 2 * T
    total = float(np.sum(ksq * (i_aa + i_ab + i_bb)) * grid.volume)
    return kappa * total / T


# ---------------------------------------------------------------------------
# lambda / kappa convergence sweeps
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    value: float
    sup_errors: Dict[float, float]  # s -> sup_{t<=T} ||theta^(v) - theta^(ref)||_{H^s}
    fingerprint: str
    error: str = ""


@dataclass
class ConvergenceSweepResult:
    parameter: str
    rows: List[ConvergenceRow]
    fits: Dict[float, Optional[FitResult]]
    s_list: List[float]
    reference_fingerprint: str

    def sup_errors(self, s: float) -> List[float]:
        return [r.sup_errors.get(float(s), math.nan) for r in self.rows]

    def monotone_decreasing(self, s: float = None) -> bool:
        s = self.s_list[0] if s is None else s
        e = [v for v in self.sup_errors(s) if not math.isnan(v)]
        return all(b < a or (a == b == 0.0) for a, b in zip(e, e[1:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# asclab {self.parameter} convergence sweep vs {self.parameter}=0 reference\n")
            fh.write(f"# reference_fingerprint={self.reference_fingerprint}\n")
            for s in self.s_list:
                f = self.fits.get(s)
                if f:
                    fh.write(
                        f"# fit_s{_fmt(s)}: slope={_fmt(f.slope)} intercept={_fmt(f.intercept)} "
                        f"r2={_fmt(f.r_squared)} points={f.points_used}\n"
                    )
            cols = [self.parameter] + [f"sup_err_s{_fmt(s)}" for s in self.s_list] + ["fingerprint", "error"]
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                vals = [_fmt(r.value)] + [_fmt(r.sup_errors.get(s, math.nan)) for s in self.s_list]
                fh.write(",".join(vals + [r.fingerprint, r.error]) + "\n")


def _sweep_against_reference(cfg: ExperimentConfig, parameter: str, s_list, workers) -> ConvergenceSweepResult:
    if cfg["sweep"]["parameter"] != parameter:
        raise ValueError(f"config sweep parameter must be {parameter!r}")
    s_list = [float(s) for s in (s_list if s_list is not None else cfg["sweep"]["s_list"])]
    values = cfg["sweep"]["values"]
    ref_cfg = cfg.with_model_value(parameter, 0.0)

    jobs = [ref_cfg] + [_member_config(cfg, v) for v in values]
    results = map_ordered(lambda c: _captured_or_fault(c), jobs, workers)
    ref_rec, ref_err = results[0]
    if ref_err:
        raise NumericalFault(f"reference {parameter}=0 run failed: {ref_err}")

    rows: List[ConvergenceRow] = []
    for v, (rec, err) in zip(values, results[1:]):
        if err:
            rows.append(ConvergenceRow(value=v, sup_errors={}, fingerprint=_member_config(cfg, v).fingerprint(), error=err))
            continue
        if len(rec.fields) != len(ref_rec.fields):
            raise ValueError("member and reference sample counts differ")
        sups = {s: 0.0 for s in s_list}
        for fa, fb in zip(rec.fields, ref_rec.fields):
            d = fa - fb
            for s in s_list:
                sups[s] = max(sups[s], d.l2() if s == 0.0 else d.hs(s))
        rows.append(ConvergenceRow(value=v, sup_errors=sups, fingerprint=_member_config(cfg, v).fingerprint()))

    fits = {}
    for s in s_list:
        pts = [(r.value, r.sup_errors[s]) for r in rows if not r.error and r.value > 0]
        fits[s] = fit_loglog([p[0] for p in pts], [p[1] for p in pts]) if len(pts) > 1 else None
    return ConvergenceSweepResult(
        parameter=parameter, rows=rows, fits=fits, s_list=s_list,
        reference_fingerprint=ref_cfg.fingerprint(),
    )


def _captured_or_fault(cfg: ExperimentConfig):
    try:
        return run_from_config(cfg, capture=True), ""
    except NumericalFault as exc:
        return None, str(exc)


def sweep_lambda(cfg: ExperimentConfig, s_list=None, workers: Optional[int] = None) -> ConvergenceSweepResult:
    """Errors sup_{t<=T} ||theta^(lam) - theta^(0)||_{H^s} against the lam = 0 run."""
    if cfg["model"]["kappa"] <= 0:
        raise ValueError("lambda sweep requires fixed kappa > 0")
    return _sweep_against_reference(cfg, "lambda", s_list, workers)


def sweep_kappa_convergence(cfg: ExperimentConfig, s_list=None, workers: Optional[int] = None) -> ConvergenceSweepResult:
    """Same as the lambda sweep with the roles of kappa and lambda exchanged."""
    if cfg["model"]["lambda"] <= 0:
        raise ValueError("kappa convergence sweep requires fixed lambda > 0")
    return _sweep_against_reference(cfg, "kappa", s_list, workers)


def sqrt_envelope_ok(result: ConvergenceSweepResult, s: float = 0.0) -> tuple:
    """Check err(v) <= C sqrt(v) with C calibrated on the largest value."""
    rows = [r for r in result.rows if not r.error and r.value > 0]
    if not rows:
        return False, math.nan
    c_hat = rows[0].sup_errors[s] / math.sqrt(rows[0].value)
    ok = all(r.sup_errors[s] <= c_hat * math.sqrt(r.value) * (1 + 1e-12) for r in rows)
    return ok, c_hat


# ---------------------------------------------------------------------------
# attractor sampling
# ---------------------------------------------------------------------------


@dataclass
class AttractorSamples:
    lam: float
    fields: List[SpectralField]
    seeds: List[int]
    times: List[float]
    fingerprint: str


def attractor_samples(
    cfg: ExperimentConfig,
    lam: float,
    *,
    n_ics: int = 8,
    samples_per_ic: int = 1,
    t_spinup: float = 100.0,
    t_gap: float = 10.0,
    seed0: int = 1000,
    workers: Optional[int] = None,
) -> AttractorSamples:
    """Long-time states from several initial conditions as attractor proxies.

    Initial condition i uses seed ``seed0 + i``; samples are the states at
    t = t_spinup + j * t_gap for j = 1..samples_per_ic.
    """
    mcfg = cfg.with_model_value("lambda", lam)
    grid = build_grid(mcfg)
    sym = build_symbol(mcfg)
    params = build_params(mcfg, sym)
    forcing = build_forcing(mcfg, grid, sym)
    dt = mcfg["time"]["dt"]
    t_total = t_spinup + samples_per_ic * t_gap
    sample_times = [t_spinup + (j + 1) * t_gap for j in range(samples_per_ic)]

    def one(seed: int) -> List[SpectralField]:
        theta0 = random_smooth_field(
            grid, seed=seed, slope=mcfg["initial"]["slope"],
            l2_norm=mcfg["initial"]["l2_norm"], forced_zero=~sym.state_keep_mask(grid),
        )
        stride = max(1, int(round(t_gap / dt)))
        rec = run(
            params, theta0, forcing, t_total, dt,
            stride=stride, nonlinear=mcfg["model"]["nonlinear"], capture_fields=True,
            p_list=[], s_list=[], c_cfl=mcfg["time"]["c_cfl"],
        )
        out = []
        for ts in sample_times:
            out.append(rec.fields[rec.index_at(ts)])
        return out

    seeds = [seed0 + i for i in range(n_ics)]
    per_ic = map_ordered(one, seeds, workers)
    fields = [f for group in per_ic for f in group]
    times = [t for _ in seeds for t in sample_times]
    return AttractorSamples(lam=lam, fields=fields, seeds=seeds, times=times, fingerprint=mcfg.fingerprint())


def write_attractor_manifest(outdir, samples: AttractorSamples) -> Path:
    """Store a sample set as ASCL snapshots indexed by a manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, f in enumerate(samples.fields):
        name = f"sample_{i:04d}.ascl"
        ascio.write_field(outdir / name, f)
        entries.append({
            "file": name,
            "lambda": samples.lam,
            "seed": samples.seeds[i // max(1, len(samples.times) // len(samples.seeds))],
            "t": samples.times[i],
        })
    manifest = {
        "kind": "attractor-samples",
        "lambda": samples.lam,
        "fingerprint": samples.fingerprint,
        "samples": entries,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_attractor_manifest(outdir) -> List[SpectralField]:
    outdir = Path(outdir)
    manifest = json.loads((outdir / "manifest.json").read_text())
    return [ascio.read_field(outdir / e["file"]) for e in manifest["samples"]]


@dataclass
class AttractorDistanceResult:
    rows: List[tuple]  # (lambda, distance, fingerprint)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("# asclab attractor Hausdorff semi-distances vs lambda=0 reference\n")
            fh.write("lambda,distance_h1,fingerprint\n")
            for lam, dist, fp in self.rows:
                fh.write(f"{_fmt(lam)},{_fmt(dist)},{fp}\n")


def attractor_lambda_sweep(
    cfg: ExperimentConfig,
    *,
    n_ics: int = 8,
    samples_per_ic: int = 1,
    t_spinup: float = 100.0,
    t_gap: float = 10.0,
    seed0: int = 1000,
    workers: Optional[int] = None,
    outdir=None,
) -> AttractorDistanceResult:
    """Sample attractors along the config's lambda list and measure their
    H^1 semi-distance to the lambda = 0 reference set."""
    if cfg["sweep"]["parameter"] != "lambda":
        raise ValueError("attractor sweep needs sweep parameter 'lambda'")
    lams = [0.0] + list(cfg["sweep"]["values"])
    sets = {}
    for lam in lams:
        s = attractor_samples(
            cfg, lam, n_ics=n_ics, samples_per_ic=samples_per_ic,
            t_spinup=t_spinup, t_gap=t_gap, seed0=seed0, workers=workers,
        )
        sets[lam] = s
        if outdir is not None:
            write_attractor_manifest(Path(outdir) / f"attractor_lambda_{_fmt(lam)}", s)
    ref = sets[0.0].fields
    rows = []
    for lam in cfg["sweep"]["values"]:
        rows.append((lam, attractor_distance(sets[lam].fields, ref), sets[lam].fingerprint))
    return AttractorDistanceResult(rows=rows)
