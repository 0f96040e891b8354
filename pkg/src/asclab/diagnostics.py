"""Time-series diagnostics: energy budgets, dissipation rate, bound checkers.

The quantities tracked follow the L^2 energy balance of the damped,
fractionally dissipative scalar:

    d/dt (1/2)||theta||^2 + lam*||theta||_{H1/2}^2
        + kappa*||Lambda^{gamma/2} theta||^2 = <S, theta>

where ||theta||_{H1/2}^2 is assembled with the inhomogeneous convention
||theta||_{L2}^2 + ||Lambda^{1/2} theta||_{L2}^2, which makes the damping
pairing <(Lambda+1) theta, theta> exact.  Cumulative integrals are stepwise
trapezoids accumulated by the integrator at every time step, so interval
budget residuals reflect only the O(dt^2) scheme plus quadrature error,
independently of the observer stride.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .spectral import NormReport, SpectralField, norms

CSV_COLUMNS = [
    "t",
    "l2",
    "hs_half",
    "hs_1",
    "hs_gamma_half",
    "linf",
    "dEdt",
    "damping_rate",
    "dissipation_rate",
    "injection_rate",
    "budget_residual",
    "cum_h_half_sq",
    "cum_grad_sq",
    "cum_gamma_sq",
    "cum_injection",
    "eps",
    "lp2_margin",
    "lpinf_margin",
    "linf_decay_margin",
    "linf_uniform_margin",
]


@dataclass
class TrajectoryRecord:
    """Sampled diagnostics of one run; append-only, owned by its run."""

    times: List[float] = field(default_factory=list)
    norms: List[NormReport] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)  # (1/2)||theta||^2
    cum_h_half_sq: List[float] = field(default_factory=list)
    cum_grad_sq: List[float] = field(default_factory=list)
    cum_gamma_sq: List[float] = field(default_factory=list)
    cum_injection: List[float] = field(default_factory=list)
    # per-interval rates over (t_{i-1}, t_i]; first entry is nan
    dEdt: List[float] = field(default_factory=list)
    damping_rate: List[float] = field(default_factory=list)
    dissipation_rate: List[float] = field(default_factory=list)
    injection_rate: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    eps: List[float] = field(default_factory=list)
    annotations: List[str] = field(default_factory=list)
    fields: Optional[List[SpectralField]] = None
    meta: Dict = field(default_factory=dict)
    fingerprint: str = ""

    def __len__(self):
        return len(self.times)

    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def l2_series(self) -> np.ndarray:
        return np.asarray([nr.l2 for nr in self.norms])

    def hs_series(self, s: float) -> np.ndarray:
        return np.asarray([nr.hs[float(s)] for nr in self.norms])

    def lp_series(self, p: float) -> np.ndarray:
        return np.asarray([nr.lp[float(p)] for nr in self.norms])

    def linf_series(self) -> np.ndarray:
        return np.asarray([nr.linf for nr in self.norms])

    def index_at(self, t: float, tol: float = 1e-9) -> int:
        ts = self.t()
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"no sample at t={t} (closest {ts[i]})")
        return i


# ---------------------------------------------------------------------------
# spectral integrands shared with the integrator
# ---------------------------------------------------------------------------


def budget_integrands(theta: SpectralField, params, forcing_coeffs: np.ndarray) -> tuple:
    """(||theta||^2, ||theta||_{H1/2,inhom}^2, ||L^{g/2}theta||^2, ||grad theta||^2, <S,theta>)."""
    g = theta.grid
    abs2 = theta.abs2()
    n2 = g.volume * float(np.sum(abs2))
    h_half = n2 + g.volume * float(np.sum(g.lambda_multiplier(1.0) * abs2))
    gam = g.volume * float(np.sum(g.lambda_multiplier(float(params.gamma)) * abs2))
    grad = g.volume * float(np.sum(g.lambda_multiplier(2.0) * abs2))
    inj = g.volume * float(np.real(np.vdot(forcing_coeffs, theta.coeffs)))
    return n2, h_half, gam, grad, inj


@dataclass(frozen=True)
class BudgetTerms:
    """Trapezoid evaluation of the energy-balance terms over one interval."""

    dEdt: float
    damping: float
    dissipation: float
    injection: float
    residual: float


def energy_budget(theta_prev: SpectralField, theta_next: SpectralField, params, forcing, dt: float) -> BudgetTerms:
    """Budget of the L^2 energy balance over [t, t+dt] from two consecutive states."""
    fc = forcing.field.coeffs
    n2a, ha, ga, _, ia = budget_integrands(theta_prev, params, fc)
    n2b, hb, gb, _, ib = budget_integrands(theta_next, params, fc)
    dEdt = (0.5 * n2b - 0.5 * n2a) / dt
    damping = params.lam * 0.5 * (ha + hb)
    dissipation = params.kappa * 0.5 * (ga + gb)
    injection = 0.5 * (ia + ib)
    return BudgetTerms(
        dEdt=dEdt,
        damping=damping,
        dissipation=dissipation,
        injection=injection,
        residual=dEdt + damping + dissipation - injection,
    )


# ---------------------------------------------------------------------------
# dissipation rate and long-time averages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DissipationSeries:
    """eps(t) = (kappa/t) * integral_0^t ||grad theta||^2 ds; t=0 is skipped."""

    t: np.ndarray
    eps: np.ndarray


def dissipation_rate(record: TrajectoryRecord, kappa: float) -> DissipationSeries:
    ts = record.t()
    cum = np.asarray(record.cum_grad_sq)
    live = ts > 0
    return DissipationSeries(t=ts[live], eps=kappa * cum[live] / ts[live])


@dataclass(frozen=True)
class StatBalance:
    """Finite-horizon Cesaro averages standing in for the stationary balance.

    ``residual = avg_damping + avg_dissipation - avg_injection`` must equal
    ``(||theta_0||^2 - ||theta(T)||^2) / (2T)`` up to scheme error; the
    deviation is reported as ``identity_gap`` and bounds the averaging error
    like 1/T.
    """

    T: float
    avg_damping: float
    avg_dissipation: float
    avg_injection: float
    residual: float
    identity_gap: float


def stat_balance(record: TrajectoryRecord, T: float, identity_tol: float = 1e-3) -> StatBalance:
    if T > record.times[-1] + 1e-12:
        raise ValueError(f"T={T} exceeds record horizon {record.times[-1]}")
    params_lam = record.meta["lambda"]
    params_kappa = record.meta["kappa"]
    if T == 0:
        return StatBalance(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    i = record.index_at(T)
    avg_damp = params_lam * record.cum_h_half_sq[i] / T
    avg_diss = params_kappa * record.cum_gamma_sq[i] / T
    avg_inj = record.cum_injection[i] / T
    residual = avg_damp + avg_diss - avg_inj
    gap = residual - (record.energy[0] - record.energy[i]) / T
    scale = max(1.0, abs(avg_damp) + abs(avg_diss) + abs(avg_inj))
    if abs(gap) > identity_tol * scale:
        raise ValueError(
            f"stationary-balance identity violated: gap {gap:.3e} vs tolerance "
            f"{identity_tol * scale:.3e} (scheme error too large?)"
        )
    return StatBalance(T, avg_damp, avg_diss, avg_inj, residual, gap)


# ---------------------------------------------------------------------------
# maximum-principle bound checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    name: str
    t: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    ok: bool
    worst_margin: float


def _forcing_lp(forcing, p: float) -> float:
    rep = norms(forcing.field, p_list=[p])
    return rep.lp[float(p)]


def lp_bound_check(record: TrajectoryRecord, params, forcing, p: float, tol: float = 1e-6) -> BoundCheck:
    """Margins of the damping bound
    ||theta(t)||_p <= exp(-lam t) [||theta_0||_p - ||S||_p/lam] + ||S||_p/lam."""
    if params.lam <= 0:
        raise ValueError("the L^p damping bound requires lambda > 0")
    p = float(p)
    ts = record.t()
    series = record.linf_series() if math.isinf(p) else record.lp_series(p)
    theta0_p = series[0]
    s_p = _forcing_lp(forcing, p)
    bound = np.exp(-params.lam * ts) * (theta0_p - s_p / params.lam) + s_p / params.lam
    margin = bound - series
    ok = bool(np.all(margin >= -tol * np.abs(bound)))
    return BoundCheck(
        name=f"lp_bound(p={p})",
        t=ts,
        bound=bound,
        margin=margin,
        ok=ok,
        worst_margin=float(np.min(margin)),
    )


def linf_decay_check(record: TrajectoryRecord, params, forcing, c0: float = 1.0, tol: float = 1e-6) -> tuple:
    """Margins of the dissipative decay bound and of the kappa-free uniform bound.

    decay:   ||theta(t)||_inf <= ||theta_0||_inf exp(-c0 kappa t) + ||S||_inf/(c0 kappa)
    uniform: ||theta(t)||_inf <= ||theta_0||_inf + ||S||_inf

    c0 is the (unknown) universal constant; the default 1 is valid for the
    linear part thanks to the spectral gap |k| >= 1 of zero-mean fields.
    """
    ts = record.t()
    series = record.linf_series()
    theta0_inf = series[0]
    s_inf = _forcing_lp(forcing, float("inf"))

    uniform_bound = np.full_like(ts, theta0_inf + s_inf)
    uniform = BoundCheck(
        name="linf_uniform",
        t=ts,
        bound=uniform_bound,
        margin=uniform_bound - series,
        ok=bool(np.all(uniform_bound - series >= -tol * np.abs(uniform_bound))),
        worst_margin=float(np.min(uniform_bound - series)),
    )
    if params.kappa > 0:
        bound = theta0_inf * np.exp(-c0 * params.kappa * ts) + s_inf / (c0 * params.kappa)
        decay = BoundCheck(
            name=f"linf_decay(c0={c0})",
            t=ts,
            bound=bound,
            margin=bound - series,
            ok=bool(np.all(bound - series >= -tol * np.abs(bound))),
            worst_margin=float(np.min(bound - series)),
        )
    else:
        decay = None
    return decay, uniform


def smoothing_bracket(t: np.ndarray, params, d: int, theta0_l2: float, s_l2: float, s_linf: float, c0: float = 1.0) -> np.ndarray:
    """Shape of the L^2 -> L^inf smoothing bound for t in (0, 1]:
    (2/t + 1)^{(d+1-gamma)/(2 gamma)} (||theta_0||_2 + ||S||_2/sqrt(c0 kappa)) + ||S||_inf."""
    expo = (d + 1 - params.gamma) / (2.0 * params.gamma)
    lead = theta0_l2 + (s_l2 / math.sqrt(c0 * params.kappa) if params.kappa > 0 else 0.0)
    return (2.0 / t + 1.0) ** expo * lead + s_linf


def fit_smoothing_constant(record: TrajectoryRecord, params, forcing, c0: float = 1.0) -> float:
    """Smallest admissible constant of the smoothing bound on a calibration run."""
    ts = record.t()
    live = (ts > 0) & (ts <= 1.0)
    if not np.any(live):
        raise ValueError("record has no samples in (0, 1]")
    s_l2 = _forcing_lp(forcing, 2.0)
    s_linf = _forcing_lp(forcing, float("inf"))
    bracket = smoothing_bracket(ts[live], params, record.meta["dim"], record.l2_series()[0], s_l2, s_linf, c0)
    return float(np.max(record.linf_series()[live] / bracket))


def check_smoothing_bound(record: TrajectoryRecord, params, forcing, C: float, c0: float = 1.0) -> BoundCheck:
    """Assert the frozen-constant smoothing bound on a held-out run, t in (0, 1]."""
    ts = record.t()
    live = (ts > 0) & (ts <= 1.0)
    s_l2 = _forcing_lp(forcing, 2.0)
    s_linf = _forcing_lp(forcing, float("inf"))
    bound = C * smoothing_bracket(ts[live], params, record.meta["dim"], record.l2_series()[0], s_l2, s_linf, c0)
    margin = bound - record.linf_series()[live]
    return BoundCheck(
        name=f"l2_to_linf_smoothing(C={C:.6g})",
        t=ts[live],
        bound=bound,
        margin=margin,
        ok=bool(np.all(margin >= -1e-9 * np.abs(bound))),
        worst_margin=float(np.min(margin)),
    )


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_record_csv(path, record: TrajectoryRecord, margins: Optional[Dict[str, np.ndarray]] = None) -> None:
    """One row per sample with the stable, documented column set.

    Margin columns are blank unless provided.  The comment header carries the
    config fingerprint so every table is traceable to its inputs.
    """
    margins = margins or {}
    gamma = record.meta.get("gamma")
    n = len(record)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# asclab record, config_fingerprint={record.fingerprint}\n")
        for note in record.annotations:
            fh.write(f"# note: {note}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for i in range(n):
            nr = record.norms[i]
            row = [
                _fmt(record.times[i]),
                _fmt(nr.l2),
                _fmt(nr.hs.get(0.5)),
                _fmt(nr.hs.get(1.0)),
                _fmt(nr.hs.get(float(gamma) / 2.0) if gamma is not None else None),
                _fmt(nr.linf),
                _fmt(record.dEdt[i]),
                _fmt(record.damping_rate[i]),
                _fmt(record.dissipation_rate[i]),
                _fmt(record.injection_rate[i]),
                _fmt(record.residual[i]),
                _fmt(record.cum_h_half_sq[i]),
                _fmt(record.cum_grad_sq[i]),
                _fmt(record.cum_gamma_sq[i]),
                _fmt(record.cum_injection[i]),
                _fmt(record.eps[i]),
            ]
            for col in ("lp2_margin", "lpinf_margin", "linf_decay_margin", "linf_uniform_margin"):
                arr = margins.get(col)
                row.append(_fmt(arr[i]) if arr is not None else "")
            fh.write(",".join(row) + "\n")


def read_csv_columns(path) -> tuple:
    """Read back one of our CSVs: (comments, dict of column -> float array)."""
    comments = []
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line)
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: empty table")
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for r in rows:
            v = r[j] if j < len(r) else ""
            vals.append(float(v) if v not in ("", "None") else math.nan)
        cols[name] = np.asarray(vals)
    return comments, cols
