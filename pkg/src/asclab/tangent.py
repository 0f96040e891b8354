"""Tangent-linear dynamics, volume elements, and attractor estimates.

The linearization of the flow around a trajectory theta(t) is

    A_theta[psi] = -kappa Lambda^gamma psi - u[theta].grad psi - u[psi].grad theta,

optionally minus lam*(Lambda + 1) psi.  The printed operator omits the
damping term while the difference equation for trajectory separations
includes it; both variants sit behind ``include_damping`` (default on,
which is the actual derivative of the damped flow).

Tangent fields are advanced by the exact derivative of the discrete base
step, so Gateaux remainders of the discrete flow vanish linearly in the
perturbation size down to roundoff.  Volume elements are measured in the
H^1 inner product <Lambda f, Lambda g>, with Benettin-style QR
re-orthonormalization accumulating log-volume increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import ForcingSpec, ModelParams, Stepper, sigma_array
from .errors import RankCollapseError
from .spectral import Grid, SpectralField

H1_ORTHO_TOL = 1e-10


def h1_inner(a: SpectralField, b: SpectralField) -> float:
    g = a.grid
    w = g.lambda_multiplier(2.0)
    return float(g.volume * np.real(np.vdot(a.coeffs, w * b.coeffs)))


def h1_norm(a: SpectralField) -> float:
    return math.sqrt(max(0.0, h1_inner(a, a)))


def linearized_rhs(
    psi: SpectralField,
    theta: SpectralField,
    params: ModelParams,
    include_damping: bool = True,
) -> SpectralField:
    """A_theta[psi], assembled pseudo-spectrally with dealiasing."""
    g = psi.grid
    if theta.grid.shape != g.shape:
        raise ValueError("psi and theta live on different grids")
    st = _plain_stepper(g, params)
    th, u = st._physical(st.project(theta.coeffs))
    L = st._tangent_advection(th, u, st.project(psi.coeffs))
    c = L - params.kappa * g.lambda_multiplier(params.gamma) * psi.coeffs
    if include_damping and params.lam > 0:
        damp = params.lam * (g.k_abs + 1.0) * psi.coeffs
        damp[g.origin] = 0.0
        c = c - damp
    return SpectralField._wrap(g, c)


def _plain_stepper(grid: Grid, params: ModelParams, dt: float = 1.0) -> Stepper:
    st = Stepper(grid, params, ForcingSpec(SpectralField.zeros(grid)), dt, nonlinear=True)
    st._umax_limit = np.inf
    st._blowup_ref = np.inf
    return st


# ---------------------------------------------------------------------------
# tangent bundle and volume propagation
# ---------------------------------------------------------------------------


@dataclass
class TangentBundle:
    """n tangent fields riding one base trajectory; owned by that run."""

    psis: List[SpectralField]
    log_volume: float = 0.0
    last_orth_time: float = 0.0

    @property
    def n(self) -> int:
        return len(self.psis)


def orthonormalize_h1(psis: Sequence[SpectralField]) -> tuple:
    """Modified Gram-Schmidt in the H^1 inner product.

    Returns (orthonormal fields, log det R); raises
    :class:`RankCollapseError` when a pivot collapses.
    """
    phis: List[SpectralField] = []
    logdet = 0.0
    scale = max(h1_norm(p) for p in psis) if psis else 0.0
    for j, p in enumerate(psis):
        v = p.coeffs.astype(np.complex128)
        for q in phis:
            r = h1_inner_arrays(p.grid, q.coeffs, v)
            v = v - r * q.coeffs
        rjj = math.sqrt(max(0.0, h1_inner_arrays(p.grid, v, v)))
        if rjj <= 1e-13 * max(scale, 1e-300):
            raise RankCollapseError(
                f"tangent {j} is numerically dependent on the previous ones (pivot {rjj:.3e})"
            )
        phis.append(SpectralField._wrap(p.grid, v / rjj))
        logdet += math.log(rjj)
    return phis, logdet


def h1_inner_arrays(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    w = grid.lambda_multiplier(2.0)
    return float(grid.volume * np.real(np.vdot(a, w * b)))


def gram_h1(phis: Sequence[SpectralField]) -> np.ndarray:
    n = len(phis)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = h1_inner(phis[i], phis[j])
    return G


def trace_estimate(
    theta: SpectralField,
    phis: Sequence[SpectralField],
    params: ModelParams,
    include_damping: bool = True,
    advection: bool = True,
) -> float:
    """Tr(P_n A_theta) = sum_j <Lambda^2 phi_j, A_theta[phi_j]> over an
    H^1-orthonormal set (Gram deviation checked against 1e-6)."""
    if not phis:
        return 0.0
    G = gram_h1(phis)
    dev = float(np.max(np.abs(G - np.eye(len(phis)))))
    if dev > 1e-6:
        raise ValueError(f"input set is not H^1-orthonormal (Gram deviation {dev:.3e})")
    g = theta.grid
    st = _plain_stepper(g, params)
    if advection:
        th, u = st._physical(st.project(theta.coeffs))
    w2 = g.lambda_multiplier(2.0)
    wg = g.lambda_multiplier(params.gamma)
    damp = params.lam * (g.k_abs + 1.0)
    total = 0.0
    for phi in phis:
        c = phi.coeffs
        a = -params.kappa * wg * c
        if advection:
            a = a + st._tangent_advection(th, u, st.project(c))
        if include_damping and params.lam > 0:
            a = a - damp * c
            a[g.origin] = 0.0
        total += float(g.volume * np.real(np.vdot(w2 * c, a)))
    return total


@dataclass(frozen=True)
class VolumeHistory:
    """log V_n at re-orthonormalization instants plus instantaneous traces."""

    times: np.ndarray
    log_vn: np.ndarray
    traces: np.ndarray
    avg_trace: float

    def slope(self) -> float:
        T = self.times[-1] - self.times[0]
        return float((self.log_vn[-1] - self.log_vn[0]) / T)


def propagate_volume(
    params: ModelParams,
    theta0: SpectralField,
    forcing: ForcingSpec,
    psi0s: Sequence[SpectralField],
    t_end: float,
    dt: float,
    *,
    reorth_stride: int = 10,
    nonlinear: bool = True,
    include_damping: bool = True,
    c_cfl: float = 0.4,
) -> VolumeHistory:
    """Co-evolve n tangents with the base flow and accumulate log V_n.

    Tangents are re-orthonormalized in H^1 every ``reorth_stride`` steps;
    the averaged trace estimate is (log V_n(T))/T.  The instantaneous trace
    is recorded at each re-orthonormalization from the fresh basis.
    """
    if len(psi0s) == 0 or len(psi0s) > 64:
        raise ValueError("need 1..64 tangent fields")
    grid = theta0.grid
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of dt")
    st = Stepper(
        grid, params, forcing, dt,
        nonlinear=nonlinear, c_cfl=c_cfl, tangent_damping=include_damping,
    )
    c = st.project(theta0.coeffs)
    phis, _ = orthonormalize_h1([SpectralField._wrap(grid, st.project(p.coeffs)) for p in psi0s])
    ps = [p.coeffs for p in phis]

    times = [0.0]
    logv = [0.0]
    traces = [
        trace_estimate(
            SpectralField._wrap(grid, c), phis, params, include_damping, advection=nonlinear
        )
    ]
    acc = 0.0
    for i in range(1, n_steps + 1):
        c, ps = st.step_hat_with_tangents(c, ps)
        if i % reorth_stride == 0 or i == n_steps:
            fields = [SpectralField._wrap(grid, p) for p in ps]
            phis, logdet = orthonormalize_h1(fields)
            ps = [p.coeffs for p in phis]
            acc += logdet
            times.append(i * dt)
            logv.append(acc)
            traces.append(
                trace_estimate(
                    SpectralField._wrap(grid, c), phis, params, include_damping,
                    advection=nonlinear,
                )
            )
    T = times[-1] if times[-1] > 0 else 1.0
    return VolumeHistory(
        times=np.asarray(times),
        log_vn=np.asarray(logv),
        traces=np.asarray(traces),
        avg_trace=acc / T,
    )


# ---------------------------------------------------------------------------
# uniform differentiability (Gateaux remainder)
# ---------------------------------------------------------------------------


def gateaux_check(
    theta0: SpectralField,
    psi0: SpectralField,
    params: ModelParams,
    forcing: ForcingSpec,
    t: float,
    eps_list: Sequence[float],
    dt: float,
    *,
    nonlinear: bool = True,
    include_damping: bool = True,
    c_cfl: float = 0.4,
) -> list:
    """Normalized first-order Taylor remainders of the flow map.

    r(eps) = ||pi(t)(theta0 + eps psi0) - pi(t)theta0 - eps psi(t)||_{H1}
             / (eps ||psi0||_{H1}),

    with psi the tangent solution.  Returns [(eps, r(eps)), ...].
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be positive and strictly decreasing")
    grid = theta0.grid
    n_steps = int(round(t / dt))
    if abs(n_steps * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be an integer multiple of dt")
    st = Stepper(grid, params, forcing, dt, nonlinear=nonlinear, c_cfl=c_cfl,
                 tangent_damping=include_damping)
    base = st.project(theta0.coeffs)
    psi = st.project(psi0.coeffs)
    psi0_h1 = h1_norm(SpectralField._wrap(grid, psi))
    if psi0_h1 == 0:
        raise ValueError("psi0 must be nonzero")

    c, ps = base, [psi]
    for _ in range(n_steps):
        c, ps = st.step_hat_with_tangents(c, ps)
    base_T, tangent_T = c, ps[0]

    out = []
    for eps in eps_list:
        cp = base + eps * psi
        for _ in range(n_steps):
            cp = st.step_hat(cp)
        rem = SpectralField._wrap(grid, cp - base_T - eps * tangent_T)
        out.append((eps, h1_norm(rem) / (eps * psi0_h1)))
    return out


# ---------------------------------------------------------------------------
# dimension threshold and absorbing radii
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionInputs:
    """Inputs of the volume-contraction threshold; exactly one of kappa/lam is set."""

    gamma: float
    d: int
    M: float
    C: float = 1.0
    kappa: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if (self.kappa is None) == (self.lam is None):
            raise ValueError("set exactly one of kappa (dissipation variant) or lam (damping variant)")
        coef = self.kappa if self.kappa is not None else self.lam
        if coef <= 0 or self.C <= 0 or self.M < 0 or self.d not in (2, 3):
            raise ValueError("fields must be positive (M >= 0, d in {2,3})")
        if not 0.0 < self.gamma <= 2.0:
            raise ValueError("gamma must lie in (0, 2]")


def dimension_threshold(inp: DimensionInputs) -> int:
    """Smallest N making large-dimensional volume elements contract:
    (coef/C) N^{1+e/d} dominates C (M + M^2) N, i.e.
    N = floor((C^2 (M + M^2) / coef)^{d/e}) + 1 with e = gamma (dissipation
    variant) or e = 1 (damping variant)."""
    if inp.kappa is not None:
        coef, e = inp.kappa, inp.gamma
    else:
        coef, e = inp.lam, 1.0
    x = (inp.C**2 * (inp.M + inp.M**2) / coef) ** (inp.d / e)
    return int(math.floor(x)) + 1


@dataclass(frozen=True)
class AbsorbingRadii:
    """Explicit absorbing-set constants in the C^alpha scale; c_alpha >= 1."""

    k_inf: float
    k_bar_inf: float
    c_alpha: float
    alpha: float


def absorbing_radii(
    params: ModelParams,
    s_linf: float,
    c0: float = 1.0,
    theta0_linf: Optional[float] = None,
    variant: str = "kappa",
) -> AbsorbingRadii:
    """Closed-form radii K_inf, K_bar_inf, C_alpha evaluated as printed.

    When ``theta0_linf`` is omitted it is taken as the L^inf absorbing-ball
    radius min{2/(c0 kappa), 2/(c0 lam)} ||S||_inf.  ``variant="lambda"``
    evaluates the damping-based constants (gamma replaced by 1, alpha <= 1/4).
    """
    lam, kappa, gamma = params.lam, params.kappa, params.gamma
    if variant not in ("kappa", "lambda"):
        raise ValueError("variant must be 'kappa' or 'lambda'")
    if variant == "kappa" and kappa <= 0:
        raise ValueError("kappa variant requires kappa > 0")
    if variant == "lambda" and lam <= 0:
        raise ValueError("lambda variant requires lambda > 0")
    if theta0_linf is None:
        if kappa <= 0 and lam <= 0:
            raise ValueError("absorbing ball undefined: kappa = lambda = 0")
        candidates = []
        if kappa > 0:
            candidates.append(2.0 / (c0 * kappa))
        if lam > 0:
            candidates.append(2.0 / (c0 * lam))
        theta0_linf = min(candidates) * s_linf

    if variant == "kappa":
        coef, e = kappa, gamma
        alpha = gamma / (3.0 + gamma)
    else:
        coef, e = lam, 1.0
        alpha = 0.25

    k_inf = theta0_linf + s_linf / (c0 * coef)
    k_bar = (
        coef ** (-1.0 / e) * k_inf
        + s_linf ** ((2.0 + e) / (2.0 * (1.0 + e)))
        * coef ** (-1.0 / (2.0 * (1.0 + e)))
        * k_inf ** (e / (2.0 * (1.0 + e)))
        + coef ** (-1.0 / e) * k_inf ** ((6.0 + e) / 4.0)
    )
    b = 3.0 * s_linf / (c0 * coef)
    c_alpha = max(
        1.0,
        (1.0 + coef ** (-1.0 / e)) * b
        + s_linf ** ((2.0 + e) / (2.0 * (1.0 + e)))
        * coef ** (-1.0 / (2.0 * (1.0 + e)))
        * b ** (e / (2.0 * (1.0 + e)))
        + coef ** (-1.0 / e) * b ** ((6.0 + e) / 4.0),
    )
    return AbsorbingRadii(k_inf=k_inf, k_bar_inf=k_bar, c_alpha=c_alpha, alpha=alpha)


# ---------------------------------------------------------------------------
# attractor sampling distance and spectrum utilities
# ---------------------------------------------------------------------------


def attractor_distance(samples_a: Sequence[SpectralField], samples_b: Sequence[SpectralField]) -> float:
    """Hausdorff semi-distance sup_a inf_b ||a - b||_{H1} between finite samples."""
    if not samples_a or not samples_b:
        raise ValueError("sample sets must be nonempty")
    worst = 0.0
    for a in samples_a:
        best = math.inf
        for b in samples_b:
            best = min(best, h1_norm(a - b))
        worst = max(worst, best)
    return worst


def fractional_eigenvalues(d: int, gamma: float, k_range: int) -> np.ndarray:
    """Sorted eigenvalues |k|^gamma of Lambda^gamma on zero-mean fields,
    enumerated over the integer box |k_j| <= k_range (each lattice point is
    one real degree of freedom)."""
    axes = [np.arange(-k_range, k_range + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    ksq = sum(m.astype(float) ** 2 for m in mesh)
    vals = ksq[ksq > 0] ** (gamma / 2.0)
    return np.sort(vals.ravel())
