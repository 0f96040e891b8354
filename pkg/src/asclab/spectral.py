"""Truncated Fourier fields on the periodic box and the operators built on them.

Conventions used throughout the package:

* domain: the torus ``[-pi, pi]^d`` for ``d`` in {2, 3}, parametrized by the
  collocation nodes ``x_j = 2*pi*j/n`` (equivalent under periodicity);
* expansion: ``theta(x) = sum_k theta_hat(k) exp(i k.x)`` with integer
  wavevectors ``k``; forward/backward transforms are each other's inverse
  under this normalization;
* norms: ``||theta||_{L2}^2 = (2*pi)^d * sum_k |theta_hat(k)|^2`` and
  ``||theta||_{Hs} = || |k|^s theta_hat ||`` (homogeneous; for the zero-mean
  fields used here, |k| >= 1, so Hs is nondecreasing in s);
* the mean mode is pinned to zero exactly after every operation, and Nyquist
  planes (any |k_j| = n/2) are kept at zero always to avoid asymmetric
  truncation artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from .errors import SymmetryError

TWO_PI = 2.0 * np.pi

#: tolerance (relative) for Hermitian-symmetry validation
SYMMETRY_TOL = 1e-12

_GRID_CACHE: dict = {}


class Grid:
    """Collocation grid and wavenumber bookkeeping for one resolution.

    Grids are immutable and cached; obtain them through :meth:`Grid.of`.
    """

    def __init__(self, dim: int, n: int):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if n < 8 or n % 2 != 0:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {n}")
        self.dim = dim
        self.n = n
        self.shape = (n,) * dim
        self.size = n**dim
        self.h = TWO_PI / n
        self.cell_volume = self.h**dim
        self.volume = TWO_PI**dim

        k1d = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)  # 0..n/2-1, -n/2..-1
        self.k_axes = [k1d.copy() for _ in range(dim)]
        # broadcastable float components k_1,...,k_d
        self.k_comps = []
        for ax in range(dim):
            shape = [1] * dim
            shape[ax] = n
            self.k_comps.append(k1d.reshape(shape).astype(float))
        ksq = sum(c * c for c in self.k_comps)
        self.k_sq = ksq
        self.k_abs = np.sqrt(ksq)
        safe = self.k_abs.copy()
        safe[(0,) * dim] = 1.0  # origin coefficient is pinned to 0 anyway
        self._k_abs_safe = safe

        half = n // 2
        nyq = np.zeros(self.shape, dtype=bool)
        for c in self.k_comps:
            nyq |= np.abs(c) == half
        self.nyquist_mask = nyq
        cutoff = n // 3
        keep = np.ones(self.shape, dtype=bool)
        for c in self.k_comps:
            keep &= np.abs(c) <= cutoff
        self.dealias_keep = keep
        self.origin = (0,) * dim

        self._mult_cache: dict = {}

    @classmethod
    def of(cls, dim: int, n: int) -> "Grid":
        key = (dim, n)
        g = _GRID_CACHE.get(key)
        if g is None:
            g = cls(dim, n)
            _GRID_CACHE[key] = g
        return g

    def axis_points(self) -> np.ndarray:
        """Collocation nodes along one axis."""
        return self.h * np.arange(self.n)

    def meshgrid(self):
        pts = self.axis_points()
        return np.meshgrid(*([pts] * self.dim), indexing="ij")

    def lambda_multiplier(self, s: float) -> np.ndarray:
        """Cached multiplier |k|^s with the origin entry set to 0."""
        key = float(s)
        m = self._mult_cache.get(key)
        if m is None:
            m = self._k_abs_safe**key
            m[self.origin] = 0.0
            m.flags.writeable = False
            self._mult_cache[key] = m
        return m

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"


def conj_reverse(c: np.ndarray) -> np.ndarray:
    """Return conj(c(-k)) in fft index layout."""
    axes = tuple(range(c.ndim))
    return np.conj(np.roll(np.flip(c, axis=axes), shift=(1,) * c.ndim, axis=axes))


class SpectralField:
    """Real-valued zero-mean scalar field stored as truncated Fourier coefficients.

    Immutable: ``coeffs`` is a read-only complex array in numpy fft layout.
    Construction enforces the invariants exactly: zero mean, zero Nyquist
    planes, Hermitian symmetry (validated to :data:`SYMMETRY_TOL`, then
    symmetrized bit-stably), finite entries.
    """

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs: np.ndarray, _trusted: bool = False):
        if _trusted:
            self.grid = grid
            self.coeffs = coeffs
            return
        c = np.array(coeffs, dtype=np.complex128, copy=True)
        if c.shape != grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(c.view(float))):
            raise ValueError("non-finite spectral coefficients")
        c[grid.origin] = 0.0
        c[grid.nyquist_mask] = 0.0
        rev = conj_reverse(c)
        scale = float(np.max(np.abs(c))) if c.size else 0.0
        resid = float(np.max(np.abs(c - rev)))
        if resid > SYMMETRY_TOL * max(scale, 1e-300):
            raise SymmetryError(
                f"Hermitian symmetry violated: residual {resid:.3e} vs scale {scale:.3e}"
            )
        c = 0.5 * (c + rev)  # exact no-op when already symmetric
        c[grid.origin] = 0.0
        c.flags.writeable = False
        self.grid = grid
        self.coeffs = c

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_coeffs(cls, grid: Grid, coeffs: np.ndarray) -> "SpectralField":
        return cls(grid, coeffs)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        c = np.zeros(grid.shape, dtype=np.complex128)
        c.flags.writeable = False
        return cls(grid, c, _trusted=True)

    @classmethod
    def _wrap(cls, grid: Grid, coeffs: np.ndarray) -> "SpectralField":
        """Trusted constructor for arrays produced by invariant-preserving ops."""
        coeffs.flags.writeable = False
        return cls(grid, coeffs, _trusted=True)

    # -- arithmetic (real scalars only keep symmetry) ------------------------

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same_grid(other)
        return SpectralField._wrap(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_same_grid(other)
        return SpectralField._wrap(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField._wrap(self.grid, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField._wrap(self.grid, -self.coeffs)

    def _check_same_grid(self, other: "SpectralField"):
        if other.grid is not self.grid and (other.grid.dim, other.grid.n) != (
            self.grid.dim,
            self.grid.n,
        ):
            raise ValueError("operands live on different grids")

    # -- diagnostics helpers --------------------------------------------------

    def abs2(self) -> np.ndarray:
        c = self.coeffs
        return c.real * c.real + c.imag * c.imag

    def l2(self) -> float:
        return float(np.sqrt(self.grid.volume * np.sum(self.abs2())))

    def hs(self, s: float) -> float:
        w = self.grid.lambda_multiplier(2.0 * float(s))
        return float(np.sqrt(self.grid.volume * np.sum(w * self.abs2())))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.coeffs - conj_reverse(self.coeffs))))

    def __repr__(self):
        return f"SpectralField(grid={self.grid!r}, l2={self.l2():.6g})"


@dataclass(frozen=True)
class VectorField:
    """Spectrally divergence-free velocity field (one SpectralField per component)."""

    grid: Grid
    components: tuple

    DIV_TOL = 1e-12

    @classmethod
    def from_fields(cls, components: Iterable[SpectralField], validate: bool = True) -> "VectorField":
        comps = tuple(components)
        grid = comps[0].grid
        if len(comps) != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {len(comps)}")
        if validate:
            div = np.zeros(grid.shape, dtype=np.complex128)
            umax = 0.0
            for kc, f in zip(grid.k_comps, comps):
                div += kc * f.coeffs
                umax = max(umax, float(np.max(np.abs(f.coeffs))))
            if float(np.max(np.abs(div))) > cls.DIV_TOL * max(umax, 1e-300):
                raise ValueError("velocity is not spectrally divergence-free")
        return cls(grid, comps)

    def max_abs_divergence(self) -> float:
        div = np.zeros(self.grid.shape, dtype=np.complex128)
        for kc, f in zip(self.grid.k_comps, self.components):
            div += kc * f.coeffs
        return float(np.max(np.abs(div)))

    def to_physical(self) -> list:
        return [transform_backward(f) for f in self.components]


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def transform_forward(grid: Grid, samples: np.ndarray) -> SpectralField:
    """Coefficients of the trigonometric interpolant of real collocation samples.

    The mean mode is zeroed; Nyquist planes are dropped.  Round trip with
    :func:`transform_backward` reproduces band-limited samples minus their
    mean to relative 1e-12.
    """
    x = np.asarray(samples)
    if x.shape != grid.shape:
        raise ValueError(f"sample shape {x.shape} does not match grid {grid.shape}")
    if np.iscomplexobj(x):
        raise ValueError("samples must be real-valued")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite samples")
    c = np.fft.fftn(x) / grid.size
    return SpectralField(grid, c)


def transform_backward(f: SpectralField) -> np.ndarray:
    """Real collocation samples of ``f``.

    The imaginary residue of the inverse transform is asserted to be at most
    1e-12 of the field magnitude and then discarded.
    """
    x = np.fft.ifftn(f.coeffs) * f.grid.size
    scale = float(np.max(np.abs(x.real)))
    resid = float(np.max(np.abs(x.imag)))
    if resid > 1e-12 * max(scale, 1e-300):
        raise SymmetryError(
            f"imaginary residue {resid:.3e} exceeds tolerance for scale {scale:.3e}"
        )
    return np.ascontiguousarray(x.real)


# ---------------------------------------------------------------------------
# fractional operators
# ---------------------------------------------------------------------------


def apply_lambda_power(f: SpectralField, s: float) -> SpectralField:
    """Fractional Laplacian power: multiply coefficients by |k|^s.

    Zero-mean fields have |k| >= 1 on their support, so s in [-2, 4] is safe.
    """
    if not -2.0 <= s <= 4.0:
        raise ValueError(f"s={s} outside supported range [-2, 4]")
    return SpectralField._wrap(f.grid, f.coeffs * f.grid.lambda_multiplier(s))


def apply_damping(f: SpectralField) -> SpectralField:
    """Damping operator: multiply coefficients by (|k| + 1); zero mode stays 0."""
    g = f.grid
    m = g.k_abs + 1.0
    c = f.coeffs * m
    c[g.origin] = 0.0
    return SpectralField._wrap(g, c)


def dealias_two_thirds(f: SpectralField) -> SpectralField:
    """Zero all coefficients with any |k_j| > n/3 (2/3-rule projection)."""
    return SpectralField._wrap(f.grid, f.coeffs * f.grid.dealias_keep)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

_ALLOWED_P = (1.0, 2.0, 3.0, 4.0, float("inf"))


@dataclass(frozen=True)
class NormReport:
    """Norms/seminorms of one field; hs(0) coincides with l2."""

    l2: float
    linf: Optional[float] = None
    hs: Dict[float, float] = field(default_factory=dict)
    lp: Dict[float, float] = field(default_factory=dict)
    holder: Dict[float, float] = field(default_factory=dict)


def norms(
    f: SpectralField,
    s_list: Iterable[float] = (),
    p_list: Iterable[float] = (),
    alpha_list: Iterable[float] = (),
) -> NormReport:
    """Evaluate the requested norms of one field.

    Hs norms come from the Parseval sum; Lp norms from equal-weight
    (trapezoidal) quadrature on the collocation samples; the Holder
    seminorm is a stratified pair-sampling lower-bound estimate (see
    :func:`holder_seminorm_estimate`).
    """
    grid = f.grid
    abs2 = f.abs2()
    l2 = float(np.sqrt(grid.volume * np.sum(abs2)))
    hs = {}
    for s in s_list:
        w = grid.lambda_multiplier(2.0 * float(s))
        hs[float(s)] = float(np.sqrt(grid.volume * np.sum(w * abs2)))

    lp: Dict[float, float] = {}
    holder: Dict[float, float] = {}
    p_list = [float(p) for p in p_list]
    alpha_list = [float(a) for a in alpha_list]
    linf = None
    if p_list or alpha_list:
        for p in p_list:
            if p not in _ALLOWED_P:
                raise ValueError(f"unsupported p={p}; allowed {_ALLOWED_P}")
        x = transform_backward(f)
        ax = np.abs(x)
        linf = float(np.max(ax))
        for p in p_list:
            if np.isinf(p):
                lp[p] = linf
            else:
                lp[p] = float((np.sum(ax**p) * grid.cell_volume) ** (1.0 / p))
        for a in alpha_list:
            if not 0.0 < a <= 1.0:
                raise ValueError(f"alpha must lie in (0, 1], got {a}")
            holder[a] = holder_seminorm_estimate(grid, x, a)
    return NormReport(l2=l2, linf=linf, hs=hs, lp=lp, holder=holder)


#: cap on the number of point pairs sampled by the Holder estimator
HOLDER_MAX_PAIRS = 1_000_000


def holder_seminorm_estimate(grid: Grid, x: np.ndarray, alpha: float, seed: int = 0) -> float:
    """Grid estimate of the C^alpha seminorm (a lower bound of the true one).

    Maximizes |x(a)-x(b)| / dist(a,b)^alpha over a stratified sample of point
    pairs: all axis-aligned pairs at separations of 1..3 cells, the diagonal
    1-cell stratum, and a seeded random sample of distant pairs, capped at
    :data:`HOLDER_MAX_PAIRS` pairs in total.  Separations below one grid cell
    do not occur by construction.
    """
    best = 0.0
    pairs = 0
    h = grid.h
    for ax in range(grid.dim):
        for m in (1, 2, 3):
            diff = np.max(np.abs(x - np.roll(x, m, axis=ax)))
            best = max(best, diff / (m * h) ** alpha)
            pairs += x.size
    diag = np.roll(x, (1,) * grid.dim, axis=tuple(range(grid.dim)))
    best = max(best, float(np.max(np.abs(x - diag))) / (h * np.sqrt(grid.dim)) ** alpha)
    pairs += x.size

    budget = HOLDER_MAX_PAIRS - pairs
    if budget > 0:
        rng = np.random.default_rng(seed)
        m = min(budget, 200_000)
        ia = rng.integers(0, grid.n, size=(m, grid.dim))
        ib = rng.integers(0, grid.n, size=(m, grid.dim))
        d = np.abs(ia - ib)
        d = np.minimum(d, grid.n - d) * h
        dist = np.sqrt(np.sum(d * d, axis=1))
        ok = dist >= h
        if np.any(ok):
            va = x[tuple(ia[ok].T)]
            vb = x[tuple(ib[ok].T)]
            best = max(best, float(np.max(np.abs(va - vb) / dist[ok] ** alpha)))
    return best
