"""Named analytic profiles and reproducible random smooth fields."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .spectral import Grid, SpectralField, conj_reverse


def _single_cos(grid: Grid, axes, amplitude: float) -> np.ndarray:
    """Product of cosines over the given axes: amp * prod_j cos(x_{a_j})."""
    c = np.zeros(grid.shape, dtype=np.complex128)
    # cos x_a = (e^{i x_a} + e^{-i x_a})/2: 2^m modes of weight amp/2^m
    modes = [()]
    for ax in axes:
        modes = [m + ((ax, s),) for m in modes for s in (+1, -1)]
    w = amplitude / (2 ** len(axes))
    for mode in modes:
        idx = [0] * grid.dim
        for ax, s in mode:
            idx[ax] = s % grid.n
        c[tuple(idx)] += w
    return c


def named_field(grid: Grid, name: str, amplitude: float = 1.0) -> SpectralField:
    """Analytic profiles with exact spectral coefficients."""
    name = name.lower()
    if name == "zero":
        return SpectralField.zeros(grid)
    table = {
        "cos_x1": (0,),
        "cos_x2": (1,),
        "cos_x1_cos_x2": (0, 1),
    }
    if grid.dim == 3:
        table.update({"cos_x3": (2,), "cos_x1_cos_x3": (0, 2)})
    if name not in table:
        raise ValueError(f"unknown profile {name!r} for dim {grid.dim}")
    return SpectralField(grid, _single_cos(grid, table[name], amplitude))


def random_smooth_field(
    grid: Grid,
    seed: int,
    slope: float = -3.0,
    l2_norm: float = 1.0,
    kmax: Optional[int] = None,
    forced_zero: Optional[np.ndarray] = None,
) -> SpectralField:
    """Reproducible H^s-regular initial data.

    Coefficient moduli follow |k|^slope up to the cutoff (n/4 by default),
    phases are uniform draws from the recorded seed, Hermitian symmetry is
    imposed by assigning conjugate pairs, and the result is normalized to
    the requested L^2 norm after any forced-zero projection (e.g. the
    k3 = 0 plane of the MG model).
    """
    if kmax is None:
        kmax = grid.n // 4
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=grid.shape)
    mag = grid._k_abs_safe**slope
    band = (grid.k_abs >= 1.0) & (grid.k_abs <= kmax) & grid.dealias_keep
    c = np.where(band, mag * np.exp(1j * phases), 0.0)

    # keep one representative per conjugate pair, then mirror it
    sel = np.zeros(grid.shape, dtype=bool)
    strict = np.zeros(grid.shape, dtype=bool)  # all later components == 0 so far
    strict[:] = True
    for ax in reversed(range(grid.dim)):
        kc = grid.k_comps[ax]
        sel |= strict & (kc > 0)
        strict &= kc == 0
    half = np.where(sel, c, 0.0)
    c = half + conj_reverse(half)

    if forced_zero is not None:
        c = np.where(forced_zero, 0.0, c)
    f = SpectralField(grid, c)
    cur = f.l2()
    if cur == 0.0:
        raise ValueError("random field vanished after projection; adjust the cutoff")
    return f * (l2_norm / cur)
