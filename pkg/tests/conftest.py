import numpy as np
import pytest

from asclab.dynamics import ForcingSpec, ModelParams
from asclab.profiles import named_field, random_smooth_field
from asclab.spectral import Grid, SpectralField
from asclab.symbols import MGSymbol, SQGSymbol


@pytest.fixture(scope="session")
def grid2():
    return Grid.of(2, 32)


@pytest.fixture(scope="session")
def grid3():
    return Grid.of(3, 16)


@pytest.fixture(scope="session")
def sqg():
    return SQGSymbol()


@pytest.fixture(scope="session")
def mg():
    return MGSymbol(1.0)


@pytest.fixture
def sqg_params(sqg):
    return ModelParams(lam=0.5, kappa=0.1, gamma=1.0, sym=sqg)


@pytest.fixture
def sqg_forcing(grid2, sqg):
    return ForcingSpec(named_field(grid2, "cos_x1"), sqg)


def single_mode(grid, k, amplitude=1.0, kind="cos"):
    """Real single-mode field amplitude*cos(k.x) or amplitude*sin(k.x)."""
    c = np.zeros(grid.shape, dtype=complex)
    kpos = tuple(np.asarray(k) % grid.n)
    kneg = tuple((-np.asarray(k)) % grid.n)
    if kind == "cos":
        c[kpos] = amplitude / 2.0
        c[kneg] = amplitude / 2.0
    else:
        c[kpos] = -0.5j * amplitude
        c[kneg] = 0.5j * amplitude
    return SpectralField.from_coeffs(grid, c)


def rough_field(grid, seed=0, scale=1.0):
    """Field with energy across the whole resolvable band (incl. beyond 2/3 cutoff)."""
    rng = np.random.default_rng(seed)
    from asclab.spectral import transform_forward

    return transform_forward(grid, scale * rng.standard_normal(grid.shape))
