"""Binary "ASCL" snapshot container.

Field snapshot layout (all integers little-endian):

    magic "ASCL" | u32 format version | u32 dim | u32 n_per_axis |
    little-endian float64 (re, im) pairs, row-major k-order over the stored
    half-spectrum (last-axis indices 0..n/2)

Symbol-table files reuse the container with a 4-byte kind tag ("SQG", "MG",
"CUST") and the viscosity nu recorded in the header, followed by ``dim``
half-spectra (one per component).  Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import Grid, SpectralField
from .symbols import (
    KIND_CUSTOM,
    KIND_MG,
    KIND_SQG,
    MGSymbol,
    MultiplierSymbol,
    SQGSymbol,
    TabulatedSymbol,
)

MAGIC = b"ASCL"
VERSION = 1

_KIND_TAGS = {KIND_SQG: b"SQG\0", KIND_MG: b"MG\0\0", KIND_CUSTOM: b"CUST"}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def _half_bytes(coeffs: np.ndarray, n: int) -> bytes:
    half = np.ascontiguousarray(coeffs[..., : n // 2 + 1])
    return half.astype("<c16", copy=False).tobytes()


def _half_count(dim: int, n: int) -> int:
    return n ** (dim - 1) * (n // 2 + 1)


def _read_half(buf: bytes, offset: int, dim: int, n: int):
    count = _half_count(dim, n)
    nbytes = count * 16
    if offset + nbytes > len(buf):
        raise ValueError("truncated ASCL payload")
    half = np.frombuffer(buf, dtype="<c16", count=count, offset=offset)
    half = half.reshape((n,) * (dim - 1) + (n // 2 + 1,)).astype(np.complex128)
    return half, offset + nbytes


def reconstruct_full(half: np.ndarray, dim: int, n: int) -> np.ndarray:
    """Rebuild the full Hermitian spectrum from the stored half-spectrum."""
    h = n // 2
    full = np.zeros((n,) * dim, dtype=np.complex128)
    full[..., : h + 1] = half
    tail = np.arange(h + 1, n)
    rev = (-np.arange(n)) % n
    src = n - tail
    sel = np.ix_(*([rev] * (dim - 1) + [src]))
    full[..., h + 1 :] = np.conj(half[sel])
    return full


# ---------------------------------------------------------------------------
# field snapshots
# ---------------------------------------------------------------------------


def write_field(path, f: SpectralField) -> None:
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, g.dim, g.n))
        fh.write(_half_bytes(f.coeffs, g.n))


def read_field(path) -> SpectralField:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not an ASCL container")
    version, dim, n = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    half, _ = _read_half(buf, 16, dim, n)
    grid = Grid.of(dim, n)
    return SpectralField(grid, reconstruct_full(half, dim, n))


# ---------------------------------------------------------------------------
# symbol tables
# ---------------------------------------------------------------------------


def write_symbol_table(path, sym: MultiplierSymbol, grid: Grid) -> None:
    tables = sym.component_tables(grid)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(_KIND_TAGS[sym.kind if sym.kind in _KIND_TAGS else KIND_CUSTOM])
        fh.write(struct.pack("<dII", float(sym.nu), grid.dim, grid.n))
        for t in tables:
            fh.write(_half_bytes(t, grid.n))


def read_symbol_table(path) -> MultiplierSymbol:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not an ASCL container")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    tag = buf[8:12]
    if tag not in _TAG_KINDS:
        raise ValueError(f"{path}: unknown symbol kind tag {tag!r}")
    nu, dim, n = struct.unpack_from("<dII", buf, 12)
    grid = Grid.of(dim, n)
    offset = 12 + 16
    tables = []
    for _ in range(dim):
        half, offset = _read_half(buf, offset, dim, n)
        tables.append(reconstruct_full(half, dim, n))
    kind = _TAG_KINDS[tag]
    if kind == KIND_SQG:
        sym: MultiplierSymbol = SQGSymbol()
    elif kind == KIND_MG:
        sym = MGSymbol(nu if nu > 0 else 1.0)
    else:
        return TabulatedSymbol(grid, tables, nu=nu)
    # analytic kinds: verify the stored tables against the closed form
    ref = sym.component_tables(grid)
    for stored, expect in zip(tables, ref):
        if not np.array_equal(stored, expect):
            raise ValueError(f"{path}: stored {kind} tables disagree with closed form")
    return sym
