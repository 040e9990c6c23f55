"""Sky partitioners: equi-angular grid cells and HEALPix nested pixels.

Both partitioners are total functions over valid (ra, dec) and back the
star-ID cell field, the insert unit of the real-time store, and the
cell-visiting cone search in the query engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PartitionError(ValueError):
    """Out-of-range coordinates or invalid partitioner parameters."""


@dataclass(frozen=True)
class CellId:
    scheme: str     # "grid" | "healpix"
    level: int      # grid level, or nside for healpix
    index: int

    def __post_init__(self) -> None:
        if self.scheme not in ("grid", "healpix"):
            raise PartitionError(f"unknown scheme {self.scheme!r}")
        count = cell_count(self.scheme, self.level)
        if not 0 <= self.index < count:
            raise PartitionError(f"cell index {self.index} out of range [0, {count})")


def cell_count(scheme: str, level: int) -> int:
    if scheme == "grid":
        if level < 0:
            raise PartitionError("grid level must be >= 0")
        return 2 ** (2 * level + 1)
    if scheme == "healpix":
        _check_nside(level)
        return 12 * level * level
    raise PartitionError(f"unknown scheme {scheme!r}")


def _check_nside(nside: int) -> None:
    if nside < 1 or (nside & (nside - 1)) != 0:
        raise PartitionError(f"nside must be a power of two, got {nside}")


def _check_coords(ra_deg, dec_deg) -> tuple[np.ndarray, np.ndarray]:
    ra = np.asarray(ra_deg, dtype=np.float64)
    dec = np.asarray(dec_deg, dtype=np.float64)
    if np.any(ra < 0.0) or np.any(ra >= 360.0):
        raise PartitionError("ra must be in [0, 360)")
    if np.any(dec < -90.0) or np.any(dec > 90.0):
        raise PartitionError("dec must be in [-90, 90]")
    return ra, dec


def grid_index(ra_deg, dec_deg, level: int) -> np.ndarray:
    """Vectorized equi-angular grid cell index.

    2^level bands in dec by 2^(level+1) bands in ra; index = dec_band * n_ra + ra_band.
    """
    if level < 0:
        raise PartitionError("grid level must be >= 0")
    ra, dec = _check_coords(ra_deg, dec_deg)
    n_dec = 2 ** level
    n_ra = 2 ** (level + 1)
    dec_band = np.minimum((((dec + 90.0) / 180.0) * n_dec).astype(np.int64), n_dec - 1)
    ra_band = np.minimum(((ra / 360.0) * n_ra).astype(np.int64), n_ra - 1)
    return dec_band * n_ra + ra_band


def grid_cell(ra_deg: float, dec_deg: float, level: int) -> CellId:
    idx = int(grid_index(np.array([ra_deg]), np.array([dec_deg]), level)[0])
    return CellId(scheme="grid", level=level, index=idx)


def grid_cell_bounds(index: int, level: int) -> tuple[float, float, float, float]:
    """(ra_lo, ra_hi, dec_lo, dec_hi) in degrees for one grid cell."""
    n_dec = 2 ** level
    n_ra = 2 ** (level + 1)
    if not 0 <= index < n_dec * n_ra:
        raise PartitionError(f"cell index {index} out of range")
    dec_band, ra_band = divmod(index, n_ra)
    dec_lo = -90.0 + dec_band * (180.0 / n_dec)
    ra_lo = ra_band * (360.0 / n_ra)
    return ra_lo, ra_lo + 360.0 / n_ra, dec_lo, dec_lo + 180.0 / n_dec


def grid_cell_area_sr(index: int, level: int) -> float:
    """Exact spherical area of a grid cell, steradians."""
    ra_lo, ra_hi, dec_lo, dec_hi = grid_cell_bounds(index, level)
    dra = math.radians(ra_hi - ra_lo)
    return dra * (math.sin(math.radians(dec_hi)) - math.sin(math.radians(dec_lo)))


def _interleave_bits(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Interleave two <=29-bit ints: ix on even bits, iy on odd bits."""
    out = np.zeros_like(ix, dtype=np.int64)
    for b in range(29):
        out |= ((ix >> b) & 1) << (2 * b)
        out |= ((iy >> b) & 1) << (2 * b + 1)
    return out


def healpix_index(ra_deg, dec_deg, nside: int) -> np.ndarray:
    """Vectorized HEALPix nested-scheme pixel index.

    Direct (face, x, y) construction: locate the base face from the
    cylindrical coordinates, then bit-interleave the in-face coordinates.
    """
    _check_nside(nside)
    ra, dec = _check_coords(ra_deg, dec_deg)
    scalar = ra.ndim == 0
    ra = np.atleast_1d(ra)
    dec = np.atleast_1d(dec)

    z = np.sin(np.radians(dec))
    tt = (ra / 90.0) % 4.0      # azimuth in [0, 4)

    face = np.empty(ra.shape, dtype=np.int64)
    ix = np.empty(ra.shape, dtype=np.int64)
    iy = np.empty(ra.shape, dtype=np.int64)

    eq = np.abs(z) <= 2.0 / 3.0
    if np.any(eq):
        temp1 = nside * (0.5 + tt[eq])
        temp2 = nside * (z[eq] * 0.75)
        jp = np.floor(temp1 - temp2).astype(np.int64)   # ascending edge line
        jm = np.floor(temp1 + temp2).astype(np.int64)   # descending edge line
        ifp = jp >> int(math.log2(nside))
        ifm = jm >> int(math.log2(nside))
        f = np.where(ifp == ifm, (ifp & 3) + 4, np.where(ifp < ifm, ifp & 3, (ifm & 3) + 8))
        face[eq] = f
        ix[eq] = jm & (nside - 1)
        iy[eq] = nside - (jp & (nside - 1)) - 1

    pol = ~eq
    if np.any(pol):
        tt_p = tt[pol]
        z_p = z[pol]
        ntt = np.minimum(np.floor(tt_p).astype(np.int64), 3)
        tp = tt_p - ntt
        tmp = nside * np.sqrt(3.0 * (1.0 - np.abs(z_p)))
        jp = np.minimum((tp * tmp).astype(np.int64), nside - 1)
        jm = np.minimum(((1.0 - tp) * tmp).astype(np.int64), nside - 1)
        north = z_p >= 0
        face[pol] = np.where(north, ntt, ntt + 8)
        ix[pol] = np.where(north, nside - jm - 1, jp)
        iy[pol] = np.where(north, nside - jp - 1, jm)

    pix = face * nside * nside + _interleave_bits(ix, iy)
    return pix[0] if scalar else pix


def healpix_nested(ra_deg: float, dec_deg: float, nside: int) -> CellId:
    idx = int(healpix_index(np.array([ra_deg]), np.array([dec_deg]), nside))
    return CellId(scheme="healpix", level=nside, index=idx)


@dataclass(frozen=True)
class Partitioner:
    """Configured partitioner mapping sky coordinates to cell indices."""

    scheme: str = "grid"
    level: int = 4

    def __post_init__(self) -> None:
        if self.scheme == "grid":
            if self.level < 0:
                raise PartitionError("grid level must be >= 0")
        elif self.scheme == "healpix":
            _check_nside(self.level)
        else:
            raise PartitionError(f"unknown scheme {self.scheme!r}")
        if self.n_cells >= 2 ** 24:
            raise PartitionError("cell count exceeds the 24-bit star-ID cell field")

    @property
    def n_cells(self) -> int:
        return cell_count(self.scheme, self.level)

    def index_of(self, ra_deg, dec_deg) -> np.ndarray:
        if self.scheme == "grid":
            return grid_index(ra_deg, dec_deg, self.level)
        return healpix_index(ra_deg, dec_deg, self.level)

    def cell(self, ra_deg: float, dec_deg: float) -> CellId:
        return CellId(self.scheme, self.level, int(self.index_of(ra_deg, dec_deg)))
