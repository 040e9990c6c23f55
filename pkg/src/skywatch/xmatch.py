"""Cross-match: persistent star identity assignment for incoming catalogs.

Each catalog row is matched to the nearest template star in pixel space
within a radius, using a bucket grid sized to the radius so a match touches
at most 9 buckets.  Unmatched rows are NEW stars: they get the next serial
in their sky cell, an alert is emitted, and the template grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .partition import Partitioner
from .simgen import Catalog

MATCH_RADIUS_PIX = 3.0

_CAM_BITS = 8
_CELL_BITS = 24
_SERIAL_BITS = 32
_CAM_SHIFT = _CELL_BITS + _SERIAL_BITS
_SERIAL_MASK = (1 << _SERIAL_BITS) - 1
_CELL_MASK = (1 << _CELL_BITS) - 1


class StarIdError(ValueError):
    """Star-ID field overflow."""


class TemplateCapacityError(RuntimeError):
    """A cell ran out of 32-bit serials."""


def encode_star_id(camera: int, cell_index: int, serial: int) -> int:
    """Pack (camera, cell, serial) into a 64-bit ID: 8 | 24 | 32 bits."""
    if not 0 <= camera < (1 << _CAM_BITS):
        raise StarIdError(f"camera {camera} out of range")
    if not 0 <= cell_index < (1 << _CELL_BITS):
        raise StarIdError(f"cell index {cell_index} out of range")
    if not 0 <= serial < (1 << _SERIAL_BITS):
        raise StarIdError(f"serial {serial} out of range")
    return (camera << _CAM_SHIFT) | (cell_index << _SERIAL_BITS) | serial


def decode_star_id(star_id: int) -> tuple[int, int, int]:
    """Inverse of encode_star_id: (camera, cell index, serial)."""
    if not 0 <= star_id < (1 << 64):
        raise StarIdError(f"star id {star_id} out of 64-bit range")
    return (
        (star_id >> _CAM_SHIFT) & 0xFF,
        (star_id >> _SERIAL_BITS) & _CELL_MASK,
        star_id & _SERIAL_MASK,
    )


def star_id_camera(ids: np.ndarray) -> np.ndarray:
    return (np.asarray(ids, dtype=np.uint64) >> np.uint64(_CAM_SHIFT)).astype(np.int64)


def star_id_cell(ids: np.ndarray) -> np.ndarray:
    return ((np.asarray(ids, dtype=np.uint64) >> np.uint64(_SERIAL_BITS))
            & np.uint64(_CELL_MASK)).astype(np.int64)


def star_id_serial(ids: np.ndarray) -> np.ndarray:
    return (np.asarray(ids, dtype=np.uint64) & np.uint64(_SERIAL_MASK)).astype(np.int64)


@dataclass(frozen=True)
class TemplateEntry:
    star_id: int
    ra_deg: float
    dec_deg: float
    x_pix: float
    y_pix: float
    ref_mag: float
    is_standard: bool
    first_seen_seq: int


@dataclass(frozen=True)
class NewStarAlert:
    star_id: int
    camera: int
    ra_deg: float
    dec_deg: float
    x_pix: float
    y_pix: float
    seq: int


@dataclass
class MatchResult:
    """Per-row outcome: a matched template star or the NEW marker."""

    star_id: np.ndarray       # uint64; undefined where is_new
    distance: np.ndarray      # pixels; inf where is_new
    is_new: np.ndarray        # bool
    template_row: np.ndarray  # index into template arrays; -1 where is_new

    def __len__(self) -> int:
        return len(self.is_new)

    @property
    def n_new(self) -> int:
        return int(self.is_new.sum())


class _BucketIndex:
    """Pixel-space bucket grid over template positions; bucket edge = radius.

    Stored CSR-style over a dense bucket lattice, so a 9-bucket neighborhood
    probe is a pair of O(1) gathers per bucket rather than a binary search.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, bucket_size: float):
        self.size = bucket_size
        # Offset so slightly negative jittered coordinates stay in range.
        self.x0 = float(x.min()) - 2 * bucket_size if len(x) else 0.0
        self.y0 = float(y.min()) - 2 * bucket_size if len(y) else 0.0
        bx = ((x - self.x0) / bucket_size).astype(np.int64)
        by = ((y - self.y0) / bucket_size).astype(np.int64)
        self.n_bx = int(bx.max()) + 3 if len(x) else 1
        self.n_by = int(by.max()) + 3 if len(y) else 1
        keys = bx * self.n_by + by
        self.order = np.argsort(keys, kind="stable").astype(np.int64)
        counts = np.bincount(keys, minlength=self.n_bx * self.n_by)
        self.bucket_starts = np.concatenate(
            [[0], np.cumsum(counts)]).astype(np.int64)

    def bucket_coords(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        bx = np.floor((x - self.x0) / self.size).astype(np.int64)
        by = np.floor((y - self.y0) / self.size).astype(np.int64)
        return bx, by

    def candidates(self, bx: np.ndarray, by: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Template indices in the 9-bucket neighborhoods of the query buckets.

        Returns (row_index, template_index) pairs, flattened over all queries.
        """
        n = len(bx)
        offs = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)],
                        dtype=np.int64)
        qx = bx[None, :] + offs[:, 0:1]          # (9, n)
        qy = by[None, :] + offs[:, 1:2]
        valid = (qx >= 0) & (qx < self.n_bx) & (qy >= 0) & (qy < self.n_by)
        keys = np.where(valid, qx * self.n_by + qy, 0).ravel()
        starts = self.bucket_starts[keys]
        ends = np.where(valid.ravel(), self.bucket_starts[keys + 1], starts)
        counts = ends - starts
        total = int(counts.sum())
        if total == 0:
            return (np.empty(0, dtype=np.int64),) * 2
        row_idx = np.tile(np.arange(n, dtype=np.int64), 9)
        reps = np.repeat(row_idx, counts)
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        flat = np.repeat(starts, counts) + (np.arange(total) - offsets)
        return reps, self.order[flat]


@dataclass
class Template:
    """Persistent registry of identified stars for one camera."""

    camera: int
    partitioner: Partitioner = field(default_factory=Partitioner)

    def __post_init__(self) -> None:
        self.star_id = np.empty(0, dtype=np.uint64)
        self.ra_deg = np.empty(0, dtype=np.float64)
        self.dec_deg = np.empty(0, dtype=np.float64)
        self.x_pix = np.empty(0, dtype=np.float64)
        self.y_pix = np.empty(0, dtype=np.float64)
        self.ref_mag = np.empty(0, dtype=np.float64)
        self.is_standard = np.empty(0, dtype=bool)
        self.first_seen_seq = np.empty(0, dtype=np.int64)
        self._next_serial: dict[int, int] = {}
        self._index: _BucketIndex | None = None
        self._index_radius: float | None = None
        self._sorted: tuple[int, np.ndarray, np.ndarray] | None = None
        self.version = 0

    def __len__(self) -> int:
        return len(self.star_id)

    def entry(self, i: int) -> TemplateEntry:
        return TemplateEntry(
            star_id=int(self.star_id[i]),
            ra_deg=float(self.ra_deg[i]),
            dec_deg=float(self.dec_deg[i]),
            x_pix=float(self.x_pix[i]),
            y_pix=float(self.y_pix[i]),
            ref_mag=float(self.ref_mag[i]),
            is_standard=bool(self.is_standard[i]),
            first_seen_seq=int(self.first_seen_seq[i]),
        )

    def _invalidate(self) -> None:
        self._index = None
        self.version += 1

    def sorted_view(self) -> tuple[np.ndarray, np.ndarray]:
        """(order, sorted star ids) cached per template version."""
        if self._sorted is None or self._sorted[0] != self.version:
            order = np.argsort(self.star_id, kind="stable")
            self._sorted = (self.version, order, self.star_id[order])
        return self._sorted[1], self._sorted[2]

    def index_for_radius(self, radius_pix: float) -> _BucketIndex:
        if self._index is None or self._index_radius != radius_pix:
            self._index = _BucketIndex(self.x_pix, self.y_pix, radius_pix)
            self._index_radius = radius_pix
        return self._index

    def add_new_stars(self, ra: np.ndarray, dec: np.ndarray, x: np.ndarray,
                      y: np.ndarray, mag: np.ndarray, seq: int) -> list[NewStarAlert]:
        """Register NEW rows; each gets the next serial in its sky cell."""
        n = len(ra)
        if n == 0:
            return []
        cells = self.partitioner.index_of(ra, dec)
        ids = np.empty(n, dtype=np.uint64)
        alerts = []
        for i in range(n):
            cell = int(cells[i])
            serial = self._next_serial.get(cell, 0)
            if serial > _SERIAL_MASK:
                raise TemplateCapacityError(
                    f"cell {cell} of camera {self.camera} exhausted its serials")
            self._next_serial[cell] = serial + 1
            sid = encode_star_id(self.camera, cell, serial)
            ids[i] = sid
            alerts.append(NewStarAlert(
                star_id=sid, camera=self.camera,
                ra_deg=float(ra[i]), dec_deg=float(dec[i]),
                x_pix=float(x[i]), y_pix=float(y[i]), seq=seq,
            ))
        self.star_id = np.concatenate([self.star_id, ids])
        self.ra_deg = np.concatenate([self.ra_deg, ra])
        self.dec_deg = np.concatenate([self.dec_deg, dec])
        self.x_pix = np.concatenate([self.x_pix, x])
        self.y_pix = np.concatenate([self.y_pix, y])
        self.ref_mag = np.concatenate([self.ref_mag, mag])
        self.is_standard = np.concatenate([self.is_standard, np.zeros(n, dtype=bool)])
        self.first_seen_seq = np.concatenate(
            [self.first_seen_seq, np.full(n, seq, dtype=np.int64)])
        self._invalidate()
        return alerts

    def designate_standards(self, min_per_cell: int = 5, decile: float = 0.1,
                            variance: np.ndarray | None = None) -> int:
        """Flag reference stars: per cell, the brightest decile, preferring
        low historical variance when one is supplied."""
        self.is_standard[:] = False
        cells = self.partitioner.index_of(self.ra_deg, self.dec_deg)
        for cell in np.unique(cells):
            members = np.flatnonzero(cells == cell)
            n = len(members)
            take = max(min(min_per_cell, n), math.ceil(decile * n))
            bright = members[np.argsort(self.ref_mag[members], kind="stable")]
            if variance is not None:
                pool = bright[:max(take, math.ceil(2 * decile * n))]
                pool = pool[np.argsort(variance[pool], kind="stable")]
                chosen = pool[:take]
            else:
                chosen = bright[:take]
            self.is_standard[chosen] = True
        self._invalidate()
        return int(self.is_standard.sum())

    def save(self, path: str | Path) -> None:
        """Persist as delimited text, one entry per line."""
        with open(path, "w") as fh:
            fh.write("star_id,ra_deg,dec_deg,x_pix,y_pix,ref_mag,is_standard,first_seen_seq\n")
            for i in range(len(self)):
                fh.write(
                    f"{int(self.star_id[i])},{self.ra_deg[i]:.8f},{self.dec_deg[i]:.8f},"
                    f"{self.x_pix[i]:.4f},{self.y_pix[i]:.4f},{self.ref_mag[i]:.5f},"
                    f"{int(self.is_standard[i])},{int(self.first_seen_seq[i])}\n")

    @classmethod
    def load(cls, path: str | Path, camera: int,
             partitioner: Partitioner | None = None) -> "Template":
        tpl = cls(camera=camera, partitioner=partitioner or Partitioner())
        raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64, ndmin=2)
        if raw.size == 0:
            return tpl
        with open(path) as fh:
            next(fh)
            ids = np.array([int(line.split(",", 1)[0]) for line in fh], dtype=np.uint64)
        tpl.star_id = ids
        tpl.ra_deg = raw[:, 1].copy()
        tpl.dec_deg = raw[:, 2].copy()
        tpl.x_pix = raw[:, 3].copy()
        tpl.y_pix = raw[:, 4].copy()
        tpl.ref_mag = raw[:, 5].copy()
        tpl.is_standard = raw[:, 6].astype(bool)
        tpl.first_seen_seq = raw[:, 7].astype(np.int64)
        cells = star_id_cell(ids)
        serials = star_id_serial(ids)
        for cell in np.unique(cells):
            tpl._next_serial[int(cell)] = int(serials[cells == cell].max()) + 1
        tpl._invalidate()
        return tpl


def crossmatch(rows: Catalog, template: Template,
               radius_pix: float = MATCH_RADIUS_PIX) -> MatchResult:
    """Nearest template star within radius for every row, else NEW.

    Expected cost is O(rows): candidates come from the 9 buckets around each
    row's pixel bucket.  Ties on distance break toward the smaller star ID.
    """
    if radius_pix <= 0:
        raise ValueError("radius_pix must be > 0")
    n = len(rows)
    out = MatchResult(
        star_id=np.zeros(n, dtype=np.uint64),
        distance=np.full(n, np.inf),
        is_new=np.ones(n, dtype=bool),
        template_row=np.full(n, -1, dtype=np.int64),
    )
    if n == 0 or len(template) == 0:
        return out

    x = rows.columns["x_pix"]
    y = rows.columns["y_pix"]
    index = template.index_for_radius(radius_pix)
    bx, by = index.bucket_coords(x, y)
    row_idx, cand = index.candidates(bx, by)
    if len(row_idx) == 0:
        return out

    dx = x[row_idx] - template.x_pix[cand]
    dy = y[row_idx] - template.y_pix[cand]
    d2 = dx * dx + dy * dy
    ok = d2 <= radius_pix * radius_pix
    row_idx, cand, d2 = row_idx[ok], cand[ok], d2[ok]
    if len(row_idx) == 0:
        return out

    cand_ids = template.star_id[cand]
    order = np.lexsort((cand_ids, d2, row_idx))
    row_sorted = row_idx[order]
    first = np.ones(len(row_sorted), dtype=bool)
    first[1:] = row_sorted[1:] != row_sorted[:-1]
    rows_won = row_sorted[first]
    out.star_id[rows_won] = cand_ids[order][first]
    out.distance[rows_won] = np.sqrt(d2[order][first])
    out.is_new[rows_won] = False
    out.template_row[rows_won] = cand[order][first]
    return out


def dedupe_matches(match: MatchResult) -> np.ndarray:
    """Row indices keeping at most one (closest) row per matched star.

    Crossmatch assigns every row its own nearest star, so two detections can
    claim the same ID; downstream stores require one sample per star per
    exposure.  Losing rows are dropped, not re-marked NEW.
    """
    matched = np.flatnonzero(~match.is_new)
    if len(matched) == 0:
        return matched
    rows = match.template_row[matched]
    counts = np.bincount(rows)
    if counts.max() <= 1:        # no contention: common case, O(n)
        return matched
    ids = match.star_id[matched]
    order = np.lexsort((match.distance[matched], ids))
    ids_sorted = ids[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = ids_sorted[1:] != ids_sorted[:-1]
    return np.sort(matched[order][first])


def bootstrap_template(rows: Catalog, camera: int, partitioner: Partitioner,
                       seq: int = 0) -> tuple[Template, list[NewStarAlert]]:
    """Build a fresh template from the first exposure's catalog."""
    tpl = Template(camera=camera, partitioner=partitioner)
    alerts = update_template(tpl, rows, MatchResult(
        star_id=np.zeros(len(rows), dtype=np.uint64),
        distance=np.full(len(rows), np.inf),
        is_new=np.ones(len(rows), dtype=bool),
        template_row=np.full(len(rows), -1, dtype=np.int64),
    ), seq=seq)
    return tpl, alerts


def update_template(template: Template, rows: Catalog, match: MatchResult,
                    seq: int) -> list[NewStarAlert]:
    """Register every NEW row of `match` into the template; emit one alert each."""
    new_idx = np.flatnonzero(match.is_new)
    if len(new_idx) == 0:
        return []
    c = rows.columns
    return template.add_new_stars(
        ra=c["ra_deg"][new_idx].copy(),
        dec=c["dec_deg"][new_idx].copy(),
        x=c["x_pix"][new_idx].copy(),
        y=c["y_pix"][new_idx].copy(),
        mag=c["mag"][new_idx].copy(),
        seq=seq,
    )
