"""Query routing and execution across the real-time and long-term stores.

A parsed AQL query is routed by its time range relative to the current
night boundary: entirely inside the night goes to the in-memory store,
entirely before goes to the archive, and a spanning range is split at the
boundary with a gap-free, overlap-free merge.

Cone searches visit only partition cells intersecting the cap.  The exact
path filters by haversine distance; the approximate path may return whole
cells without per-star filtering when the geometric precision estimate
(cap area over covered cell area) clears the requested accuracy, and always
has recall 1 because the visited cells cover the cap.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .aql import ConeQuery, EventsQuery, LightCurveQuery, QueryAst, StatsQuery
from .archive import ArchiveStore
from .cache import NightStore, NotFoundError
from .partition import Partitioner, grid_cell_area_sr, grid_cell_bounds
from .xmatch import Template

# Whole-cell shortcut is taken only with this much margin over the requested
# accuracy, so sampling noise on uniform fields cannot push the measured
# precision below alpha.
SHORTCUT_MARGIN = 0.9
MAX_CONE_RADIUS_DEG = 10.0


class RangeError(ValueError):
    """Query range conflicts with the requested source."""


class EngineUnavailableError(RuntimeError):
    def __init__(self, engine: str, reason: str = ""):
        self.engine = engine
        super().__init__(f"engine {engine!r} unavailable{': ' + reason if reason else ''}")


@dataclass(frozen=True)
class ResultMeta:
    engines: tuple[str, ...]
    elapsed_ms: float
    approximate: bool = False
    est_precision: float | None = None


@dataclass
class ResultSet:
    columns: list[str]
    rows: list[tuple]
    meta: ResultMeta

    def __len__(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict:
        # 64-bit star ids overflow JSON's float53 range; ship them as strings.
        id_cols = [i for i, name in enumerate(self.columns) if name == "star_id"]
        rows = [list(r) for r in self.rows]
        for row in rows:
            for i in id_cols:
                row[i] = str(row[i])
        return {
            "columns": self.columns,
            "rows": rows,
            "meta": {
                "engines": list(self.meta.engines),
                "elapsed_ms": self.meta.elapsed_ms,
                "approximate": self.meta.approximate,
                "est_precision": self.meta.est_precision,
            },
        }


@dataclass(frozen=True)
class Plan:
    engines: tuple[str, ...]
    cache_t_range: tuple[int, int] | None = None     # [lo, hi] ms, inclusive
    archive_t_range: tuple[int, int] | None = None   # [lo, hi) ms at boundary
    boundary_ms: int = 0


def angular_sep_deg(ra1, dec1, ra2, dec2) -> np.ndarray:
    """Haversine angular separation in degrees (vectorized)."""
    p1, l1 = np.radians(dec1), np.radians(ra1)
    p2, l2 = np.radians(dec2), np.radians(ra2)
    s1 = np.sin((p2 - p1) / 2.0)
    s2 = np.sin((l2 - l1) / 2.0)
    h = s1 * s1 + np.cos(p1) * np.cos(p2) * s2 * s2
    return np.degrees(2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


def cap_area_sr(radius_deg: float) -> float:
    return 2.0 * math.pi * (1.0 - math.cos(math.radians(radius_deg)))


def grid_cells_covering_cap(ra: float, dec: float, radius_deg: float,
                            level: int) -> tuple[np.ndarray, np.ndarray]:
    """(cell indices, interior mask) of grid cells intersecting the cap.

    The cover is a superset of the truly intersecting cells (recall is never
    lost); the interior mask is conservative (a cell is marked interior only
    when its corners and edge midpoints all lie inside the cap).
    """
    n_dec = 2 ** level
    n_ra = 2 ** (level + 1)
    dec_step = 180.0 / n_dec
    ra_step = 360.0 / n_ra

    dec_lo = max(-90.0, dec - radius_deg)
    dec_hi = min(90.0, dec + radius_deg)
    band_lo = min(int((dec_lo + 90.0) / dec_step), n_dec - 1)
    band_hi = min(int((dec_hi + 90.0) / dec_step), n_dec - 1)

    sin_r = math.sin(math.radians(min(radius_deg, 90.0)))
    cells = []
    for band in range(band_lo, band_hi + 1):
        b_lo = -90.0 + band * dec_step
        b_hi = b_lo + dec_step
        c_lo = max(b_lo, dec_lo)
        c_hi = min(b_hi, dec_hi)
        min_cos = math.cos(math.radians(max(abs(c_lo), abs(c_hi))))
        if min_cos <= sin_r + 1e-12:
            ra_bands = range(n_ra)
        else:
            half = math.degrees(math.asin(min(1.0, sin_r / min_cos))) + 1e-9
            lo_band = math.floor(((ra - half) % 360.0) / ra_step)
            n_span = int(math.ceil((2.0 * half) / ra_step)) + 1
            ra_bands = [(lo_band + i) % n_ra for i in range(min(n_span, n_ra))]
        for rb in ra_bands:
            cells.append(band * n_ra + rb)

    cells = np.unique(np.array(cells, dtype=np.int64))
    interior = np.zeros(len(cells), dtype=bool)
    for i, cell in enumerate(cells):
        r_lo, r_hi, d_lo, d_hi = grid_cell_bounds(int(cell), level)
        r_mid = (r_lo + r_hi) / 2.0
        d_mid = (d_lo + d_hi) / 2.0
        pts_ra = np.array([r_lo, r_hi, r_lo, r_hi, r_mid, r_mid, r_lo, r_hi]) % 360.0
        pts_dec = np.array([d_lo, d_lo, d_hi, d_hi, d_lo, d_hi, d_mid, d_mid])
        if np.all(angular_sep_deg(ra, dec, pts_ra, pts_dec) <= radius_deg):
            interior[i] = True
    return cells, interior


class QueryEngine:
    """Unified front over the real-time store and the archive."""

    def __init__(self, templates: dict[int, Template], store: NightStore,
                 archive: ArchiveStore | None = None,
                 partitioner: Partitioner | None = None):
        self.templates = templates
        self.store = store
        self.archive = archive
        if partitioner is None and templates:
            partitioner = next(iter(templates.values())).partitioner
        self.partitioner = partitioner or Partitioner()
        if self.partitioner.scheme != "grid":
            raise EngineUnavailableError("cone", "cone search requires a grid partitioner")
        self._meta_versions: tuple[int, ...] | None = None
        self._cells: dict[int, list[tuple[int, np.ndarray]]] = {}

    # -- metadata preload -------------------------------------------------

    def _ensure_metadata(self) -> None:
        versions = tuple(t.version for _, t in sorted(self.templates.items()))
        if versions == self._meta_versions:
            return
        cells: dict[int, list[tuple[int, np.ndarray]]] = {}
        for camera, tpl in sorted(self.templates.items()):
            if len(tpl) == 0:
                continue
            idx = self.partitioner.index_of(tpl.ra_deg, tpl.dec_deg)
            order = np.argsort(idx, kind="stable")
            sorted_cells = idx[order]
            bounds = np.flatnonzero(np.diff(sorted_cells)) + 1
            for group in np.split(order, bounds):
                cells.setdefault(int(idx[group[0]]), []).append((camera, group))
        self._cells = cells
        self._meta_versions = versions

    # -- cone search ------------------------------------------------------

    def cone_search_exact(self, ra: float, dec: float, radius_deg: float) -> ResultSet:
        t0 = time.perf_counter()
        if radius_deg > MAX_CONE_RADIUS_DEG:
            raise RangeError(f"cone radius must be <= {MAX_CONE_RADIUS_DEG} deg")
        self._ensure_metadata()
        cells, _ = grid_cells_covering_cap(ra, dec, radius_deg, self.partitioner.level)
        rows = []
        for cell in cells:
            for camera, idx in self._cells.get(int(cell), ()):
                tpl = self.templates[camera]
                sep = angular_sep_deg(ra, dec, tpl.ra_deg[idx], tpl.dec_deg[idx])
                hit = sep <= radius_deg
                for j, d in zip(idx[hit], sep[hit]):
                    rows.append((int(tpl.star_id[j]), float(tpl.ra_deg[j]),
                                 float(tpl.dec_deg[j]), float(tpl.ref_mag[j]), float(d)))
        rows.sort(key=lambda r: (r[4], r[0]))
        elapsed = (time.perf_counter() - t0) * 1e3
        return ResultSet(
            columns=["star_id", "ra_deg", "dec_deg", "ref_mag", "distance_deg"],
            rows=rows,
            meta=ResultMeta(engines=("cache",), elapsed_ms=elapsed),
        )

    def cone_search_approx(self, ra: float, dec: float, radius_deg: float,
                           accuracy: float) -> ResultSet:
        t0 = time.perf_counter()
        if not 0.0 < accuracy <= 1.0:
            raise RangeError("accuracy must be in (0, 1]")
        if radius_deg > MAX_CONE_RADIUS_DEG:
            raise RangeError(f"cone radius must be <= {MAX_CONE_RADIUS_DEG} deg")
        self._ensure_metadata()
        level = self.partitioner.level
        cells, interior = grid_cells_covering_cap(ra, dec, radius_deg, level)
        covered_sr = float(sum(grid_cell_area_sr(int(c), level) for c in cells))
        p_hat = min(1.0, cap_area_sr(radius_deg) / covered_sr) if covered_sr > 0 else 1.0

        if accuracy <= SHORTCUT_MARGIN * p_hat:
            # Whole-cell answer: no per-star filtering at all.
            rows = []
            for cell in cells:
                for camera, idx in self._cells.get(int(cell), ()):
                    tpl = self.templates[camera]
                    for j in idx:
                        rows.append((int(tpl.star_id[j]), float(tpl.ra_deg[j]),
                                     float(tpl.dec_deg[j]), float(tpl.ref_mag[j]),
                                     float("nan")))
            rows.sort(key=lambda r: r[0])
            elapsed = (time.perf_counter() - t0) * 1e3
            return ResultSet(
                columns=["star_id", "ra_deg", "dec_deg", "ref_mag", "distance_deg"],
                rows=rows,
                meta=ResultMeta(engines=("cache",), elapsed_ms=elapsed,
                                approximate=True, est_precision=p_hat),
            )

        # Fallback: interior cells whole, boundary cells distance-filtered;
        # the result equals the exact answer.
        rows = []
        for cell, inner in zip(cells, interior):
            for camera, idx in self._cells.get(int(cell), ()):
                tpl = self.templates[camera]
                if inner:
                    sep = angular_sep_deg(ra, dec, tpl.ra_deg[idx], tpl.dec_deg[idx])
                    sel, dist = idx, sep
                else:
                    sep = angular_sep_deg(ra, dec, tpl.ra_deg[idx], tpl.dec_deg[idx])
                    keep = sep <= radius_deg
                    sel, dist = idx[keep], sep[keep]
                for j, d in zip(sel, dist):
                    rows.append((int(tpl.star_id[j]), float(tpl.ra_deg[j]),
                                 float(tpl.dec_deg[j]), float(tpl.ref_mag[j]), float(d)))
        rows.sort(key=lambda r: (r[4], r[0]))
        elapsed = (time.perf_counter() - t0) * 1e3
        return ResultSet(
            columns=["star_id", "ra_deg", "dec_deg", "ref_mag", "distance_deg"],
            rows=rows,
            meta=ResultMeta(engines=("cache",), elapsed_ms=elapsed,
                            approximate=False, est_precision=1.0),
        )

    # -- routing ----------------------------------------------------------

    def route(self, ast: QueryAst) -> Plan:
        boundary = self.store.start_ms
        if isinstance(ast, (ConeQuery, StatsQuery)):
            return Plan(engines=("cache",), boundary_ms=boundary)
        if isinstance(ast, EventsQuery):
            night_live = bool(self.store._night.shards)
            return Plan(engines=("cache",) if night_live else ("archive",),
                        boundary_ms=boundary)

        t_from = ast.t_from if ast.t_from is not None else boundary
        t_to = ast.t_to if ast.t_to is not None else 2 ** 62
        if ast.source == "cache":
            if t_from < boundary:
                raise RangeError("source=cache cannot serve a pre-night range")
            return Plan(engines=("cache",), cache_t_range=(t_from, t_to),
                        boundary_ms=boundary)
        if ast.source == "archive":
            return Plan(engines=("archive",), archive_t_range=(t_from, t_to + 1),
                        boundary_ms=boundary)
        if t_to < boundary:
            return Plan(engines=("archive",), archive_t_range=(t_from, t_to + 1),
                        boundary_ms=boundary)
        if t_from >= boundary:
            return Plan(engines=("cache",), cache_t_range=(t_from, t_to),
                        boundary_ms=boundary)
        return Plan(engines=("archive", "cache"),
                    archive_t_range=(t_from, boundary),
                    cache_t_range=(boundary, t_to), boundary_ms=boundary)

    # -- execution --------------------------------------------------------

    def execute(self, ast: QueryAst) -> ResultSet:
        if isinstance(ast, ConeQuery):
            if ast.accuracy >= 1.0:
                return self.cone_search_exact(ast.ra_deg, ast.dec_deg, ast.radius_deg)
            return self.cone_search_approx(ast.ra_deg, ast.dec_deg,
                                           ast.radius_deg, ast.accuracy)
        plan = self.route(ast)
        if isinstance(ast, StatsQuery):
            return self._exec_stats(ast)
        if isinstance(ast, EventsQuery):
            return self._exec_events(ast, plan)
        return self._exec_lightcurve(ast, plan)

    def _exec_stats(self, ast: StatsQuery) -> ResultSet:
        t0 = time.perf_counter()
        ps = self.store.get_prestats(ast.star_id)    # raises NotFoundError
        elapsed = (time.perf_counter() - t0) * 1e3
        return ResultSet(
            columns=["star_id", "n", "mean", "variance", "min_mag", "max_mag",
                     "n_events", "max_event_score", "first_event_seq", "last_event_seq"],
            rows=[(ps.star_id, ps.n, ps.mean, ps.variance, ps.min_mag, ps.max_mag,
                   ps.n_events, ps.max_event_score, ps.first_event_seq, ps.last_event_seq)],
            meta=ResultMeta(engines=("cache",), elapsed_ms=elapsed),
        )

    def _exec_events(self, ast: EventsQuery, plan: Plan) -> ResultSet:
        t0 = time.perf_counter()
        lo = ast.seq_from if ast.seq_from is not None else 0
        hi = ast.seq_to if ast.seq_to is not None else 2 ** 62
        rows: list[tuple] = []
        if "cache" in plan.engines:
            for rec in self.store.scan_events(lo, hi, ast.min_score):
                rows.append((rec.camera, rec.cell, rec.seq, rec.star_id,
                             rec.score, rec.model_id))
        else:
            if self.archive is None:
                raise EngineUnavailableError("archive", "no archive store configured")
            nights = self.archive.night_ids()
            if nights:
                rows = [tuple(r) for r in
                        self.archive.read_events(nights[-1], lo, hi, ast.min_score)]
        elapsed = (time.perf_counter() - t0) * 1e3
        return ResultSet(
            columns=["camera", "cell", "seq", "star_id", "score", "model_id"],
            rows=rows,
            meta=ResultMeta(engines=plan.engines, elapsed_ms=elapsed),
        )

    def _exec_lightcurve(self, ast: LightCurveQuery, plan: Plan) -> ResultSet:
        t0 = time.perf_counter()
        rows: list[tuple] = []
        seen: set[tuple[str, int]] = set()
        found = False

        if "archive" in plan.engines:
            if self.archive is None:
                raise EngineUnavailableError("archive", "no archive store configured")
            lo, hi = plan.archive_t_range
            current = self.store.night_id
            nights = [n for n in self.archive.night_ids() if n != current]
            try:
                for night_id, seq, t_ms, mag in self.archive.read_lightcurve(
                        ast.star_id, nights):
                    if lo <= t_ms < hi and (night_id, seq) not in seen:
                        seen.add((night_id, seq))
                        rows.append((night_id, seq, t_ms, mag))
                found = True
            except KeyError:
                pass

        if "cache" in plan.engines:
            lo, hi = plan.cache_t_range
            start = self.store.start_ms
            cadence = self.store.cadence_ms
            seq_lo = max(0, math.ceil((lo - start) / cadence))
            seq_hi = math.floor((hi - start) / cadence) if hi < 2 ** 61 else 2 ** 61
            night_id = self.store.night_id
            try:
                for seq, mag in self.store.get_lightcurve(ast.star_id, seq_lo, seq_hi):
                    key = (night_id, seq)
                    if key not in seen:
                        seen.add(key)
                        rows.append((night_id, seq, start + seq * cadence, float(mag)))
                found = True
            except NotFoundError:
                pass

        if not found or (not rows and not self._star_known(ast.star_id)):
            raise NotFoundError(f"unknown star {ast.star_id}")
        rows.sort(key=lambda r: r[2])
        elapsed = (time.perf_counter() - t0) * 1e3
        return ResultSet(columns=["night_id", "seq", "timestamp_ms", "mag"], rows=rows,
                         meta=ResultMeta(engines=plan.engines, elapsed_ms=elapsed))

    def _star_known(self, star_id: int) -> bool:
        camera = (star_id >> 56) & 0xFF
        tpl = self.templates.get(camera)
        if tpl is None or len(tpl) == 0:
            return False
        return bool(np.isin(np.uint64(star_id), tpl.star_id).any())
