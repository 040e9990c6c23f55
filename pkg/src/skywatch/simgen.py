"""Deterministic per-camera catalog stream generator with injected transients.

Each simulated camera observes a fixed star field at a fixed cadence and
emits one 25-column catalog per exposure cycle.  Transient events (point-lens
brightenings and fast-rise/exponential-decay flares) are attached to stars
according to a night plan drawn up front, so a full night is a pure function
of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

# Canonical 25-column catalog schema: 13 semantic columns + 12 reserved reals.
CATALOG_COLUMNS: tuple[str, ...] = (
    "seq",
    "timestamp_ms",
    "x_pix",
    "y_pix",
    "ra_deg",
    "dec_deg",
    "mag",
    "mag_err",
    "flux",
    "flux_err",
    "ellipticity",
    "fwhm_pix",
    "flag",
) + tuple(f"aux{i}" for i in range(1, 13))

DETECTOR_PIX = 4096.0          # square detector, pixels
FIELD_FOV_DEG = 16.0           # footprint edge length, degrees
FIELD_DEC_LO = -8.0            # all cameras share one dec band
CAMERA_RA_STRIDE_DEG = 18.0    # footprint centers 18 deg apart in ra
POS_JITTER_PIX = 0.2           # per-exposure sub-pixel position jitter
FLUX_ZEROPOINT = 25.0
MICROLENS_EDGE_U = 3.0         # impact parameter at the event window edge

# Sub-stream tags so per-purpose RNGs never collide.
_TAG_FIELD = 0x51E1D
_TAG_EXPOSURE = 0xE4305
_TAG_PLAN = 0x974A17


class GenConfigError(ValueError):
    """Invalid generator configuration or arguments."""


@dataclass(frozen=True)
class GenConfig:
    cameras: int = 4
    stars_per_camera: int = 20_000
    cycles: int = 480
    cadence_ms: int = 15_000
    seed: int = 1
    noise_sigma: float = 0.03
    transient_mean_per_cycle: float = 5.0
    base_mag_range: tuple[float, float] = (10.0, 16.0)
    night_start_ms: int = 1_700_000_000_000
    transient_duration_range: tuple[int, int] = (20, 120)

    def __post_init__(self) -> None:
        if self.cameras < 1:
            raise GenConfigError("cameras must be >= 1")
        if self.stars_per_camera < 1:
            raise GenConfigError("stars_per_camera must be >= 1")
        if self.cadence_ms <= 0:
            raise GenConfigError("cadence_ms must be > 0")
        if self.base_mag_range[0] > self.base_mag_range[1]:
            raise GenConfigError("base_mag_range must be ordered")
        if self.transient_mean_per_cycle < 0:
            raise GenConfigError("transient_mean_per_cycle must be >= 0")
        lo, hi = self.transient_duration_range
        if lo < 1 or hi < lo:
            raise GenConfigError("transient_duration_range must be ordered and >= 1")

    @property
    def total_stars(self) -> int:
        return self.cameras * self.stars_per_camera


@dataclass(frozen=True)
class CatalogRow:
    seq: int
    timestamp_ms: int
    x_pix: float
    y_pix: float
    ra_deg: float
    dec_deg: float
    mag: float
    mag_err: float
    flux: float
    flux_err: float
    ellipticity: float
    fwhm_pix: float
    flag: int
    aux: tuple[float, ...]

    def as_tuple(self) -> tuple:
        return (
            self.seq, self.timestamp_ms, self.x_pix, self.y_pix,
            self.ra_deg, self.dec_deg, self.mag, self.mag_err,
            self.flux, self.flux_err, self.ellipticity, self.fwhm_pix,
            self.flag, *self.aux,
        )


class Catalog(Sequence):
    """Columnar catalog: a sequence of CatalogRow backed by numpy columns."""

    def __init__(self, columns: dict[str, np.ndarray]):
        missing = set(CATALOG_COLUMNS) - set(columns)
        if missing:
            raise GenConfigError(f"catalog missing columns: {sorted(missing)}")
        n = len(columns["seq"])
        for name in CATALOG_COLUMNS:
            if len(columns[name]) != n:
                raise GenConfigError(f"column {name} length mismatch")
        self.columns = {name: columns[name] for name in CATALOG_COLUMNS}
        self._n = n

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i: int) -> CatalogRow:
        c = self.columns
        return CatalogRow(
            seq=int(c["seq"][i]),
            timestamp_ms=int(c["timestamp_ms"][i]),
            x_pix=float(c["x_pix"][i]),
            y_pix=float(c["y_pix"][i]),
            ra_deg=float(c["ra_deg"][i]),
            dec_deg=float(c["dec_deg"][i]),
            mag=float(c["mag"][i]),
            mag_err=float(c["mag_err"][i]),
            flux=float(c["flux"][i]),
            flux_err=float(c["flux_err"][i]),
            ellipticity=float(c["ellipticity"][i]),
            fwhm_pix=float(c["fwhm_pix"][i]),
            flag=int(c["flag"][i]),
            aux=tuple(float(c[f"aux{k}"][i]) for k in range(1, 13)),
        )

    def __iter__(self) -> Iterator[CatalogRow]:
        for i in range(self._n):
            yield self[i]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.columns, columns=list(CATALOG_COLUMNS))

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.6f")

    @classmethod
    def read_csv(cls, path: str | Path) -> "Catalog":
        frame = pd.read_csv(path)
        if list(frame.columns) != list(CATALOG_COLUMNS):
            raise GenConfigError(f"{path}: expected 25 canonical columns")
        return cls({name: frame[name].to_numpy() for name in CATALOG_COLUMNS})


def catalog_filename(camera: int, seq: int) -> str:
    return f"camera{camera}_seq{seq}.cat"


@dataclass(frozen=True)
class TransientEvent:
    star_index: int            # global index: camera * stars_per_camera + local
    kind: str                  # "microlensing" | "flare"
    t0_seq: int
    duration_cycles: int
    amplitude: float           # peak |delta mag|
    shape_param: float         # impact parameter (lens) or decay time (flare)
    field_u: float             # drawn event position, normalized field coords
    field_v: float

    def __post_init__(self) -> None:
        if self.duration_cycles < 1:
            raise GenConfigError("duration_cycles must be >= 1")
        if self.amplitude <= 0:
            raise GenConfigError("amplitude must be > 0")
        if self.kind not in ("microlensing", "flare"):
            raise GenConfigError(f"unknown event kind {self.kind!r}")


@dataclass
class NightPlan:
    events: list[TransientEvent]
    per_cycle_counts: np.ndarray
    _per_camera: dict[int, dict[str, np.ndarray]] = field(default_factory=dict, repr=False)

    def events_for_camera(self, camera: int, stars_per_camera: int) -> dict[str, np.ndarray]:
        """Array-of-struct view of this camera's events, cached for the gen loop."""
        cached = self._per_camera.get(camera)
        if cached is not None:
            return cached
        evs = [e for e in self.events
               if e.star_index // stars_per_camera == camera]
        view = {
            "local_star": np.array([e.star_index % stars_per_camera for e in evs], dtype=np.int64),
            "t0": np.array([e.t0_seq for e in evs], dtype=np.int64),
            "duration": np.array([e.duration_cycles for e in evs], dtype=np.int64),
            "is_lens": np.array([e.kind == "microlensing" for e in evs], dtype=bool),
            "amplitude": np.array([e.amplitude for e in evs], dtype=np.float64),
            "shape": np.array([e.shape_param for e in evs], dtype=np.float64),
        }
        self._per_camera[camera] = view
        return view


@dataclass(frozen=True)
class StarField:
    """Fixed per-camera star field: base positions and magnitudes."""

    camera: int
    x_pix: np.ndarray
    y_pix: np.ndarray
    base_mag: np.ndarray
    aux_base: np.ndarray       # (n, 3) per-star constants for aux1..aux3

    @property
    def n(self) -> int:
        return len(self.x_pix)


def make_star_field(cfg: GenConfig, camera: int) -> StarField:
    if not 0 <= camera < cfg.cameras:
        raise GenConfigError(f"camera {camera} out of range [0, {cfg.cameras})")
    rng = np.random.default_rng([cfg.seed, camera, _TAG_FIELD])
    n = cfg.stars_per_camera
    x = rng.uniform(0.0, DETECTOR_PIX, n)
    y = rng.uniform(0.0, DETECTOR_PIX, n)
    lo, hi = cfg.base_mag_range
    base_mag = rng.uniform(lo, hi, n)
    aux_base = np.column_stack([
        rng.uniform(100.0, 200.0, n),          # local sky background
        rng.uniform(1.0, 1.8, n),              # airmass-like factor
        rng.uniform(0.0, 1.0, n),              # blend score placeholder
    ])
    return StarField(camera=camera, x_pix=x, y_pix=y, base_mag=base_mag, aux_base=aux_base)


def pix_to_sky(camera: int, x_pix: np.ndarray, y_pix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map detector pixels to (ra, dec); each camera owns a disjoint footprint."""
    ra0 = (camera * CAMERA_RA_STRIDE_DEG) % 360.0
    ra = (ra0 + (np.asarray(x_pix) / DETECTOR_PIX) * FIELD_FOV_DEG) % 360.0
    dec = FIELD_DEC_LO + (np.asarray(y_pix) / DETECTOR_PIX) * FIELD_FOV_DEG
    return ra, np.clip(dec, -90.0, 90.0)


def _point_lens_amplification(u: np.ndarray) -> np.ndarray:
    u = np.maximum(np.asarray(u, dtype=np.float64), 1e-9)
    return (u * u + 2.0) / (u * np.sqrt(u * u + 4.0))


def microlens_delta_mag(u: np.ndarray) -> np.ndarray:
    """Magnitude offset of a point-lens event at impact parameter u (negative)."""
    return -2.5 * np.log10(_point_lens_amplification(u))


def _transient_delta(kind_is_lens, t0, duration, amplitude, shape, seq) -> np.ndarray:
    """Vectorized delta-mag of events at exposure `seq`; zero outside windows."""
    t0 = np.asarray(t0, dtype=np.float64)
    duration = np.asarray(duration, dtype=np.float64)
    amplitude = np.asarray(amplitude, dtype=np.float64)
    shape = np.asarray(shape, dtype=np.float64)
    lens = np.asarray(kind_is_lens, dtype=bool)

    inside = (seq >= t0) & (seq < t0 + duration)
    delta = np.zeros_like(t0)

    # Point lens: u falls linearly from the window edge to shape (u_min) at
    # mid-event, so the magnification curve peaks sharply in the middle.
    half = np.maximum(duration / 2.0, 0.5)
    mid = t0 + duration / 2.0
    u = shape + (MICROLENS_EDGE_U - shape) * np.abs(seq - mid) / half
    sel = inside & lens
    if np.any(sel):
        delta[sel] = microlens_delta_mag(np.maximum(u[sel], shape[sel]))

    # Flare: linear rise over ~10% of the window, then exponential decay.
    sel = inside & ~lens
    if np.any(sel):
        t_rise = np.maximum(1.0, np.round(0.1 * duration[sel]))
        dt = seq - t0[sel]
        rising = dt < t_rise
        frac = np.where(
            rising,
            (dt + 1.0) / t_rise,
            np.exp(-(dt - t_rise + 1.0) / np.maximum(shape[sel], 1.0)),
        )
        delta[sel] = -amplitude[sel] * np.clip(frac, 0.0, 1.0)
    return delta


def apply_transient(base_mag: float, ev: TransientEvent, seq: int) -> float:
    """Magnitude of a star hosting `ev` at exposure `seq` (base outside the window)."""
    delta = _transient_delta(
        np.array([ev.kind == "microlensing"]),
        np.array([ev.t0_seq]),
        np.array([ev.duration_cycles]),
        np.array([ev.amplitude]),
        np.array([ev.shape_param]),
        seq,
    )[0]
    return float(base_mag + delta)


def make_night_plan(cfg: GenConfig, rng_seed: int | None = None) -> NightPlan:
    """Draw the night's transient events.

    Per-cycle new-event counts are i.i.d. geometric (support 0, 1, ...) with
    mean `cfg.transient_mean_per_cycle`; event positions are uniform over the
    field and each event attaches to the nearest star of a uniformly chosen
    camera.
    """
    seed = cfg.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng([seed, _TAG_PLAN])

    mean = cfg.transient_mean_per_cycle
    if mean == 0:
        counts = np.zeros(cfg.cycles, dtype=np.int64)
    else:
        p = 1.0 / (1.0 + mean)
        counts = rng.geometric(p, size=cfg.cycles) - 1

    total = int(counts.sum())
    cameras = rng.integers(0, cfg.cameras, size=total)
    pos_u = rng.uniform(0.0, 1.0, size=total)
    pos_v = rng.uniform(0.0, 1.0, size=total)
    is_lens = rng.random(total) < 0.5
    dur_lo, dur_hi = cfg.transient_duration_range
    durations = rng.integers(dur_lo, dur_hi + 1, size=total)
    u_min = rng.uniform(0.02, 0.6, size=total)
    flare_amp = rng.uniform(0.3, 2.5, size=total)

    trees = {}
    fields = {}
    for cam in np.unique(cameras):
        fields[cam] = make_star_field(cfg, int(cam))
        trees[cam] = cKDTree(np.column_stack([fields[cam].x_pix, fields[cam].y_pix]))

    t0s = np.repeat(np.arange(cfg.cycles, dtype=np.int64), counts)
    events: list[TransientEvent] = []
    for i in range(total):
        cam = int(cameras[i])
        _, local = trees[cam].query([pos_u[i] * DETECTOR_PIX, pos_v[i] * DETECTOR_PIX])
        if is_lens[i]:
            kind = "microlensing"
            shape = float(u_min[i])
            amp = float(-microlens_delta_mag(np.array([shape]))[0])
        else:
            kind = "flare"
            shape = max(2.0, 0.2 * float(durations[i]))
            amp = float(flare_amp[i])
        events.append(TransientEvent(
            star_index=cam * cfg.stars_per_camera + int(local),
            kind=kind,
            t0_seq=int(t0s[i]),
            duration_cycles=int(durations[i]),
            amplitude=amp,
            shape_param=shape,
            field_u=float(pos_u[i]),
            field_v=float(pos_v[i]),
        ))
    return NightPlan(events=events, per_cycle_counts=counts)


def gen_catalog(camera: int, seq: int, cfg: GenConfig, plan: NightPlan,
                star_field: StarField | None = None) -> Catalog:
    """Generate one camera's catalog for exposure `seq`.

    Deterministic given (cfg.seed, camera, seq): repeated calls produce
    byte-identical catalogs.
    """
    if not 0 <= camera < cfg.cameras:
        raise GenConfigError(f"camera {camera} out of range [0, {cfg.cameras})")
    if not 0 <= seq < cfg.cycles:
        raise GenConfigError(f"seq {seq} out of range [0, {cfg.cycles})")

    sf = star_field if star_field is not None else make_star_field(cfg, camera)
    n = sf.n
    rng = np.random.default_rng([cfg.seed, camera, _TAG_EXPOSURE, seq])

    x = sf.x_pix + rng.normal(0.0, POS_JITTER_PIX, n)
    y = sf.y_pix + rng.normal(0.0, POS_JITTER_PIX, n)
    mag = sf.base_mag + rng.normal(0.0, cfg.noise_sigma, n)

    ev = plan.events_for_camera(camera, cfg.stars_per_camera)
    if len(ev["t0"]):
        active = (ev["t0"] <= seq) & (seq < ev["t0"] + ev["duration"])
        if np.any(active):
            delta = _transient_delta(
                ev["is_lens"][active], ev["t0"][active], ev["duration"][active],
                ev["amplitude"][active], ev["shape"][active], seq,
            )
            np.add.at(mag, ev["local_star"][active], delta)

    ra, dec = pix_to_sky(camera, x, y)
    mag_err = 0.01 + 0.05 * 10.0 ** (0.4 * (mag - cfg.base_mag_range[1]))
    flux = 10.0 ** ((FLUX_ZEROPOINT - mag) / 2.5)
    flux_err = flux * mag_err * math.log(10.0) / 2.5
    ellipticity = np.clip(rng.normal(0.1, 0.05, n), 0.0, 0.9)
    fwhm = np.clip(2.5 + rng.normal(0.0, 0.2, n), 0.5, None)

    cols: dict[str, np.ndarray] = {
        "seq": np.full(n, seq, dtype=np.int64),
        "timestamp_ms": np.full(n, cfg.night_start_ms + seq * cfg.cadence_ms, dtype=np.int64),
        "x_pix": x,
        "y_pix": y,
        "ra_deg": ra,
        "dec_deg": dec,
        "mag": mag,
        "mag_err": mag_err,
        "flux": flux,
        "flux_err": flux_err,
        "ellipticity": ellipticity,
        "fwhm_pix": fwhm,
        "flag": np.zeros(n, dtype=np.int64),
        "aux1": sf.aux_base[:, 0],
        "aux2": sf.aux_base[:, 1],
        "aux3": sf.aux_base[:, 2],
    }
    for k in range(4, 13):
        cols[f"aux{k}"] = np.zeros(n, dtype=np.float64)
    return Catalog(cols)


def write_night(cfg: GenConfig, out_dir: str | Path,
                plan: NightPlan | None = None) -> list[Path]:
    """Write every camera/cycle catalog of a night as CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = plan if plan is not None else make_night_plan(cfg)
    paths = []
    for camera in range(cfg.cameras):
        sf = make_star_field(cfg, camera)
        for seq in range(cfg.cycles):
            cat = gen_catalog(camera, seq, cfg, plan, star_field=sf)
            path = out / catalog_filename(camera, seq)
            cat.write_csv(path)
            paths.append(path)
    return paths
