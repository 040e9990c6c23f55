"""Long-term store: per-night compressed columnar segments.

Each night's normalized catalogs are ingested into three logical tables:
Info (every non-magnitude column), Mag (star id -> ordered magnitude
series), and a Template snapshot.  Integer columns are delta-encoded
(timestamps delta-of-delta), zigzag-mapped, and varint-packed.  Chunks of
up to BUFFER_CATALOGS catalogs are committed atomically (write temp, fsync,
rename, journal), so ingestion can be killed and replayed to byte-identical
segments.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .simgen import CATALOG_COLUMNS
from .xmatch import Template, crossmatch, dedupe_matches, star_id_serial

BUFFER_CATALOGS = 64          # catalogs staged per segment chunk
MAG_SCALE = 1000              # millimag fixed point
MAG_LIMIT = 40.0

SEGMENT_MAGIC = b"SWSEG1\x00\x00"
SEGMENT_VERSION = 1

GROUP_INFO = 0
GROUP_MAG = 1

CODEC_DELTA = 1
CODEC_DELTA_OF_DELTA = 2

# Info-group columns (catalog order minus mag/mag_err) and their fixed-point
# scale factors; values are stored as round(value * scale).
INFO_COLUMNS: tuple[tuple[str, int], ...] = (
    ("seq", 1),
    ("timestamp_ms", 1),
    ("x_pix", 1000),
    ("y_pix", 1000),
    ("flux", 1000),
    ("flux_err", 1000),
    ("ellipticity", 1_000_000),
    ("fwhm_pix", 1000),
    ("flag", 1),
) + tuple((f"aux{i}", 1000) for i in range(1, 13))


class CorruptionError(RuntimeError):
    """Malformed encoded payload; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class QuantizeError(ValueError):
    """Magnitude outside the representable fixed-point range."""


class SimulatedCrash(RuntimeError):
    """Raised by ingest fault hooks in crash-replay tests."""


# -- fixed-point magnitudes ----------------------------------------------

def quantize_mag(mag: float) -> int:
    if not -MAG_LIMIT < mag < MAG_LIMIT:
        raise QuantizeError(f"mag {mag} outside (+/-{MAG_LIMIT})")
    return round(mag * MAG_SCALE)


def dequantize_mag(q: int) -> float:
    return q / MAG_SCALE


def quantize_mags(mags: np.ndarray) -> np.ndarray:
    m = np.asarray(mags, dtype=np.float64)
    if np.any(~np.isfinite(m)) or np.any(np.abs(m) >= MAG_LIMIT):
        raise QuantizeError("mag outside representable range")
    return np.rint(m * MAG_SCALE).astype(np.int64)


# -- varint + zigzag vector codec ----------------------------------------

def _zigzag(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.int64)
    return ((v.astype(np.uint64) << np.uint64(1))
            ^ (v >> np.int64(63)).astype(np.uint64))


def _unzigzag(u: np.ndarray) -> np.ndarray:
    return ((u >> np.uint64(1)).astype(np.int64)
            ^ -(u & np.uint64(1)).astype(np.int64))


def encode_varints(values: np.ndarray) -> bytes:
    """Zigzag + LEB128 varint packing of signed 64-bit integers."""
    v = np.asarray(values, dtype=np.int64)
    if len(v) == 0:
        return b""
    u = _zigzag(v)
    if u.max() < 0x80:          # single-byte fast path (flags, small deltas)
        return u.astype(np.uint8).tobytes()
    lengths = np.ones(len(u), dtype=np.int64)
    for b in range(1, 10):
        over = u >= (np.uint64(1) << np.uint64(7 * b))
        if not over.any():
            break
        lengths += over.astype(np.int64)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    out = np.zeros(int(lengths.sum()), dtype=np.uint8)
    for b in range(10):
        mask = lengths > b
        if not np.any(mask):
            break
        chunk = ((u[mask] >> np.uint64(7 * b)) & np.uint64(0x7F)).astype(np.uint8)
        cont = (lengths[mask] - 1 > b)
        out[starts[mask] + b] = chunk | (cont.astype(np.uint8) << 7)
    return out.tobytes()


def decode_varints(payload: bytes, count: int) -> np.ndarray:
    """Inverse of encode_varints; raises CorruptionError on malformed input."""
    if count == 0:
        if payload:
            raise CorruptionError("trailing bytes after last value", 0)
        return np.zeros(0, dtype=np.int64)
    raw = np.frombuffer(payload, dtype=np.uint8)
    if len(raw) == 0:
        raise CorruptionError("empty payload", 0)
    term = np.flatnonzero(raw < 0x80)
    if len(term) != count:
        if len(term) < count:
            raise CorruptionError("payload truncated mid-value", len(raw))
        raise CorruptionError("value count mismatch",
                              int(term[count - 1]) + 1 if count else 0)
    if raw[-1] >= 0x80:
        raise CorruptionError("payload truncated mid-value", len(raw))
    starts = np.concatenate([[0], term[:-1] + 1])
    lengths = term - starts + 1
    if np.any(lengths > 10):
        raise CorruptionError("varint longer than 10 bytes",
                              int(starts[int(np.argmax(lengths > 10))]))
    u = np.zeros(count, dtype=np.uint64)
    for b in range(int(lengths.max())):
        mask = lengths > b
        u[mask] |= ((raw[starts[mask] + b] & np.uint64(0x7F)).astype(np.uint64)
                    << np.uint64(7 * b))
    return _unzigzag(u)


@dataclass(frozen=True)
class EncodedColumn:
    codec: int
    count: int
    payload: bytes

    @property
    def n_bytes(self) -> int:
        return len(self.payload) + 9    # + frame header


def encode_column(values, codec: int = CODEC_DELTA) -> EncodedColumn:
    """Delta (or delta-of-delta) -> zigzag -> varint encoding."""
    v = np.asarray(values, dtype=np.int64)
    if len(v) == 0:
        return EncodedColumn(codec=codec, count=0, payload=b"")
    deltas = np.diff(v, prepend=np.int64(0))
    if codec == CODEC_DELTA_OF_DELTA:
        deltas = np.diff(deltas, prepend=np.int64(0))
    elif codec != CODEC_DELTA:
        raise ValueError(f"unknown codec {codec}")
    return EncodedColumn(codec=codec, count=len(v), payload=encode_varints(deltas))


def decode_column(col: EncodedColumn) -> np.ndarray:
    """Exact inverse of encode_column."""
    deltas = decode_varints(col.payload, col.count)
    if col.codec == CODEC_DELTA_OF_DELTA:
        deltas = np.cumsum(deltas)
    elif col.codec != CODEC_DELTA:
        raise CorruptionError(f"unknown codec id {col.codec}", 0)
    return np.cumsum(deltas)


def _frame_column(col: EncodedColumn) -> bytes:
    head = (col.codec.to_bytes(1, "little")
            + col.count.to_bytes(4, "little")
            + len(col.payload).to_bytes(4, "little"))
    return head + col.payload


def _unframe_column(buf: bytes, offset: int) -> tuple[EncodedColumn, int]:
    if offset + 9 > len(buf):
        raise CorruptionError("column frame truncated", offset)
    codec = buf[offset]
    count = int.from_bytes(buf[offset + 1:offset + 5], "little")
    plen = int.from_bytes(buf[offset + 5:offset + 9], "little")
    end = offset + 9 + plen
    if end > len(buf):
        raise CorruptionError("column payload truncated", len(buf))
    return EncodedColumn(codec=codec, count=count, payload=buf[offset + 9:end]), end


# -- segment chunk files --------------------------------------------------

@dataclass
class _CellBuffer:
    """Staged rows of one (camera, cell), ordered by (serial, seq)."""

    serials: list[np.ndarray] = field(default_factory=list)
    seqs: list[np.ndarray] = field(default_factory=list)
    qmags: list[np.ndarray] = field(default_factory=list)
    qerrs: list[np.ndarray] = field(default_factory=list)
    info: dict[str, list[np.ndarray]] = field(default_factory=dict)


def _encode_mag_group(serials, seqs, qmags, qerrs) -> bytes:
    order = np.lexsort((seqs, serials))
    s = serials[order]
    uniq, counts = np.unique(s, return_counts=True)
    blob = len(uniq).to_bytes(4, "little")
    blob += _frame_column(encode_column(uniq))
    blob += _frame_column(encode_column(counts))
    blob += _frame_column(encode_column(seqs[order]))
    blob += _frame_column(encode_column(qmags[order]))
    blob += _frame_column(encode_column(qerrs[order]))
    return blob


def _encode_info_group(cellbuf: _CellBuffer, order: np.ndarray) -> bytes:
    n = len(order)
    blob = n.to_bytes(4, "little")
    for name, scale in INFO_COLUMNS:
        raw = np.concatenate(cellbuf.info[name]) if cellbuf.info[name] else np.zeros(0)
        if len(raw) and not raw.any():
            vals = np.zeros(len(raw), dtype=np.int64)
        elif scale != 1:
            vals = np.rint(raw[order] * scale).astype(np.int64)
        else:
            vals = raw[order].astype(np.int64)
        codec = CODEC_DELTA_OF_DELTA if name == "timestamp_ms" else CODEC_DELTA
        blob += _frame_column(encode_column(vals, codec))
    return blob


def write_chunk(path: Path, night_id: str, camera: int, chunk_index: int,
                cells: dict[int, _CellBuffer]) -> int:
    """Serialize staged cell buffers into one chunk file; returns bytes written.

    Layout: header, directory of (cell, group) -> offset/length, payloads.
    Commit is atomic: temp file, fsync, rename.
    """
    entries = []       # (cell, group, blob)
    for cell in sorted(cells):
        buf = cells[cell]
        serials = np.concatenate(buf.serials)
        seqs = np.concatenate(buf.seqs)
        qmags = np.concatenate(buf.qmags)
        qerrs = np.concatenate(buf.qerrs)
        order = np.lexsort((seqs, serials))
        entries.append((cell, GROUP_INFO, _encode_info_group(buf, order)))
        entries.append((cell, GROUP_MAG,
                        _encode_mag_group(serials, seqs, qmags, qerrs)))

    night_bytes = night_id.encode()
    header = (SEGMENT_MAGIC
              + SEGMENT_VERSION.to_bytes(2, "little")
              + len(night_bytes).to_bytes(2, "little") + night_bytes
              + camera.to_bytes(2, "little")
              + chunk_index.to_bytes(4, "little")
              + len(entries).to_bytes(4, "little"))
    dir_bytes = len(header) + len(entries) * (4 + 1 + 8 + 8)
    offset = dir_bytes
    directory = b""
    payload = b""
    for cell, group, blob in entries:
        directory += (cell.to_bytes(4, "little") + group.to_bytes(1, "little")
                      + offset.to_bytes(8, "little") + len(blob).to_bytes(8, "little"))
        payload += blob
        offset += len(blob)

    data = header + directory + payload
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return len(data)


def read_chunk_directory(path: Path) -> dict[tuple[int, int], tuple[int, int]]:
    """(cell, group) -> (offset, length) map of one chunk file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SEGMENT_MAGIC:
            raise CorruptionError(f"{path}: bad magic", 0)
        fh.read(2)  # version
        nlen = int.from_bytes(fh.read(2), "little")
        fh.read(nlen + 2 + 4)
        n_entries = int.from_bytes(fh.read(4), "little")
        out = {}
        for _ in range(n_entries):
            cell = int.from_bytes(fh.read(4), "little")
            group = fh.read(1)[0]
            off = int.from_bytes(fh.read(8), "little")
            length = int.from_bytes(fh.read(8), "little")
            out[(cell, group)] = (off, length)
        return out


def read_chunk_group(path: Path, cell: int, group: int) -> bytes | None:
    directory = read_chunk_directory(path)
    loc = directory.get((cell, group))
    if loc is None:
        return None
    with open(path, "rb") as fh:
        fh.seek(loc[0])
        return fh.read(loc[1])


def decode_mag_group(blob: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(star_serials, counts, seqs, qmags, qerrs) of one cell's Mag group."""
    offset = 4
    cols = []
    for _ in range(5):
        col, offset = _unframe_column(blob, offset)
        cols.append(decode_column(col))
    return tuple(cols)  # type: ignore[return-value]


def decode_info_group(blob: bytes) -> dict[str, np.ndarray]:
    offset = 4
    out = {}
    for name, scale in INFO_COLUMNS:
        col, offset = _unframe_column(blob, offset)
        vals = decode_column(col)
        out[name] = vals / scale if scale != 1 else vals
    return out


# -- night ingestion ------------------------------------------------------

_SPOOL_PATTERNS = (
    re.compile(r"camera(\d+)_seq(\d+)\.cat$"),
    re.compile(r"(\d+)/seq(\d+)\.cat$"),
)


def read_catalog_columns(path: Path) -> dict[str, np.ndarray]:
    """Shared CSV reader for ingest paths (both the columnar store and the
    naive baseline use it, so their comparison excludes parser choice)."""
    try:
        from pyarrow import csv as pacsv

        table = pacsv.read_csv(path)
        return {name: table.column(name).to_numpy().astype(np.float64, copy=False)
                for name in table.column_names}
    except ImportError:
        frame = pd.read_csv(path, dtype=np.float64)
        return {name: frame[name].to_numpy() for name in frame.columns}


def read_catalog_frame(path: Path) -> pd.DataFrame:
    return pd.DataFrame(read_catalog_columns(path))


def discover_spool(spool_dir: str | Path) -> list[tuple[int, int, Path]]:
    """(camera, seq, path) for every catalog file under the spool directory."""
    out = []
    for path in sorted(Path(spool_dir).rglob("*.cat")):
        rel = str(path)
        for pat in _SPOOL_PATTERNS:
            m = pat.search(rel)
            if m:
                out.append((int(m.group(1)), int(m.group(2)), path))
                break
    out.sort(key=lambda t: (t[0], t[1]))
    return out


@dataclass
class IngestSummary:
    night_id: str
    files_ingested: int = 0
    files_skipped: int = 0
    files_failed: int = 0
    rows: int = 0
    rows_quarantined: int = 0
    chunks_written: int = 0
    bytes_written: int = 0
    per_file_seconds: list[float] = field(default_factory=list)


class IdleGate:
    """Busy/idle transitions published by the live pipeline scheduler."""

    def __init__(self) -> None:
        self._idle = threading.Event()
        self._idle.set()

    def set_busy(self) -> None:
        self._idle.clear()

    def set_idle(self) -> None:
        self._idle.set()

    @property
    def is_idle(self) -> bool:
        return self._idle.is_set()

    def wait_idle(self, timeout: float | None = None) -> bool:
        return self._idle.wait(timeout)


class ArchiveStore:
    """On-disk store of committed night segments."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def night_dir(self, night_id: str) -> Path:
        return self.root / night_id

    def journal_path(self, night_id: str) -> Path:
        return self.night_dir(night_id) / f"journal.{night_id}"

    def night_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and (p / "manifest.json").exists())

    # -- journal ----------------------------------------------------------

    def _read_journal(self, night_id: str) -> dict[tuple[int, int], str]:
        """Committed (camera, chunk) -> relative chunk path."""
        path = self.journal_path(night_id)
        out: dict[tuple[int, int], str] = {}
        if not path.exists():
            return out
        for line in path.read_text().splitlines():
            parts = dict(kv.split("=", 1) for kv in line.split() if "=" in kv)
            if line.startswith("COMMIT") and "camera" in parts:
                out[(int(parts["camera"]), int(parts["chunk"]))] = parts["path"]
        return out

    def _journal_append(self, night_id: str, line: str) -> None:
        path = self.journal_path(night_id)
        with open(path, "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- ingest -----------------------------------------------------------

    def ingest_night(self, spool_dir: str | Path, night_id: str,
                     templates: dict[int, Template],
                     buffer_catalogs: int = BUFFER_CATALOGS,
                     idle_gate: IdleGate | None = None,
                     fault_hook=None,
                     match_radius_pix: float = 3.0,
                     final: bool = True) -> IngestSummary:
        """Ingest a spool of normalized catalogs into night segment chunks.

        Journal-idempotent: committed chunks are skipped on replay, so any
        crash/restart schedule converges to the same bytes as a clean run.
        With final=False (mid-night incremental runs) only full chunks are
        committed; the trailing partial batch stays pending, since chunk k
        must always cover files [k*M, (k+1)*M) of the night's sorted file
        list.  `fault_hook(files_done)` may raise SimulatedCrash
        (crash-replay tests); `idle_gate` pauses work while the live
        pipeline is busy.
        """
        night = self.night_dir(night_id)
        night.mkdir(parents=True, exist_ok=True)
        committed = self._read_journal(night_id)
        for tmp in night.glob("*.tmp"):
            tmp.unlink()

        summary = IngestSummary(night_id=night_id)
        files = discover_spool(spool_dir)
        by_camera: dict[int, list[tuple[int, Path]]] = {}
        for camera, seq, path in files:
            by_camera.setdefault(camera, []).append((seq, path))

        files_done = 0
        for camera in sorted(by_camera):
            cam_files = sorted(by_camera[camera])
            template = templates.get(camera)
            if template is None:
                raise ValueError(f"no template for camera {camera}")
            batches = [cam_files[i:i + buffer_catalogs]
                       for i in range(0, len(cam_files), buffer_catalogs)]
            for chunk_index, batch in enumerate(batches):
                if not final and len(batch) < buffer_catalogs:
                    continue
                chunk_name = f"camera{camera}_chunk{chunk_index:04d}.seg"
                if (camera, chunk_index) in committed:
                    summary.files_skipped += len(batch)
                    files_done += len(batch)
                    continue
                cells: dict[int, _CellBuffer] = {}
                batch_rows = 0
                for seq, path in batch:
                    if idle_gate is not None:
                        idle_gate.wait_idle()
                    if fault_hook is not None:
                        fault_hook(files_done)
                    t0 = time.perf_counter()
                    try:
                        rows = self._stage_catalog(path, seq, template, cells,
                                                   summary, match_radius_pix)
                        batch_rows += rows
                        summary.files_ingested += 1
                    except (OSError, ValueError) as exc:
                        summary.files_failed += 1
                        self._journal_append(
                            night_id, f"FAILED camera={camera} seq={seq} reason={exc!r}")
                    summary.per_file_seconds.append(time.perf_counter() - t0)
                    files_done += 1
                nbytes = write_chunk(night / chunk_name, night_id, camera,
                                     chunk_index, cells)
                seq_lo = batch[0][0]
                seq_hi = batch[-1][0]
                self._journal_append(
                    night_id,
                    f"COMMIT camera={camera} chunk={chunk_index} "
                    f"seq_lo={seq_lo} seq_hi={seq_hi} path={chunk_name}")
                summary.chunks_written += 1
                summary.bytes_written += nbytes
                summary.rows += batch_rows
        return summary

    def _stage_catalog(self, path: Path, seq: int, template: Template,
                       cells: dict[int, _CellBuffer], summary: IngestSummary,
                       radius: float) -> int:
        cols = read_catalog_columns(path)
        if list(cols) != list(CATALOG_COLUMNS):
            raise ValueError(f"{path}: not a 25-column catalog")
        bad = ~np.isfinite(cols["mag"])
        if bad.any():
            summary.rows_quarantined += int(bad.sum())
            cols = {name: arr[~bad] for name, arr in cols.items()}

        from .simgen import Catalog
        cat = Catalog(cols)
        match = crossmatch(cat, template, radius)
        keep = dedupe_matches(match)
        dropped = len(cat) - len(keep) - match.n_new
        summary.rows_quarantined += int(match.n_new) + int(dropped)

        ids = match.star_id[keep]
        cell_of = (ids >> np.uint64(32)).astype(np.int64) & 0xFFFFFF
        serials = star_id_serial(ids)
        qmags = quantize_mags(cat.columns["mag"][keep])
        qerrs = quantize_mags(np.minimum(cat.columns["mag_err"][keep], MAG_LIMIT - 1))
        order = np.argsort(cell_of, kind="stable")
        cell_sorted = cell_of[order]
        bounds = np.flatnonzero(np.diff(cell_sorted)) + 1
        keep_ordered = keep[order]
        kept_info = {name: cat.columns[name][keep_ordered]
                     for name, _ in INFO_COLUMNS}
        serials = serials[order]
        qmags = qmags[order]
        qerrs = qerrs[order]
        splits = np.split(np.arange(len(order)), bounds)
        for group in splits:
            if not len(group):
                continue
            cell = int(cell_sorted[group[0]])
            buf = cells.get(cell)
            if buf is None:
                buf = cells[cell] = _CellBuffer(
                    info={name: [] for name, _ in INFO_COLUMNS})
            lo, hi = int(group[0]), int(group[-1]) + 1
            buf.serials.append(serials[lo:hi])
            buf.seqs.append(np.full(hi - lo, seq, dtype=np.int64))
            buf.qmags.append(qmags[lo:hi])
            buf.qerrs.append(qerrs[lo:hi])
            for name, _ in INFO_COLUMNS:
                buf.info[name].append(kept_info[name][lo:hi])
        return len(keep)

    # -- finalize / manifest ----------------------------------------------

    def finalize_night(self, night_id: str, templates: dict[int, Template],
                       start_ms: int, cadence_ms: int) -> None:
        """Write template snapshots and the night manifest."""
        night = self.night_dir(night_id)
        night.mkdir(parents=True, exist_ok=True)
        for camera, template in templates.items():
            template.save(night / f"template_camera{camera}.tpl")
        chunks = sorted(p.name for p in night.glob("camera*_chunk*.seg"))
        manifest = {
            "night_id": night_id,
            "start_ms": start_ms,
            "cadence_ms": cadence_ms,
            "chunks": chunks,
            "templates": sorted(p.name for p in night.glob("template_camera*.tpl")),
            "events": "events.log" if (night / "events.log").exists() else None,
        }
        tmp = night / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        os.replace(tmp, night / "manifest.json")

    def manifest(self, night_id: str) -> dict:
        path = self.night_dir(night_id) / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"night {night_id} has no manifest")
        return json.loads(path.read_text())

    def append_events(self, night_id: str, records) -> None:
        """Append Eset records to the night's event log (plain text)."""
        night = self.night_dir(night_id)
        night.mkdir(parents=True, exist_ok=True)
        with open(night / "events.log", "a") as fh:
            for r in records:
                fh.write(f"{r.camera},{r.cell},{r.seq},{r.star_id},{r.score:.6f},{r.model_id}\n")

    def read_events(self, night_id: str, seq_lo: int = 0, seq_hi: int = 2 ** 62,
                    min_score: float = 0.0) -> list[tuple[int, int, int, int, float, int]]:
        path = self.night_dir(night_id) / "events.log"
        if not path.exists():
            return []
        out = []
        for line in path.read_text().splitlines():
            camera, cell, seq, star_id, score, model = line.split(",")
            seq = int(seq)
            score = float(score)
            if seq_lo <= seq <= seq_hi and score >= min_score:
                out.append((int(camera), int(cell), seq, int(star_id), score, int(model)))
        out.sort(key=lambda t: (t[2], t[3]))
        return out

    # -- reads ------------------------------------------------------------

    def read_lightcurve(self, star_id: int, night_ids: list[str] | None = None
                        ) -> list[tuple[str, int, int, float]]:
        """(night_id, seq, timestamp_ms, mag) samples across nights, in time
        order; touches only Mag groups."""
        nights = night_ids if night_ids is not None else self.night_ids()
        camera = (star_id >> 56) & 0xFF
        cell = (star_id >> 32) & 0xFFFFFF
        serial = star_id & 0xFFFFFFFF
        out: list[tuple[str, int, int, float]] = []
        found = False
        for night_id in nights:
            manifest = self.manifest(night_id)
            night = self.night_dir(night_id)
            prefix = f"camera{camera}_"
            for chunk_name in manifest["chunks"]:
                if not chunk_name.startswith(prefix):
                    continue
                blob = read_chunk_group(night / chunk_name, cell, GROUP_MAG)
                if blob is None:
                    continue
                serials, counts, seqs, qmags, _ = decode_mag_group(blob)
                pos = np.searchsorted(serials, serial)
                if pos >= len(serials) or serials[pos] != serial:
                    continue
                found = True
                start = int(counts[:pos].sum())
                end = start + int(counts[pos])
                for i in range(start, end):
                    seq = int(seqs[i])
                    t_ms = manifest["start_ms"] + seq * manifest["cadence_ms"]
                    out.append((night_id, seq, t_ms, dequantize_mag(int(qmags[i]))))
        if not found:
            raise KeyError(f"star {star_id} not in archive")
        out.sort(key=lambda t: t[2])
        return out

    def bytes_on_disk(self, night_id: str) -> int:
        return sum(p.stat().st_size for p in self.night_dir(night_id).rglob("*")
                   if p.is_file())

    def mag_info_bytes(self, night_id: str) -> tuple[int, int]:
        """Total (mag_group_bytes, info_group_bytes) across the night's chunks."""
        mag = info = 0
        night = self.night_dir(night_id)
        for chunk_name in self.manifest(night_id)["chunks"]:
            for (cell, group), (off, length) in read_chunk_directory(
                    night / chunk_name).items():
                if group == GROUP_MAG:
                    mag += length
                else:
                    info += length
        return mag, info


class IntervalManager:
    """Background worker: ingests spooled catalogs only while the live
    pipeline is idle."""

    def __init__(self, archive: ArchiveStore, spool_dir: str | Path,
                 night_id: str, templates: dict[int, Template],
                 idle_gate: IdleGate, buffer_catalogs: int = BUFFER_CATALOGS):
        self.archive = archive
        self.spool_dir = Path(spool_dir)
        self.night_id = night_id
        self.templates = templates
        self.idle_gate = idle_gate
        self.buffer_catalogs = buffer_catalogs
        self.backlog = 0
        self.backpressure_warnings = 0
        self.summary: IngestSummary | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._last_backlog = 0

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="interval-manager",
                                        daemon=True)
        self._thread.start()

    def stop(self, drain: bool = True) -> IngestSummary | None:
        """Stop the worker; with drain=True, finish the remaining backlog first."""
        if drain:
            self.idle_gate.set_idle()
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        if drain:
            self.summary = self.archive.ingest_night(
                self.spool_dir, self.night_id, self.templates,
                buffer_catalogs=self.buffer_catalogs)
            self.backlog = self._pending()
        return self.summary

    def _pending(self) -> int:
        committed = self.archive._read_journal(self.night_id)
        done = len(committed) * self.buffer_catalogs
        return max(0, len(discover_spool(self.spool_dir)) - done)

    def _run(self) -> None:
        while not self._stop.is_set():
            self.backlog = self._pending()
            if self.backlog > self._last_backlog and not self.idle_gate.is_idle:
                self.backpressure_warnings += 1
            self._last_backlog = self.backlog
            if not self.idle_gate.wait_idle(timeout=0.05):
                continue
            if self.backlog >= self.buffer_catalogs:
                self.summary = self.archive.ingest_night(
                    self.spool_dir, self.night_id, self.templates,
                    buffer_catalogs=self.buffer_catalogs, idle_gate=self.idle_gate,
                    final=False)
            else:
                time.sleep(0.02)


def naive_row_ingest(spool_dir: str | Path, out_path: str | Path) -> float:
    """Row-oriented baseline: every CSV row becomes its own keyed record.

    Models a per-row key-value store's write path (one formatted record per
    observation).  Returns elapsed seconds; used by the bench harness as the
    insertion-performance baseline.
    """
    t0 = time.perf_counter()
    with open(out_path, "w") as fh:
        for camera, seq, path in discover_spool(spool_dir):
            cols = read_catalog_columns(path)
            names = list(cols)
            lists = [c.tolist() for c in cols.values()]
            for row_idx, row in enumerate(zip(*lists)):
                key = f"{camera}:{seq}:{row_idx}"
                value = ",".join(f"{name}={val}" for name, val in zip(names, row))
                fh.write(f"{key}|{value}\n")
        fh.flush()
        os.fsync(fh.fileno())
    return time.perf_counter() - t0
