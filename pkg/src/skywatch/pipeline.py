"""Night orchestration: per-camera workers drive the full exposure pipeline.

Each cycle, every camera's catalog is cross-matched against its template,
normalized against standard stars, scored by the detector ensemble, and
stored as partition blocks; Eset entries feed the event index, the alert
bus, and the night's archive event log.  Normalized catalogs are spooled to
disk, and the archive's interval manager ingests them whenever the
scheduler signals idle.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bus as bus_mod
from .archive import ArchiveStore, IdleGate, IntervalManager
from .cache import Block, EventRecord, NightStore
from .calib import CalibrationError, fit_offsets, normalize
from .detect import DetectorBank, DetectorConfig, Eset, build_eset, MODEL_NAMES
from .metrics import MetricsRegistry
from .partition import Partitioner
from .simgen import Catalog, GenConfig, NightPlan, StarField, gen_catalog, \
    make_night_plan, make_star_field
from .xmatch import MATCH_RADIUS_PIX, Template, crossmatch, dedupe_matches, \
    star_id_cell, update_template


@dataclass
class ServiceConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    partition_scheme: str = "grid"
    partition_level: int = 4
    match_radius_pix: float = MATCH_RADIUS_PIX
    night_id: str = "night0001"
    data_dir: str = "data"
    spool_enabled: bool = True
    accelerate: bool = True
    hot_capacity: int = 256
    time_bucket_width: int = 40

    @property
    def spool_dir(self) -> Path:
        return Path(self.data_dir) / "normalized" / self.night_id

    @property
    def archive_dir(self) -> Path:
        return Path(self.data_dir) / "archive"

    def partitioner(self) -> Partitioner:
        return Partitioner(scheme=self.partition_scheme, level=self.partition_level)


@dataclass
class CycleResult:
    camera: int
    seq: int
    rows: int
    n_new: int
    n_dup_dropped: int
    eset: Eset
    ingest_ms: float
    detect_ms: float
    calibrated: bool


@dataclass
class NightReport:
    night_id: str
    cameras: int
    cycles_run: int = 0
    rows_total: int = 0
    eset_total: int = 0
    new_stars_total: int = 0
    ingest_ms: list[float] = field(default_factory=list)       # per cycle, summed cams
    detect_ms: list[float] = field(default_factory=list)
    eset_sizes: list[int] = field(default_factory=list)
    cache_bytes: dict[str, int] = field(default_factory=dict)
    archive_bytes: int = 0
    elapsed_s: float = 0.0

    def summary(self) -> dict:
        ing = np.array(self.ingest_ms) if self.ingest_ms else np.zeros(1)
        det = np.array(self.detect_ms) if self.detect_ms else np.zeros(1)
        return {
            "night_id": self.night_id,
            "cameras": self.cameras,
            "cycles": self.cycles_run,
            "rows_total": self.rows_total,
            "eset_total": self.eset_total,
            "new_stars_total": self.new_stars_total,
            "ingest_ms_mean": float(ing.mean()),
            "ingest_ms_var": float(ing.var(ddof=1)) if len(ing) > 1 else 0.0,
            "detect_ms_mean": float(det.mean()),
            "detect_ms_var": float(det.var(ddof=1)) if len(det) > 1 else 0.0,
            "cache_bytes": self.cache_bytes,
            "archive_bytes": self.archive_bytes,
            "rows_per_second": (self.rows_total / self.elapsed_s
                                if self.elapsed_s > 0 else 0.0),
            "elapsed_s": self.elapsed_s,
        }


class StageError(RuntimeError):
    def __init__(self, stage: str, camera: int, seq: int, cause: Exception):
        self.stage = stage
        self.camera = camera
        self.seq = seq
        super().__init__(f"stage {stage!r} failed at camera {camera} cycle {seq}: {cause}")


class CameraWorker:
    """Owns one camera's template, detector state, and pipeline stages."""

    def __init__(self, camera: int, cfg: ServiceConfig, store: NightStore,
                 archive: ArchiveStore | None, metrics: MetricsRegistry,
                 alert_bus: bus_mod.EventBus, plan: NightPlan | None = None):
        self.camera = camera
        self.cfg = cfg
        self.store = store
        self.archive = archive
        self.metrics = metrics
        self.bus = alert_bus
        self.plan = plan
        self.partitioner = cfg.partitioner()
        self.template = Template(camera=camera, partitioner=self.partitioner)
        self.bank = DetectorBank(cfg.detector)
        self.star_field: StarField | None = None
        self._standards_ready = False

    # -- generation -------------------------------------------------------

    def generate(self, seq: int) -> Catalog:
        if self.star_field is None:
            self.star_field = make_star_field(self.cfg.gen, self.camera)
        assert self.plan is not None
        return gen_catalog(self.camera, seq, self.cfg.gen, self.plan,
                           star_field=self.star_field)

    # -- the per-exposure pipeline -----------------------------------------

    def process_exposure(self, seq: int, catalog: Catalog,
                         spool: bool | None = None) -> CycleResult:
        t_ingest = 0.0
        t_detect = 0.0

        t0 = time.perf_counter()
        try:
            match = crossmatch(catalog, self.template, self.cfg.match_radius_pix)
            new_idx = np.flatnonzero(match.is_new)
            n_before = len(self.template)
            alerts = update_template(self.template, catalog, match, seq)
            # Newly registered rows proceed through the pipeline under their
            # fresh identities (their first sample belongs to the night too).
            if len(new_idx):
                match.star_id[new_idx] = self.template.star_id[n_before:]
                match.template_row[new_idx] = np.arange(n_before, len(self.template))
                match.distance[new_idx] = 0.0
                match.is_new[new_idx] = False
        except Exception as exc:
            raise StageError("crossmatch", self.camera, seq, exc) from exc
        t_ingest += time.perf_counter() - t0

        for a in alerts:
            self.bus.publish(bus_mod.new_star_alert(
                a.star_id, a.camera, a.seq, a.ra_deg, a.dec_deg))
        self.metrics.inc("new_stars_total", len(alerts))

        if not self._standards_ready and len(self.template):
            self.template.designate_standards()
            self._standards_ready = True

        t0 = time.perf_counter()
        calibrated = True
        try:
            offsets = fit_offsets(catalog, match, self.template)
            normalized = normalize(catalog, offsets, self.template.partitioner,
                                   match=match, template=self.template)
        except CalibrationError:
            normalized = catalog
            calibrated = False
            self.metrics.inc("calibration_skipped_total")
        except Exception as exc:
            raise StageError("normalize", self.camera, seq, exc) from exc
        t_ingest += time.perf_counter() - t0

        # One sample per star per exposure: keep the closest duplicate.
        keep = dedupe_matches(match)
        n_dup = len(catalog) - match.n_new - len(keep)
        if n_dup:
            self.metrics.inc("duplicate_rows_dropped_total", n_dup)

        star_ids = match.star_id[keep]
        mags = normalized.columns["mag"][keep]
        mag_errs = normalized.columns["mag_err"][keep]
        rows_in_template = match.template_row[keep]

        t0 = time.perf_counter()
        try:
            self.bank.grow(len(self.template))
            scores = self.bank.step(rows_in_template, mags)
            eset = build_eset(seq, star_ids, scores, self.cfg.detector.theta)
        except Exception as exc:
            raise StageError("detect", self.camera, seq, exc) from exc
        t_detect = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            self._store_blocks(seq, star_ids, mags, mag_errs)
            self._store_events(seq, eset)
        except Exception as exc:
            raise StageError("cache", self.camera, seq, exc) from exc
        t_ingest += time.perf_counter() - t0

        self._publish_transients(seq, eset)
        do_spool = self.cfg.spool_enabled if spool is None else spool
        if do_spool:
            try:
                self._spool(seq, normalized)
            except Exception as exc:
                raise StageError("spool", self.camera, seq, exc) from exc

        self.metrics.inc("rows_ingested_total", len(catalog))
        self.metrics.set_gauge("catalog_size_last", len(catalog))
        return CycleResult(camera=self.camera, seq=seq, rows=len(catalog),
                           n_new=len(alerts), n_dup_dropped=n_dup, eset=eset,
                           ingest_ms=t_ingest * 1e3, detect_ms=t_detect * 1e3,
                           calibrated=calibrated)

    def _store_blocks(self, seq: int, star_ids: np.ndarray, mags: np.ndarray,
                      mag_errs: np.ndarray) -> None:
        if len(star_ids) == 0:
            return
        order = np.argsort(star_ids, kind="stable")
        ids = star_ids[order]
        m = mags[order].astype(np.float32)
        e = mag_errs[order].astype(np.float32)
        cells = star_id_cell(ids)
        bounds = np.flatnonzero(np.diff(cells)) + 1
        for sel in np.split(np.arange(len(ids)), bounds):
            cell = int(cells[sel[0]])
            self.store.put_block(Block(
                camera=self.camera, cell=cell, seq=seq,
                star_ids=ids[sel], mags=m[sel], mag_errs=e[sel]))

    def _store_events(self, seq: int, eset: Eset) -> None:
        records = []
        for entry in eset.entries:
            cell = (entry.star_id >> 32) & 0xFFFFFF
            self.store.append_event(self.camera, cell, seq, entry.star_id,
                                    entry.max_score, entry.model_id)
            records.append(EventRecord(camera=self.camera, cell=cell, seq=seq,
                                       star_id=entry.star_id, score=entry.max_score,
                                       model_id=entry.model_id))
        if records and self.archive is not None:
            self.archive.append_events(self.cfg.night_id, records)

    def _publish_transients(self, seq: int, eset: Eset) -> None:
        if not eset.entries:
            return
        ids = np.array([e.star_id for e in eset.entries], dtype=np.uint64)
        order, sorted_ids = self.template.sorted_view()
        pos = np.searchsorted(sorted_ids, ids)
        for entry, p in zip(eset.entries, pos):
            row = int(order[p])
            self.bus.publish(bus_mod.transient_alert(
                entry.star_id, self.camera, seq,
                float(self.template.ra_deg[row]), float(self.template.dec_deg[row]),
                entry.max_score, MODEL_NAMES[entry.model_id]))
        self.metrics.inc("transient_alerts_total", len(eset.entries))

    def _spool(self, seq: int, normalized: Catalog) -> None:
        cam_dir = self.cfg.spool_dir / str(self.camera)
        cam_dir.mkdir(parents=True, exist_ok=True)
        normalized.write_csv(cam_dir / f"seq{seq}.cat")


class NightService:
    """Single-process host of the full pipeline plus its stores."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.metrics = MetricsRegistry()
        self.bus = bus_mod.EventBus()
        self.store = NightStore(
            night_id=cfg.night_id, start_ms=cfg.gen.night_start_ms,
            cadence_ms=cfg.gen.cadence_ms,
            bucket_width=cfg.time_bucket_width, hot_capacity=cfg.hot_capacity)
        self.archive = ArchiveStore(cfg.archive_dir)
        self.idle_gate = IdleGate()
        self.plan: NightPlan | None = None
        self.workers: dict[int, CameraWorker] = {}
        self.interval_manager: IntervalManager | None = None
        self.report = NightReport(night_id=cfg.night_id, cameras=cfg.gen.cameras)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.running = False

    @property
    def templates(self) -> dict[int, Template]:
        return {camera: w.template for camera, w in self.workers.items()}

    def prepare(self) -> None:
        if self.plan is None:
            self.plan = make_night_plan(self.cfg.gen)
        for camera in range(self.cfg.gen.cameras):
            if camera not in self.workers:
                self.workers[camera] = CameraWorker(
                    camera, self.cfg, self.store, self.archive, self.metrics,
                    self.bus, self.plan)

    def start_interval_manager(self) -> None:
        if self.interval_manager is None and self.cfg.spool_enabled:
            self.interval_manager = IntervalManager(
                self.archive, self.cfg.spool_dir, self.cfg.night_id,
                self.templates, self.idle_gate)
            self.interval_manager.start()

    def run_cycle(self, seq: int) -> list[CycleResult]:
        """One synchronized exposure across all cameras (current thread)."""
        self.idle_gate.set_busy()
        try:
            results = []
            for camera, worker in self.workers.items():
                catalog = worker.generate(seq)
                results.append(worker.process_exposure(seq, catalog))
            self._absorb_cycle(results)
            return results
        finally:
            self.idle_gate.set_idle()

    def _absorb_cycle(self, results: list[CycleResult]) -> None:
        ingest = sum(r.ingest_ms for r in results)
        detect = sum(r.detect_ms for r in results)
        eset_n = sum(len(r.eset) for r in results)
        self.report.cycles_run += 1
        self.report.rows_total += sum(r.rows for r in results)
        self.report.eset_total += eset_n
        self.report.new_stars_total += sum(r.n_new for r in results)
        self.report.ingest_ms.append(ingest)
        self.report.detect_ms.append(detect)
        self.report.eset_sizes.append(eset_n)
        self.metrics.observe_latency("ingest_latency_per_cycle", ingest)
        self.metrics.observe_latency("detect_latency_per_cycle", detect)
        self.metrics.set_gauge("eset_size_last", eset_n)
        if self.interval_manager is not None:
            self.metrics.set_gauge("archive_backlog_files",
                                   self.interval_manager.backlog)
            self.metrics.set_gauge("archive_backpressure_warnings",
                                   self.interval_manager.backpressure_warnings)
        mem = self.store.mem_usage()
        for name in ("blocks", "index", "prestats", "hot"):
            self.metrics.set_gauge(f"cache_bytes_{name}", getattr(mem, name))

    def run_night(self, cycles: int | None = None) -> NightReport:
        """Run the whole night synchronously: per-camera workers with a
        barrier at each cycle boundary."""
        self.prepare()
        self.start_interval_manager()
        n_cycles = cycles if cycles is not None else self.cfg.gen.cycles
        n_cameras = self.cfg.gen.cameras
        t_start = time.perf_counter()

        results: list[CycleResult | None] = [None] * n_cameras
        errors: list[Exception] = []
        barrier = threading.Barrier(n_cameras + 1)

        def worker_loop(camera: int) -> None:
            worker = self.workers[camera]
            try:
                for seq in range(n_cycles):
                    barrier.wait()      # cycle start
                    if not self._stop.is_set() and not errors:
                        try:
                            catalog = worker.generate(seq)
                            results[camera] = worker.process_exposure(seq, catalog)
                        except Exception as exc:   # surfaced by the scheduler
                            errors.append(exc)
                    barrier.wait()      # cycle end
            except threading.BrokenBarrierError:
                return

        threads = [threading.Thread(target=worker_loop, args=(camera,),
                                    name=f"camera-{camera}", daemon=True)
                   for camera in range(n_cameras)]
        for t in threads:
            t.start()

        cadence_s = self.cfg.gen.cadence_ms / 1e3
        for seq in range(n_cycles):
            cycle_t0 = time.perf_counter()
            self.idle_gate.set_busy()
            barrier.wait()
            barrier.wait()
            self.idle_gate.set_idle()
            if errors:
                self._stop.set()
                barrier.abort()
                raise errors[0]
            if self._stop.is_set():
                break
            self._absorb_cycle([r for r in results if r is not None])
            if not self.cfg.accelerate:
                remaining = cadence_s - (time.perf_counter() - cycle_t0)
                if remaining > 0:
                    time.sleep(remaining)
        for t in threads:
            t.join(timeout=5.0)

        self.report.elapsed_s = time.perf_counter() - t_start
        mem = self.store.mem_usage()
        self.report.cache_bytes = {
            "blocks": mem.blocks, "index": mem.index,
            "prestats": mem.prestats, "hot": mem.hot, "total": mem.total,
        }
        return self.report

    def end_night(self) -> NightReport:
        """Drain the archive backlog, snapshot templates, write the manifest."""
        if self.interval_manager is not None:
            self.interval_manager.stop(drain=True)
            self.interval_manager = None
        elif self.cfg.spool_enabled and self.cfg.spool_dir.exists():
            self.archive.ingest_night(self.cfg.spool_dir, self.cfg.night_id,
                                      self.templates)
        if self.cfg.spool_enabled:
            self.archive.finalize_night(
                self.cfg.night_id, self.templates,
                start_ms=self.cfg.gen.night_start_ms,
                cadence_ms=self.cfg.gen.cadence_ms)
            self.report.archive_bytes = self.archive.bytes_on_disk(self.cfg.night_id)
            self.metrics.set_gauge("archive_bytes", self.report.archive_bytes)
        return self.report

    def begin_new_night(self, night_id: str | None = None) -> str:
        """Roll to a fresh night: new store generation, fresh detector state,
        new report.  The simulated sky replays the configured generator
        stream; templates persist across nights."""
        self._night_index = getattr(self, "_night_index", 1) + 1
        nid = night_id or f"{self.cfg.night_id.split('+')[0]}+{self._night_index}"
        if self.interval_manager is not None:
            self.interval_manager.stop(drain=True)
            self.interval_manager = None
        self.cfg.night_id = nid
        self.store.reset_night(nid, start_ms=self.cfg.gen.night_start_ms)
        for worker in self.workers.values():
            worker.bank = DetectorBank(self.cfg.detector)
        self.report = NightReport(night_id=nid, cameras=self.cfg.gen.cameras)
        return nid

    # -- background control (serve) ----------------------------------------

    def start_async(self, cycles: int | None = None) -> None:
        if self.running:
            raise RuntimeError("night already running")
        if self.report.cycles_run > 0:
            self.begin_new_night()
        self._stop.clear()
        self.running = True

        def run() -> None:
            try:
                self.run_night(cycles)
                self.end_night()
            finally:
                self.running = False

        self._thread = threading.Thread(target=run, name="night-run", daemon=True)
        self._thread.start()

    def stop_async(self, timeout: float = 30.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)
