"""Command line: night runs, benches, archive ingestion, queries, serving.

Exit codes: 0 ok, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _gen_config_from_args(args) -> "GenConfig":
    from .simgen import GenConfig

    return GenConfig(
        cameras=args.cameras,
        stars_per_camera=args.stars,
        cycles=args.cycles,
        cadence_ms=args.cadence_ms,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
        transient_mean_per_cycle=args.mean_events,
    )


def _add_gen_flags(p: argparse.ArgumentParser, cameras=4, stars=20_000, cycles=480) -> None:
    p.add_argument("--cameras", type=int, default=cameras)
    p.add_argument("--stars", type=int, default=stars)
    p.add_argument("--cycles", type=int, default=cycles)
    p.add_argument("--cadence-ms", type=int, default=15_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--noise-sigma", type=float, default=0.03)
    p.add_argument("--mean-events", type=float, default=5.0)


def cmd_gen(args) -> int:
    from .simgen import make_night_plan, write_night

    cfg = _gen_config_from_args(args)
    plan = make_night_plan(cfg)
    paths = write_night(cfg, args.out, plan)
    print(f"wrote {len(paths)} catalogs ({cfg.cameras} cameras x {cfg.cycles} cycles) "
          f"to {args.out}")
    print(f"night plan: {len(plan.events)} transient events")
    return EXIT_OK


def cmd_run_night(args) -> int:
    from .pipeline import NightService, ServiceConfig
    from .report import write_night_report

    cfg = ServiceConfig(
        gen=_gen_config_from_args(args),
        night_id=args.night,
        data_dir=args.data_dir,
        spool_enabled=not args.no_spool,
        accelerate=args.accelerate,
    )
    service = NightService(cfg)
    try:
        report = service.run_night()
        service.end_night()
    except Exception as exc:
        print(f"night failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = report.summary()

    print(f"night {summary['night_id']}: {summary['cycles']} cycles, "
          f"{summary['rows_total']} rows, {summary['rows_per_second']:.0f} rows/s")
    print(f"  ingest latency  mean {summary['ingest_ms_mean']:.1f} ms   "
          f"var {summary['ingest_ms_var']:.1f} ms^2")
    print(f"  detect latency  mean {summary['detect_ms_mean']:.1f} ms   "
          f"var {summary['detect_ms_var']:.1f} ms^2")
    print(f"  eset total {summary['eset_total']}   new stars {summary['new_stars_total']}")
    print(f"  cache bytes {summary['cache_bytes'].get('total', 0)}   "
          f"archive bytes {summary['archive_bytes']}")
    if args.report_dir:
        paths = write_night_report(report, args.report_dir)
        print(f"  report written to {paths['json'].parent}")
    return EXIT_OK


def cmd_bench_detector(args) -> int:
    from .bench import bench_detector
    from .report import write_detector_report

    results = []
    for seed in range(args.seeds):
        r = bench_detector(n_series=args.series, length=args.length,
                           noise_sigma=args.noise_sigma, seed=seed,
                           amplitude_scale=args.amplitude_scale)
        results.append(r)
        print(f"seed {seed}: recall {r.recall:.3f} ({r.n_detected}/{r.n_series})   "
              f"FPR {r.false_positive_rate:.4f} ({r.n_false}/{r.n_series})   "
              f"[{r.elapsed_s:.1f}s]")
    worst_recall = min(r.recall for r in results)
    worst_fpr = max(r.false_positive_rate for r in results)
    print(f"worst over {args.seeds} seeds: recall {worst_recall:.3f}, FPR {worst_fpr:.4f}")
    print("per-model recall (seed 0):")
    for name, rec in results[0].per_model_recall.items():
        print(f"  {name:10s} {rec:.3f}")
    if args.report_dir:
        write_detector_report(results[0].to_dict(), args.report_dir)
        print(f"report written to {args.report_dir}")
    return EXIT_OK


def _build_embedded_engine(args):
    """A loaded desk-scale engine for embedded query commands."""
    from .pipeline import NightService, ServiceConfig
    from .query import QueryEngine

    cfg = ServiceConfig(gen=_gen_config_from_args(args), night_id=args.night,
                        data_dir=args.data_dir, spool_enabled=False)
    service = NightService(cfg)
    service.run_night()
    return QueryEngine(service.templates, service.store, service.archive), service


def cmd_bench_query(args) -> int:
    from .aql import parse
    from .report import query_latency_summary, write_query_report

    engine, service = _build_embedded_engine(args)
    rng = np.random.default_rng(args.seed)
    queries: list[str] = []
    if args.queries:
        queries = [q for q in Path(args.queries).read_text().splitlines() if q.strip()]
    else:
        tpl = service.workers[0].template
        ids = tpl.star_id
        for _ in range(args.n_queries):
            kind = rng.integers(0, 3)
            if kind == 0:
                ra = float(rng.uniform(0, 360))
                dec = float(rng.uniform(-30, 30))
                queries.append(f"CONE ra={ra:.4f} dec={dec:.4f} r={rng.uniform(0.2, 2.0):.3f}")
            elif kind == 1:
                sid = int(ids[rng.integers(0, len(ids))])
                queries.append(f"LIGHTCURVE star={sid}")
            else:
                queries.append(f"EVENTS from=0 to={args.cycles} minscore=0.5")
    latencies = []
    for text in queries:
        t0 = time.perf_counter()
        engine.execute(parse(text))
        latencies.append((time.perf_counter() - t0) * 1e3)
    summary = query_latency_summary(latencies)
    print(json.dumps(summary, indent=1, sort_keys=True))
    if args.report_dir:
        write_query_report(latencies, args.report_dir)
        print(f"report written to {args.report_dir}")
    return EXIT_OK


def cmd_ingest_archive(args) -> int:
    from .archive import ArchiveStore, discover_spool
    from .partition import Partitioner
    from .simgen import Catalog
    from .xmatch import Template, bootstrap_template

    archive = ArchiveStore(args.archive)
    files = discover_spool(args.spool)
    if not files:
        print(f"no catalogs under {args.spool}", file=sys.stderr)
        return EXIT_RUNTIME
    templates: dict[int, Template] = {}
    if args.templates:
        tdir = Path(args.templates)
        for path in sorted(tdir.glob("template_camera*.tpl")):
            camera = int(path.stem.replace("template_camera", ""))
            templates[camera] = Template.load(path, camera)
    else:
        part = Partitioner(level=args.partition_level)
        for camera in sorted({c for c, _, _ in files}):
            first = next(p for c, s, p in files if c == camera)
            tpl, _ = bootstrap_template(Catalog.read_csv(first), camera, part)
            templates[camera] = tpl
    summary = archive.ingest_night(args.spool, args.night, templates)
    archive.finalize_night(args.night, templates, start_ms=args.start_ms,
                           cadence_ms=args.cadence_ms)
    per_file = np.array(summary.per_file_seconds) if summary.per_file_seconds else np.zeros(1)
    print(f"ingested {summary.files_ingested} files ({summary.rows} rows) "
          f"into {summary.chunks_written} chunks, {summary.bytes_written} bytes")
    print(f"per-file latency mean {per_file.mean()*1e3:.1f} ms  "
          f"var {per_file.var(ddof=1)*1e6 if len(per_file) > 1 else 0:.1f} ms^2")
    print(f"skipped {summary.files_skipped}, failed {summary.files_failed}, "
          f"quarantined rows {summary.rows_quarantined}")
    return EXIT_OK


def cmd_query(args) -> int:
    from .aql import AqlSyntaxError, parse

    if args.url:
        import httpx

        resp = httpx.post(args.url.rstrip("/") + "/query", content=args.aql,
                          timeout=30.0)
        print(json.dumps(resp.json(), indent=1, sort_keys=True))
        return EXIT_OK if resp.status_code == 200 else EXIT_RUNTIME

    try:
        ast = parse(args.aql)
    except AqlSyntaxError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    engine, _ = _build_embedded_engine(args)
    result = engine.execute(ast)
    print("\t".join(result.columns))
    for row in result.rows:
        print("\t".join(str(v) for v in row))
    meta = result.meta
    print(f"# engines={','.join(meta.engines)} elapsed={meta.elapsed_ms:.2f}ms "
          f"approximate={meta.approximate} est_precision={meta.est_precision}",
          file=sys.stderr)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .config import load_service_config
    from .pipeline import NightService
    from .server import serve_forever

    cfg, extras = load_service_config(args.config)
    service = NightService(cfg)
    host = args.host or extras.get("host", "127.0.0.1")
    port = args.port or extras.get("port", 8700)
    print(f"serving on http://{host}:{port} (night {cfg.night_id})")
    serve_forever(service, host=host, port=int(port))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skywatch",
        description="sky-survey catalog service: generate, detect, store, query")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a night of catalog files")
    _add_gen_flags(p, cameras=2, stars=2000, cycles=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run-night", help="run the full pipeline for one night")
    _add_gen_flags(p)
    p.add_argument("--night", default="night0001")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--accelerate", action="store_true",
                   help="run cycles back to back without cadence sleeps")
    p.add_argument("--no-spool", action="store_true")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_run_night)

    p = sub.add_parser("bench-detector", help="detector recall / false-positive bench")
    p.add_argument("--series", type=int, default=3240)
    p.add_argument("--length", type=int, default=480)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--noise-sigma", type=float, default=0.03)
    p.add_argument("--amplitude-scale", type=float, default=1.0)
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_bench_detector)

    p = sub.add_parser("bench-query", help="query latency bench on a desk night")
    _add_gen_flags(p, cameras=2, stars=5000, cycles=120)
    p.add_argument("--night", default="bench")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--n-queries", type=int, default=1000)
    p.add_argument("--queries", default=None, help="file of AQL queries, one per line")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_bench_query)

    p = sub.add_parser("ingest-archive", help="ingest a spool directory into the archive")
    p.add_argument("--spool", required=True)
    p.add_argument("--night", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--templates", default=None,
                   help="directory of template_camera{C}.tpl files")
    p.add_argument("--partition-level", type=int, default=4)
    p.add_argument("--start-ms", type=int, default=1_700_000_000_000)
    p.add_argument("--cadence-ms", type=int, default=15_000)
    p.set_defaults(func=cmd_ingest_archive)

    p = sub.add_parser("query", help="run one AQL query (embedded or against a server)")
    p.add_argument("--aql", required=True)
    p.add_argument("--url", default=None)
    _add_gen_flags(p, cameras=2, stars=2000, cycles=30)
    p.add_argument("--night", default="adhoc")
    p.add_argument("--data-dir", default="data")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("serve", help="start the HTTP job server")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
