"""HTTP job server: AQL queries, light-curve API, live alert stream (SSE),
metrics, and night orchestration controls."""

from __future__ import annotations

import json
import threading

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .aql import AqlSyntaxError, LightCurveQuery, parse
from .cache import NotFoundError
from .pipeline import NightService
from .query import EngineUnavailableError, QueryEngine, RangeError


def create_app(service: NightService) -> FastAPI:
    app = FastAPI(title="skywatch", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    service.prepare()
    engine = QueryEngine(service.templates, service.store, service.archive)
    control_lock = threading.Lock()

    def run_query(text: str) -> Response:
        try:
            ast = parse(text)
        except AqlSyntaxError as exc:
            return JSONResponse(status_code=400, content={
                "error": str(exc), "position": exc.position,
                "expected": list(exc.expected),
            })
        try:
            result = engine.execute(ast)
        except (NotFoundError, KeyError) as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        except RangeError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except EngineUnavailableError as exc:
            return JSONResponse(status_code=502, content={
                "error": str(exc), "engine": exc.engine})
        service.metrics.observe_query(result.meta.elapsed_ms)
        service.metrics.inc("queries_total")
        return JSONResponse(content=result.to_dict())

    @app.post("/query")
    async def post_query(request: Request) -> Response:
        body = (await request.body()).decode("utf-8", errors="replace")
        return run_query(body)

    @app.get("/lightcurve/{star_id}")
    def get_lightcurve(star_id: int, request: Request) -> Response:
        params = request.query_params
        ast = LightCurveQuery(
            star_id=star_id,
            t_from=int(params["from"]) if "from" in params else None,
            t_to=int(params["to"]) if "to" in params else None,
            source=params.get("source", "auto"),
        )
        try:
            result = engine.execute(ast)
        except (NotFoundError, KeyError) as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        except RangeError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except EngineUnavailableError as exc:
            return JSONResponse(status_code=502, content={
                "error": str(exc), "engine": exc.engine})
        service.metrics.observe_query(result.meta.elapsed_ms)
        return JSONResponse(content=result.to_dict())

    @app.get("/alerts/stream")
    def alerts_stream() -> StreamingResponse:
        sub = service.bus.subscribe()

        def stream():
            try:
                yield ": connected\n\n"
                while not sub.closed:
                    msg = sub.poll(timeout=0.5)
                    if msg is None:
                        yield ": keepalive\n\n"
                        continue
                    payload = dict(msg.to_dict(), dropped=sub.dropped)
                    yield f"event: alert\ndata: {json.dumps(payload)}\n\n"
            finally:
                service.bus.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.get("/metrics")
    def metrics() -> PlainTextResponse:
        return PlainTextResponse(service.metrics.snapshot().render_text())

    @app.post("/night/start")
    async def night_start(request: Request) -> Response:
        body = (await request.body()).decode() or "{}"
        opts = json.loads(body)
        with control_lock:
            if service.running:
                return JSONResponse(status_code=409,
                                    content={"error": "night already running"})
            service.start_async(cycles=opts.get("cycles"))
        return JSONResponse(content={"status": "started",
                                     "night_id": service.cfg.night_id})

    @app.post("/night/end")
    def night_end() -> Response:
        with control_lock:
            service.stop_async()
        return JSONResponse(content={"status": "stopping"})

    @app.get("/healthz")
    def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok\n")

    return app


def serve_forever(service: NightService, host: str = "127.0.0.1",
                  port: int = 8700) -> None:
    import uvicorn

    app = create_app(service)
    uvicorn.run(app, host=host, port=port, log_level="warning")
