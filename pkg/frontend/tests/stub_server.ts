import http from "node:http";
import { AddressInfo } from "node:net";

export interface StubServer {
  url: string;
  pushAlert(payload: unknown): void;
  pushRaw(block: string): void;
  dropConnections(): void;
  close(): Promise<void>;
  queryHandler: (body: string) => { status: number; body: unknown };
  lightcurveHandler: (starId: string) => { status: number; body: unknown };
}

/** Minimal HTTP + SSE stub standing in for the job server in tests. */
export async function startStubServer(): Promise<StubServer> {
  const sseClients = new Set<http.ServerResponse>();
  const stub: Partial<StubServer> = {
    queryHandler: () => ({
      status: 200,
      body: {
        columns: ["star_id"],
        rows: [],
        meta: { engines: ["cache"], elapsed_ms: 0.1, approximate: false, est_precision: null },
      },
    }),
    lightcurveHandler: () => ({ status: 404, body: { error: "unknown star" } }),
  };

  const server = http.createServer((req, res) => {
    const url = req.url ?? "/";
    if (url.startsWith("/alerts/stream")) {
      res.writeHead(200, {
        "content-type": "text/event-stream",
        "cache-control": "no-cache",
      });
      res.write(": connected\n\n");
      sseClients.add(res);
      req.on("close", () => sseClients.delete(res));
      return;
    }
    if (url.startsWith("/query") && req.method === "POST") {
      let body = "";
      req.on("data", (chunk) => (body += chunk));
      req.on("end", () => {
        const out = stub.queryHandler!(body);
        res.writeHead(out.status, { "content-type": "application/json" });
        res.end(JSON.stringify(out.body));
      });
      return;
    }
    if (url.startsWith("/lightcurve/")) {
      const starId = url.slice("/lightcurve/".length).split("?")[0] ?? "";
      const out = stub.lightcurveHandler!(starId);
      res.writeHead(out.status, { "content-type": "application/json" });
      res.end(JSON.stringify(out.body));
      return;
    }
    res.writeHead(404);
    res.end();
  });

  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const port = (server.address() as AddressInfo).port;

  stub.url = `http://127.0.0.1:${port}`;
  stub.pushAlert = (payload: unknown) => {
    const block = `event: alert\ndata: ${JSON.stringify(payload)}\n\n`;
    for (const res of sseClients) {
      res.write(block);
    }
  };
  stub.pushRaw = (block: string) => {
    for (const res of sseClients) {
      res.write(block);
    }
  };
  stub.dropConnections = () => {
    for (const res of sseClients) {
      res.destroy();
    }
    sseClients.clear();
  };
  stub.close = () =>
    new Promise<void>((resolve) => {
      stub.dropConnections!();
      server.close(() => resolve());
    });
  return stub as StubServer;
}

export function alertPayload(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    kind: "transient",
    star_id: "72057594037927936",   // camera 1: needs string transport
    camera: 1,
    seq: 42,
    ra_deg: 123.4,
    dec_deg: -5.6,
    wall_time: 1700000000.0,
    score: 0.91,
    model: "diff_w8",
    dropped: 0,
    ...overrides,
  };
}
