import { QueryError, QueryErrorSchema, ResultSet, ResultSetSchema } from "./types.js";

export type QueryOutcome =
  | { kind: "ok"; result: ResultSet }
  | { kind: "parse_error"; error: QueryError }
  | { kind: "not_found"; message: string }
  | { kind: "engine_error"; engine: string; message: string }
  | { kind: "decode_error"; message: string }
  | { kind: "network_error"; message: string };

async function decodeResponse(resp: Response): Promise<QueryOutcome> {
  let body: unknown;
  try {
    body = await resp.json();
  } catch (err) {
    return { kind: "decode_error", message: `response is not JSON: ${String(err)}` };
  }
  if (resp.status === 400) {
    const parsed = QueryErrorSchema.safeParse(body);
    return parsed.success
      ? { kind: "parse_error", error: parsed.data }
      : { kind: "decode_error", message: "malformed 400 body" };
  }
  if (resp.status === 404) {
    const parsed = QueryErrorSchema.safeParse(body);
    return { kind: "not_found", message: parsed.success ? parsed.data.error : "not found" };
  }
  if (resp.status === 502) {
    const obj = body as { engine?: string; error?: string };
    return {
      kind: "engine_error",
      engine: obj.engine ?? "unknown",
      message: obj.error ?? "engine unavailable",
    };
  }
  if (!resp.ok) {
    return { kind: "network_error", message: `HTTP ${resp.status}` };
  }
  const parsed = ResultSetSchema.safeParse(body);
  return parsed.success
    ? { kind: "ok", result: parsed.data }
    : { kind: "decode_error", message: parsed.error.issues[0]?.message ?? "bad result set" };
}

export async function runQuery(
  baseUrl: string,
  aql: string,
  fetchImpl: typeof fetch = fetch,
): Promise<QueryOutcome> {
  let resp: Response;
  try {
    resp = await fetchImpl(`${baseUrl}/query`, { method: "POST", body: aql });
  } catch (err) {
    return { kind: "network_error", message: String(err) };
  }
  return decodeResponse(resp);
}

export async function fetchLightcurve(
  baseUrl: string,
  starId: string,
  range: { from?: number; to?: number; source?: string } = {},
  fetchImpl: typeof fetch = fetch,
): Promise<QueryOutcome> {
  const params = new URLSearchParams();
  if (range.from !== undefined) params.set("from", String(range.from));
  if (range.to !== undefined) params.set("to", String(range.to));
  if (range.source !== undefined) params.set("source", range.source);
  const qs = params.toString();
  let resp: Response;
  try {
    resp = await fetchImpl(`${baseUrl}/lightcurve/${starId}${qs ? "?" + qs : ""}`);
  } catch (err) {
    return { kind: "network_error", message: String(err) };
  }
  return decodeResponse(resp);
}
