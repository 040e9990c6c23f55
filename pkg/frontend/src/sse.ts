import { Alert, decodeAlert } from "./types.js";

export type StreamStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface AlertStreamOptions {
  onAlert: (alert: Alert) => void;
  onStatus?: (status: StreamStatus) => void;
  onDecodeError?: (raw: string, message: string) => void;
  /** initial reconnect delay; doubles up to maxBackoffMs */
  backoffMs?: number;
  maxBackoffMs?: number;
  fetchImpl?: typeof fetch;
}

/**
 * Server-sent-events client over fetch + ReadableStream (works in browsers
 * and node without an EventSource polyfill). Reconnects with exponential
 * backoff; a decode failure surfaces through onDecodeError and never tears
 * the stream down.
 */
export class AlertStream {
  private closed = false;
  private backoff: number;
  private readonly initialBackoff: number;
  private readonly maxBackoff: number;
  private abort: AbortController | null = null;

  constructor(private url: string, private opts: AlertStreamOptions) {
    this.initialBackoff = opts.backoffMs ?? 500;
    this.maxBackoff = opts.maxBackoffMs ?? 10_000;
    this.backoff = this.initialBackoff;
  }

  start(): void {
    void this.loop();
  }

  close(): void {
    this.closed = true;
    this.abort?.abort();
    this.opts.onStatus?.("closed");
  }

  private async loop(): Promise<void> {
    const fetchImpl = this.opts.fetchImpl ?? fetch;
    while (!this.closed) {
      this.opts.onStatus?.("connecting");
      this.abort = new AbortController();
      try {
        const resp = await fetchImpl(this.url, {
          headers: { accept: "text/event-stream" },
          signal: this.abort.signal,
        });
        if (!resp.ok || resp.body === null) {
          throw new Error(`stream returned ${resp.status}`);
        }
        this.opts.onStatus?.("open");
        this.backoff = this.initialBackoff;
        await this.consume(resp.body);
      } catch {
        // fall through to reconnect
      }
      if (this.closed) {
        return;
      }
      this.opts.onStatus?.("reconnecting");
      await sleep(this.backoff);
      this.backoff = Math.min(this.backoff * 2, this.maxBackoff);
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let sep;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        this.handleEvent(buffer.slice(0, sep));
        buffer = buffer.slice(sep + 2);
      }
    }
  }

  private handleEvent(block: string): void {
    let eventType = "message";
    const dataLines: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("event:")) {
        eventType = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        dataLines.push(line.slice(5).trimStart());
      }
    }
    if (eventType !== "alert" || dataLines.length === 0) {
      return; // keepalives and comments
    }
    const raw = dataLines.join("\n");
    let parsed: unknown;
    try {
      parsed = JSON.parse(raw);
    } catch (err) {
      this.opts.onDecodeError?.(raw, String(err));
      return;
    }
    const alert = decodeAlert(parsed);
    if (alert === null) {
      this.opts.onDecodeError?.(raw, "alert failed schema validation");
      return;
    }
    this.opts.onAlert(alert);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
