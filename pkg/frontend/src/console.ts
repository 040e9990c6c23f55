import { QueryOutcome, runQuery } from "./api.js";
import { ResultSet } from "./types.js";

/**
 * Operator query console: submits AQL, renders the rows plus engine
 * metadata, and points a caret at the server-reported position on syntax
 * errors. At most one query in flight at a time.
 */
export class QueryConsole {
  private busy = false;

  constructor(
    private root: HTMLElement,
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  async run(text: string): Promise<QueryOutcome | null> {
    if (this.busy) {
      return null;
    }
    this.busy = true;
    try {
      const outcome = await runQuery(this.baseUrl, text, this.fetchImpl);
      this.render(text, outcome);
      return outcome;
    } finally {
      this.busy = false;
    }
  }

  render(text: string, outcome: QueryOutcome): void {
    this.root.replaceChildren();
    switch (outcome.kind) {
      case "ok":
        this.renderResult(outcome.result);
        return;
      case "parse_error": {
        const pre = document.createElement("pre");
        pre.className = "parse-error";
        const caretLine =
          outcome.error.position !== undefined
            ? "\n" + " ".repeat(Math.max(outcome.error.position - 1, 0)) + "^"
            : "";
        pre.textContent = `${text}${caretLine}\n${outcome.error.error}`;
        this.root.appendChild(pre);
        return;
      }
      default: {
        const panel = document.createElement("div");
        panel.className = "error-panel";
        panel.textContent =
          outcome.kind === "not_found"
            ? `unknown star: ${outcome.message}`
            : outcome.kind === "engine_error"
              ? `engine ${outcome.engine} unavailable: ${outcome.message}`
              : outcome.message;
        this.root.appendChild(panel);
      }
    }
  }

  private renderResult(result: ResultSet): void {
    const meta = document.createElement("div");
    meta.className = "result-meta";
    let text =
      `${result.rows.length} rows in ${result.meta.elapsed_ms.toFixed(2)} ms ` +
      `[${result.meta.engines.join("+")}]`;
    if (result.meta.approximate) {
      const p = result.meta.est_precision;
      text += ` — approximate, est. precision ≥ ${p === null ? "?" : p.toFixed(2)}`;
      meta.classList.add("approximate-badge");
    }
    meta.textContent = text;
    this.root.appendChild(meta);

    const table = document.createElement("table");
    table.className = "result-table";
    const head = table.createTHead().insertRow();
    for (const col of result.columns) {
      const th = document.createElement("th");
      th.textContent = col;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const row of result.rows) {
      const tr = body.insertRow();
      for (const value of row) {
        tr.insertCell().textContent = value === null ? "" : String(value);
      }
    }
    this.root.appendChild(table);
  }
}
