// @vitest-environment jsdom
import { afterEach, beforeEach, expect, test } from "vitest";

import { QueryConsole } from "../src/console.js";
import { StubServer, startStubServer } from "./stub_server.js";

let server: StubServer;
let root: HTMLDivElement;

beforeEach(async () => {
  server = await startStubServer();
  root = document.createElement("div");
  document.body.appendChild(root);
});

afterEach(async () => {
  root.remove();
  await server.close();
});

test("valid cone renders a table of stars", async () => {
  server.queryHandler = () => ({
    status: 200,
    body: {
      columns: ["star_id", "ra_deg", "dec_deg"],
      rows: [["101", 10.0, -5.0], ["102", 10.2, -5.1]],
      meta: { engines: ["cache"], elapsed_ms: 2.5, approximate: false, est_precision: null },
    },
  });
  const qc = new QueryConsole(root, server.url);
  const outcome = await qc.run("CONE ra=10 dec=-5 r=0.5");
  expect(outcome?.kind).toBe("ok");
  const table = root.querySelector("table.result-table")!;
  expect(table.querySelectorAll("th")).toHaveLength(3);
  expect(table.querySelectorAll("tbody tr")).toHaveLength(2);
  expect(root.querySelector(".result-meta")!.textContent).toContain("2 rows");
});

test("malformed AQL renders a caret at the server-reported position", async () => {
  server.queryHandler = () => ({
    status: 400,
    body: { error: "syntax error at position 9: missing value for 'ra'",
            position: 9 },
  });
  const qc = new QueryConsole(root, server.url);
  await qc.run("CONE ra=");
  const pre = root.querySelector("pre.parse-error")!;
  const lines = pre.textContent!.split("\n");
  expect(lines[0]).toBe("CONE ra=");
  expect(lines[1]).toBe(" ".repeat(8) + "^");       // column 9, 1-based
  expect(lines[2]).toContain("position 9");
});

test("approximate result shows the precision badge", async () => {
  server.queryHandler = () => ({
    status: 200,
    body: {
      columns: ["star_id"],
      rows: [["7"]],
      meta: { engines: ["cache"], elapsed_ms: 1.0, approximate: true, est_precision: 0.62 },
    },
  });
  const qc = new QueryConsole(root, server.url);
  await qc.run("CONE ra=10 dec=0 r=5 acc=0.5");
  const meta = root.querySelector(".result-meta")!;
  expect(meta.classList.contains("approximate-badge")).toBe(true);
  expect(meta.textContent).toContain("approximate, est. precision ≥ 0.62");
});

test("decode failure shows an error panel, never a blank screen", async () => {
  server.queryHandler = () => ({ status: 200, body: { nonsense: true } });
  const qc = new QueryConsole(root, server.url);
  await qc.run("EVENTS");
  expect(root.querySelector(".error-panel")).not.toBeNull();
  expect(root.textContent!.length).toBeGreaterThan(0);
});

test("only one query runs at a time", async () => {
  let calls = 0;
  server.queryHandler = () => {
    calls += 1;
    return {
      status: 200,
      body: { columns: [], rows: [],
              meta: { engines: [], elapsed_ms: 0, approximate: false, est_precision: null } },
    };
  };
  const qc = new QueryConsole(root, server.url);
  const [a, b] = await Promise.all([qc.run("EVENTS"), qc.run("EVENTS")]);
  expect(calls).toBe(1);
  expect([a, b].filter((o) => o === null)).toHaveLength(1);
});
