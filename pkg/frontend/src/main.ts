import { fetchLightcurve, runQuery } from "./api.js";
import { AlertFeed, AlertView } from "./alerts.js";
import { QueryConsole } from "./console.js";
import { LightCurveChart, samplesFromResultSet } from "./lightcurve.js";
import { SkyMap } from "./skymap.js";
import { AlertStream } from "./sse.js";

const baseUrl =
  new URLSearchParams(location.search).get("server") ?? "http://127.0.0.1:8700";

const feedEl = document.getElementById("alert-feed") as HTMLUListElement;
const statusEl = document.getElementById("stream-status") as HTMLSpanElement;
const dropsEl = document.getElementById("drop-counter") as HTMLSpanElement;
const errEl = document.getElementById("error-panel") as HTMLDivElement;
const skyEl = document.getElementById("skymap") as unknown as SVGSVGElement;
const lcEl = document.getElementById("lightcurve") as unknown as SVGSVGElement;
const lcTitleEl = document.getElementById("lc-title") as HTMLElement;
const consoleRootEl = document.getElementById("console-result") as HTMLDivElement;
const consoleInputEl = document.getElementById("console-input") as HTMLInputElement;
const consoleRunEl = document.getElementById("console-run") as HTMLButtonElement;

const feed = new AlertFeed();
const skymap = new SkyMap(skyEl);
const chart = new LightCurveChart(lcEl);
const queryConsole = new QueryConsole(consoleRootEl, baseUrl);

function renderFeed(): void {
  feedEl.replaceChildren();
  for (const view of [...feed.entries].reverse().slice(0, 60)) {
    const li = document.createElement("li");
    li.className = `alert-item ${view.alert.kind}` +
      (view.acknowledged ? " acked" : "");
    const score = view.alert.score !== undefined
      ? ` score ${view.alert.score.toFixed(2)}` : "";
    li.textContent =
      `[${view.alert.kind}] star ${view.alert.star_id} cam ${view.alert.camera} ` +
      `seq ${view.alert.seq}${score}`;
    li.addEventListener("click", () => {
      feed.acknowledge(view.key);
      void showLightcurve(view);
      renderFeed();
    });
    feedEl.appendChild(li);
  }
  dropsEl.textContent =
    `dropped: ${feed.overflowDropped} local / ${feed.serverDropped} server`;
  skymap.render(feed.entries);
}

async function showLightcurve(view: AlertView): Promise<void> {
  lcTitleEl.textContent = `star ${view.alert.star_id}`;
  const outcome = await fetchLightcurve(baseUrl, view.alert.star_id);
  if (outcome.kind !== "ok") {
    lcTitleEl.textContent = outcome.kind === "not_found"
      ? `unknown star ${view.alert.star_id}`
      : `light curve failed: ${outcome.kind}`;
    return;
  }
  const samples = samplesFromResultSet(outcome.result);
  if (samples === null) {
    showError("light-curve payload failed decoding");
    return;
  }
  const events = await runQuery(baseUrl, "EVENTS minscore=0.8");
  const markers: number[] = [];
  if (events.kind === "ok") {
    const iSeq = events.result.columns.indexOf("seq");
    const iStar = events.result.columns.indexOf("star_id");
    for (const row of events.result.rows) {
      if (String(row[iStar]) === view.alert.star_id &&
          typeof row[iSeq] === "number") {
        markers.push(row[iSeq]);
      }
    }
  }
  chart.render(samples, markers);
}

function showError(message: string): void {
  errEl.textContent = message;
  errEl.hidden = false;
}

const stream = new AlertStream(`${baseUrl}/alerts/stream`, {
  onAlert: (alert) => {
    feed.add(alert);
    renderFeed();
  },
  onStatus: (status) => {
    statusEl.textContent = status;
    statusEl.className = `status-${status}`;
  },
  onDecodeError: (_raw, message) => showError(`alert decode failed: ${message}`),
});
stream.start();

consoleRunEl.addEventListener("click", () => {
  void queryConsole.run(consoleInputEl.value);
});
consoleInputEl.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    void queryConsole.run(consoleInputEl.value);
  }
});

skymap.selectHandler((view) => {
  feed.acknowledge(view.key);
  void showLightcurve(view);
  renderFeed();
});

// Template star backdrop for the sky scene (approximate query keeps it light).
void (async () => {
  const res = await runQuery(baseUrl, "CONE ra=180 dec=0 r=10 acc=0.05");
  if (res.kind === "ok") {
    const iRa = res.result.columns.indexOf("ra_deg");
    const iDec = res.result.columns.indexOf("dec_deg");
    skymap.setStars(res.result.rows.flatMap((row) => {
      const ra = row[iRa];
      const dec = row[iDec];
      return typeof ra === "number" && typeof dec === "number"
        ? [{ ra_deg: ra, dec_deg: dec }] : [];
    }));
    renderFeed();
  }
})();
