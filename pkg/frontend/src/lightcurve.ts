import { ResultSet } from "./types.js";

export interface Sample {
  night_id: string;
  seq: number;
  t_ms: number;
  mag: number;
}

/** Pull light-curve samples out of a result set (columns are positional). */
export function samplesFromResultSet(rs: ResultSet): Sample[] | null {
  const iNight = rs.columns.indexOf("night_id");
  const iSeq = rs.columns.indexOf("seq");
  const iT = rs.columns.indexOf("timestamp_ms");
  const iMag = rs.columns.indexOf("mag");
  if (iNight < 0 || iSeq < 0 || iT < 0 || iMag < 0) {
    return null;
  }
  const out: Sample[] = [];
  for (const row of rs.rows) {
    const night = row[iNight];
    const seq = row[iSeq];
    const t = row[iT];
    const mag = row[iMag];
    if (typeof seq !== "number" || typeof t !== "number" || typeof mag !== "number") {
      return null;
    }
    out.push({ night_id: String(night), seq, t_ms: t, mag });
  }
  return out;
}

const SVG_NS = "http://www.w3.org/2000/svg";

/**
 * Time-vs-magnitude chart with the magnitude axis inverted (brighter is
 * up, the astronomical convention) and vertical markers at event cycles.
 */
export class LightCurveChart {
  constructor(
    private svg: SVGSVGElement,
    private width = 640,
    private height = 240,
    private pad = 30,
  ) {
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  }

  render(samples: Sample[], eventSeqs: number[] = []): void {
    while (this.svg.lastChild) {
      this.svg.removeChild(this.svg.lastChild);
    }
    if (samples.length === 0) {
      return;
    }
    const t0 = Math.min(...samples.map((s) => s.t_ms));
    const t1 = Math.max(...samples.map((s) => s.t_ms));
    const m0 = Math.min(...samples.map((s) => s.mag));
    const m1 = Math.max(...samples.map((s) => s.mag));
    const tSpan = Math.max(t1 - t0, 1);
    const mSpan = Math.max(m1 - m0, 1e-3);

    const xOf = (t: number) =>
      this.pad + ((t - t0) / tSpan) * (this.width - 2 * this.pad);
    // Inverted axis: the minimum (brightest) magnitude maps to the top.
    const yOf = (m: number) =>
      this.pad + ((m - m0) / mSpan) * (this.height - 2 * this.pad);

    const bySeq = new Map(samples.map((s) => [s.seq, s] as const));
    for (const seq of eventSeqs) {
      const s = bySeq.get(seq);
      if (s === undefined) continue;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", xOf(s.t_ms).toFixed(2));
      line.setAttribute("x2", xOf(s.t_ms).toFixed(2));
      line.setAttribute("y1", String(this.pad));
      line.setAttribute("y2", String(this.height - this.pad));
      line.setAttribute("class", "event-marker");
      this.svg.appendChild(line);
    }

    for (const s of samples) {
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", xOf(s.t_ms).toFixed(2));
      dot.setAttribute("cy", yOf(s.mag).toFixed(2));
      dot.setAttribute("r", "1.5");
      dot.setAttribute("class", "sample");
      dot.setAttribute("data-mag", String(s.mag));
      this.svg.appendChild(dot);
    }

    const axis = document.createElementNS(SVG_NS, "text");
    axis.setAttribute("x", "4");
    axis.setAttribute("y", String(this.pad));
    axis.setAttribute("class", "axis-label");
    axis.textContent = `${m0.toFixed(2)} mag`;  // brightest at the top
    this.svg.appendChild(axis);
    const axis2 = document.createElementNS(SVG_NS, "text");
    axis2.setAttribute("x", "4");
    axis2.setAttribute("y", String(this.height - this.pad));
    axis2.setAttribute("class", "axis-label");
    axis2.textContent = `${m1.toFixed(2)} mag`;
    this.svg.appendChild(axis2);
  }
}
