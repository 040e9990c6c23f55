import { AlertView } from "./alerts.js";

export interface Viewport {
  centerRa: number;
  centerDec: number;
  zoom: number; // degrees of ra visible = 360 / zoom
}

export interface SkyPoint {
  ra_deg: number;
  dec_deg: number;
}

/** Equirectangular projection of (ra, dec) into pixel coordinates. */
export function project(
  ra: number,
  dec: number,
  vp: Viewport,
  width: number,
  height: number,
): { x: number; y: number } {
  let dra = ra - vp.centerRa;
  while (dra > 180) dra -= 360;
  while (dra < -180) dra += 360;
  const spanRa = 360 / vp.zoom;
  const spanDec = 180 / vp.zoom;
  // ra increases to the left (astronomical convention).
  const x = width / 2 - (dra / spanRa) * width;
  const y = height / 2 - ((dec - vp.centerDec) / spanDec) * height;
  return { x, y };
}

const SVG_NS = "http://www.w3.org/2000/svg";

/** 2-D sky scatter of template stars with alert overlays. */
export class SkyMap {
  viewport: Viewport = { centerRa: 180, centerDec: 0, zoom: 1 };
  private stars: SkyPoint[] = [];
  private onSelect: ((a: AlertView) => void) | null = null;

  constructor(
    private svg: SVGSVGElement,
    private width = 640,
    private height = 320,
  ) {
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  }

  setStars(stars: SkyPoint[]): void {
    this.stars = stars;
  }

  selectHandler(fn: (a: AlertView) => void): void {
    this.onSelect = fn;
  }

  render(alerts: AlertView[]): void {
    while (this.svg.lastChild) {
      this.svg.removeChild(this.svg.lastChild);
    }
    for (const star of this.stars) {
      const p = project(star.ra_deg, star.dec_deg, this.viewport, this.width, this.height);
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", p.x.toFixed(2));
      dot.setAttribute("cy", p.y.toFixed(2));
      dot.setAttribute("r", "1");
      dot.setAttribute("class", "star");
      this.svg.appendChild(dot);
    }
    for (const view of alerts) {
      const p = project(view.alert.ra_deg, view.alert.dec_deg, this.viewport,
                        this.width, this.height);
      const marker = document.createElementNS(SVG_NS, "circle");
      marker.setAttribute("cx", p.x.toFixed(2));
      marker.setAttribute("cy", p.y.toFixed(2));
      marker.setAttribute("r", view.alert.kind === "transient" ? "5" : "3");
      marker.setAttribute("class", `alert ${view.alert.kind}` +
        (view.acknowledged ? " acked" : ""));
      marker.setAttribute("data-key", view.key);
      marker.addEventListener("click", () => this.onSelect?.(view));
      this.svg.appendChild(marker);
    }
  }
}
