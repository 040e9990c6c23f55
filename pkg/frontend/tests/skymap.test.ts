// @vitest-environment jsdom
import { beforeEach, expect, test } from "vitest";

import { AlertFeed } from "../src/alerts.js";
import { SkyMap, project } from "../src/skymap.js";
import { Alert } from "../src/types.js";

let svg: SVGSVGElement;

beforeEach(() => {
  svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  document.body.appendChild(svg);
});

function alertAt(ra: number, dec: number, seq: number): Alert {
  return { kind: "transient", star_id: String(seq), camera: 0, seq,
           ra_deg: ra, dec_deg: dec, wall_time: 0, score: 0.9 };
}

test("projection centers the viewport center", () => {
  const vp = { centerRa: 180, centerDec: 0, zoom: 1 };
  const p = project(180, 0, vp, 640, 320);
  expect(p.x).toBeCloseTo(320);
  expect(p.y).toBeCloseTo(160);
});

test("ra increases leftward and dec upward", () => {
  const vp = { centerRa: 180, centerDec: 0, zoom: 1 };
  const east = project(190, 0, vp, 640, 320);
  const north = project(180, 10, vp, 640, 320);
  expect(east.x).toBeLessThan(320);
  expect(north.y).toBeLessThan(160);
});

test("ra wraps around 0/360", () => {
  const vp = { centerRa: 0, centerDec: 0, zoom: 1 };
  const left = project(5, 0, vp, 640, 320);
  const right = project(355, 0, vp, 640, 320);
  expect(Math.abs(left.x - 320)).toBeCloseTo(Math.abs(right.x - 320));
  expect(left.x).toBeLessThan(320);
  expect(right.x).toBeGreaterThan(320);
});

test("every rendered alert corresponds to a received alert", () => {
  const feed = new AlertFeed();
  for (let i = 0; i < 25; i++) {
    feed.add(alertAt(i * 10, i - 12, i));
  }
  const map = new SkyMap(svg);
  map.render(feed.entries);
  const markers = [...svg.querySelectorAll("circle.alert")];
  expect(markers).toHaveLength(25);
  const keys = new Set(feed.entries.map((e) => e.key));
  for (const marker of markers) {
    expect(keys.has(marker.getAttribute("data-key")!)).toBe(true);
  }
});

test("clicking an alert marker fires the select handler", () => {
  const feed = new AlertFeed();
  feed.add(alertAt(100, 5, 1));
  const map = new SkyMap(svg);
  let selected = "";
  map.selectHandler((v) => (selected = v.key));
  map.render(feed.entries);
  (svg.querySelector("circle.alert") as SVGCircleElement)
    .dispatchEvent(new MouseEvent("click"));
  expect(selected).toBe(feed.entries[0]!.key);
});

test("star backdrop renders beneath alerts", () => {
  const map = new SkyMap(svg);
  map.setStars([{ ra_deg: 10, dec_deg: 0 }, { ra_deg: 20, dec_deg: 5 }]);
  map.render([]);
  expect(svg.querySelectorAll("circle.star")).toHaveLength(2);
});
