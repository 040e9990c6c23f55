import { expect, test } from "vitest";

import { AlertFeed } from "../src/alerts.js";
import { Alert } from "../src/types.js";

function alert(seq: number, starId = "9"): Alert {
  return {
    kind: "transient",
    star_id: starId,
    camera: 0,
    seq,
    ra_deg: 1,
    dec_deg: 2,
    wall_time: 0,
  };
}

test("feed caps at capacity, dropping oldest and counting", () => {
  const feed = new AlertFeed(5);
  for (let i = 0; i < 9; i++) {
    feed.add(alert(i));
  }
  expect(feed.size).toBe(5);
  expect(feed.entries.map((e) => e.alert.seq)).toEqual([4, 5, 6, 7, 8]);
  expect(feed.overflowDropped).toBe(4);
});

test("acknowledgement persists for the session across re-adds", () => {
  const feed = new AlertFeed(10);
  const view = feed.add(alert(1));
  expect(view.acknowledged).toBe(false);
  feed.acknowledge(view.key);
  expect(feed.entries[0]!.acknowledged).toBe(true);
  const again = feed.add(alert(1));    // same key re-delivered
  expect(again.acknowledged).toBe(true);
});

test("pinned entries survive overflow", () => {
  const feed = new AlertFeed(3);
  const keep = feed.add(alert(0));
  feed.pin(keep.key);
  for (let i = 1; i < 6; i++) {
    feed.add(alert(i));
  }
  expect(feed.entries.some((e) => e.alert.seq === 0)).toBe(true);
  expect(feed.size).toBe(3);
});

test("server-side drop counter is surfaced", () => {
  const feed = new AlertFeed(10);
  feed.add({ ...alert(1), dropped: 3 });
  feed.add({ ...alert(2), dropped: 7 });
  expect(feed.serverDropped).toBe(7);
});
