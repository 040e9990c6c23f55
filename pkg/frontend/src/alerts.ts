import { Alert } from "./types.js";

export const FEED_CAPACITY = 1000;

export interface AlertView {
  alert: Alert;
  key: string;
  acknowledged: boolean;
  pinned: boolean;
  receivedAt: number;
}

function keyOf(alert: Alert): string {
  return `${alert.star_id}:${alert.seq}:${alert.kind}`;
}

/**
 * Client-side alert feed: newest last, capped at FEED_CAPACITY with the
 * oldest entries dropped (counted). Acknowledgements persist for the
 * session even if the entry itself is later dropped from the feed.
 */
export class AlertFeed {
  readonly entries: AlertView[] = [];
  overflowDropped = 0;
  serverDropped = 0;
  private acked = new Set<string>();

  constructor(private capacity: number = FEED_CAPACITY) {}

  add(alert: Alert, receivedAt: number = Date.now()): AlertView {
    if (alert.dropped !== undefined) {
      this.serverDropped = Math.max(this.serverDropped, alert.dropped);
    }
    const view: AlertView = {
      alert,
      key: keyOf(alert),
      acknowledged: this.acked.has(keyOf(alert)),
      pinned: false,
      receivedAt,
    };
    this.entries.push(view);
    while (this.entries.length > this.capacity) {
      const idx = this.entries.findIndex((e) => !e.pinned);
      this.entries.splice(idx >= 0 ? idx : 0, 1);
      this.overflowDropped += 1;
    }
    return view;
  }

  acknowledge(key: string): void {
    this.acked.add(key);
    for (const e of this.entries) {
      if (e.key === key) {
        e.acknowledged = true;
      }
    }
  }

  pin(key: string, pinned = true): void {
    for (const e of this.entries) {
      if (e.key === key) {
        e.pinned = pinned;
      }
    }
  }

  get size(): number {
    return this.entries.length;
  }
}
