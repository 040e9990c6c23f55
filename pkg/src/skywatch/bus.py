"""In-process alert bus: bounded fan-out from the pipeline to subscribers."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field


@dataclass(frozen=True)
class AlertMessage:
    kind: str              # "new_star" | "transient"
    star_id: int
    camera: int
    seq: int
    ra_deg: float
    dec_deg: float
    wall_time: float
    score: float | None = None     # transient only
    model: str | None = None

    def to_dict(self) -> dict:
        # star_id as a string: 64-bit ids overflow JSON's float53 range.
        out = {
            "kind": self.kind,
            "star_id": str(self.star_id),
            "camera": self.camera,
            "seq": self.seq,
            "ra_deg": self.ra_deg,
            "dec_deg": self.dec_deg,
            "wall_time": self.wall_time,
        }
        if self.score is not None:
            out["score"] = self.score
        if self.model is not None:
            out["model"] = self.model
        return out


class Subscription:
    """One subscriber's bounded buffer; overflow drops the oldest message."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.dropped = 0
        self._buf: deque[AlertMessage] = deque()
        self._cond = threading.Condition()
        self.closed = False

    def _offer(self, msg: AlertMessage) -> None:
        with self._cond:
            if len(self._buf) >= self.capacity:
                self._buf.popleft()
                self.dropped += 1
            self._buf.append(msg)
            self._cond.notify()

    def poll(self, timeout: float = 0.5) -> AlertMessage | None:
        with self._cond:
            if not self._buf:
                self._cond.wait(timeout)
            return self._buf.popleft() if self._buf else None

    def drain(self) -> list[AlertMessage]:
        with self._cond:
            out = list(self._buf)
            self._buf.clear()
            return out


@dataclass
class EventBus:
    buffer_capacity: int = 1000
    _subs: list[Subscription] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    published_total: int = 0

    def subscribe(self) -> Subscription:
        sub = Subscription(self.buffer_capacity)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.closed = True
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, msg: AlertMessage) -> None:
        with self._lock:
            subs = list(self._subs)
            self.published_total += 1
        for sub in subs:
            sub._offer(msg)


def new_star_alert(star_id: int, camera: int, seq: int, ra: float, dec: float) -> AlertMessage:
    return AlertMessage(kind="new_star", star_id=star_id, camera=camera, seq=seq,
                        ra_deg=ra, dec_deg=dec, wall_time=time.time())


def transient_alert(star_id: int, camera: int, seq: int, ra: float, dec: float,
                    score: float, model: str) -> AlertMessage:
    return AlertMessage(kind="transient", star_id=star_id, camera=camera, seq=seq,
                        ra_deg=ra, dec_deg=dec, wall_time=time.time(),
                        score=score, model=model)
