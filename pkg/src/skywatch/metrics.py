"""Service metrics: monotone counters, gauges, per-cycle latency statistics,
and a query-latency histogram, rendered as plain `name value` lines."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

QUERY_LATENCY_BUCKETS_MS = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


class _Welford:
    __slots__ = ("n", "mean", "m2", "last")

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.last = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)
        self.last = x

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n >= 2 else 0.0


@dataclass(frozen=True)
class LatencyStats:
    n: int
    last: float
    mean: float
    variance: float


@dataclass(frozen=True)
class MetricsSnapshot:
    counters: dict[str, float]
    gauges: dict[str, float]
    latencies: dict[str, LatencyStats]
    query_histogram: dict[str, int]

    def render_text(self) -> str:
        lines = []
        for name in sorted(self.counters):
            lines.append(f"{name} {_fmt(self.counters[name])}")
        for name in sorted(self.gauges):
            lines.append(f"{name} {_fmt(self.gauges[name])}")
        for name in sorted(self.latencies):
            st = self.latencies[name]
            lines.append(f"{name}_last_ms {_fmt(st.last)}")
            lines.append(f"{name}_mean_ms {_fmt(st.mean)}")
            lines.append(f"{name}_var_ms2 {_fmt(st.variance)}")
            lines.append(f"{name}_count {st.n}")
        for bucket in sorted(self.query_histogram,
                             key=lambda b: float("inf") if b == "inf" else float(b)):
            lines.append(f"query_latency_ms_le_{bucket} {self.query_histogram[bucket]}")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.6g}"


CORE_COUNTERS = (
    "rows_ingested_total",
    "new_stars_total",
    "transient_alerts_total",
    "queries_total",
    "duplicate_rows_dropped_total",
    "calibration_skipped_total",
)


class MetricsRegistry:
    """Thread-safe sink for counters/gauges/latency samples."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counters: dict[str, float] = {name: 0.0 for name in CORE_COUNTERS}
        self._gauges: dict[str, float] = {}
        self._latencies: dict[str, _Welford] = {}
        self._hist = {str(b): 0 for b in QUERY_LATENCY_BUCKETS_MS}
        self._hist["inf"] = 0

    def inc(self, name: str, amount: float = 1.0) -> None:
        if amount < 0:
            raise ValueError("counters are monotone")
        with self._lock:
            self._counters[name] = self._counters.get(name, 0.0) + amount

    def set_gauge(self, name: str, value: float) -> None:
        with self._lock:
            self._gauges[name] = float(value)

    def observe_latency(self, name: str, ms: float) -> None:
        with self._lock:
            self._latencies.setdefault(name, _Welford()).add(ms)

    def observe_query(self, ms: float) -> None:
        with self._lock:
            for b in QUERY_LATENCY_BUCKETS_MS:
                if ms <= b:
                    self._hist[str(b)] += 1
                    break
            else:
                self._hist["inf"] += 1

    def snapshot(self) -> MetricsSnapshot:
        with self._lock:
            lat = {name: LatencyStats(n=w.n, last=w.last, mean=w.mean,
                                      variance=w.variance)
                   for name, w in self._latencies.items()}
            return MetricsSnapshot(
                counters=dict(self._counters),
                gauges=dict(self._gauges),
                latencies=lat,
                query_histogram=dict(self._hist),
            )
