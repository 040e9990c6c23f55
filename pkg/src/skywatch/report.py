"""Report rendering: JSON + CSV alongside matplotlib figures."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import NightReport


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def write_night_report(report: NightReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, cycles.csv, and per-night figures; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    summary = report.summary()
    paths["json"] = out / "report.json"
    paths["json"].write_text(json.dumps(summary, indent=1, sort_keys=True))

    paths["csv"] = out / "cycles.csv"
    with open(paths["csv"], "w") as fh:
        fh.write("cycle,ingest_ms,detect_ms,eset_size\n")
        for i, (ing, det, es) in enumerate(zip(report.ingest_ms, report.detect_ms,
                                               report.eset_sizes)):
            fh.write(f"{i},{ing:.3f},{det:.3f},{es}\n")

    if report.ingest_ms:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(report.ingest_ms, lw=0.8, label="ingest")
        ax.plot(report.detect_ms, lw=0.8, label="detect")
        ax.set_xlabel("cycle")
        ax.set_ylabel("latency [ms]")
        ax.set_title(f"per-cycle latency, night {report.night_id}")
        ax.legend()
        paths["latency_fig"] = _save(fig, out / "latency.png")

        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(report.eset_sizes, lw=0.8, color="tab:red")
        ax.set_xlabel("cycle")
        ax.set_ylabel("Eset size")
        ax.set_title("abnormal-star detections per exposure")
        paths["eset_fig"] = _save(fig, out / "eset_sizes.png")

    if report.cache_bytes:
        cats = [c for c in ("blocks", "index", "prestats", "hot") if c in report.cache_bytes]
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.bar(cats, [report.cache_bytes[c] / 1e6 for c in cats], color="tab:blue")
        ax.set_ylabel("MB")
        ax.set_title("real-time store memory by category")
        paths["cache_fig"] = _save(fig, out / "cache_bytes.png")
    return paths


def write_detector_report(result: dict, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    paths["json"] = out / "detector_bench.json"
    paths["json"].write_text(json.dumps(result, indent=1, sort_keys=True))

    paths["csv"] = out / "detector_bench.csv"
    with open(paths["csv"], "w") as fh:
        fh.write("model,recall,false_positive_rate\n")
        for name, rec in result["per_model_recall"].items():
            fh.write(f"{name},{rec:.6f},{result['per_model_fpr'][name]:.6f}\n")
        fh.write(f"ensemble,{result['recall']:.6f},{result['false_positive_rate']:.6f}\n")

    names = list(result["per_model_recall"]) + ["ensemble"]
    recalls = list(result["per_model_recall"].values()) + [result["recall"]]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(names, recalls, color=["tab:blue"] * (len(names) - 1) + ["tab:red"])
    ax.set_ylabel("recall")
    ax.set_ylim(0, 1)
    ax.set_title(f"detector recall ({result['n_series']} injected series)")
    ax.tick_params(axis="x", rotation=30)
    paths["fig"] = _save(fig, out / "detector_recall.png")
    return paths


def write_query_report(latencies_ms: list[float], out_dir: str | Path,
                       label: str = "query") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lat = np.array(latencies_ms)
    summary = query_latency_summary(latencies_ms)
    paths: dict[str, Path] = {}
    paths["json"] = out / f"{label}_latency.json"
    paths["json"].write_text(json.dumps(summary, indent=1, sort_keys=True))
    paths["csv"] = out / f"{label}_latency.csv"
    with open(paths["csv"], "w") as fh:
        fh.write("query_index,latency_ms\n")
        for i, v in enumerate(lat):
            fh.write(f"{i},{v:.4f}\n")

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(lat, bins=40, color="tab:green")
    ax.axvline(summary["p99_ms"], color="tab:red", ls="--",
               label=f"p99 = {summary['p99_ms']:.2f} ms")
    ax.set_xlabel("latency [ms]")
    ax.set_ylabel("queries")
    ax.set_title(f"{label} latency over {len(lat)} queries")
    ax.legend()
    paths["fig"] = _save(fig, out / f"{label}_latency.png")
    return paths


def query_latency_summary(latencies_ms: list[float]) -> dict:
    lat = np.array(latencies_ms)
    return {
        "n": len(lat),
        "p50_ms": float(np.percentile(lat, 50)),
        "p99_ms": float(np.percentile(lat, 99)),
        "worst_ms": float(lat.max()),
        "mean_ms": float(lat.mean()),
    }
