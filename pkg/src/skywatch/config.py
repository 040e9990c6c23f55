"""Key=value config files for the service (`ASTROSERV_CONFIG` overrides the path)."""

from __future__ import annotations

import os
from pathlib import Path

from .detect import DetectorConfig
from .pipeline import ServiceConfig
from .simgen import GenConfig

CONFIG_ENV_VAR = "ASTROSERV_CONFIG"


def _parse_bool(v: str) -> bool:
    return v.strip().lower() in ("1", "true", "yes", "on")


_GEN_KEYS = {
    "cameras": int, "stars_per_camera": int, "cycles": int, "cadence_ms": int,
    "seed": int, "noise_sigma": float, "transient_mean_per_cycle": float,
    "night_start_ms": int,
}
_DETECTOR_KEYS = {
    "k": float, "theta": float, "noise_ref": float,
    "kappa_scale": float, "h_scale": float,
}
_SERVICE_KEYS = {
    "night_id": str, "data_dir": str, "partition_scheme": str,
    "partition_level": int, "match_radius_pix": float,
    "spool_enabled": _parse_bool, "accelerate": _parse_bool,
    "hot_capacity": int, "time_bucket_width": int,
}
_EXTRA_KEYS = {"host": str, "port": int}


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_service_config(path: str | Path | None = None) -> tuple[ServiceConfig, dict]:
    """Build a ServiceConfig from a key=value file.

    Returns (config, extras); extras holds non-pipeline keys such as
    host/port.  The ASTROSERV_CONFIG environment variable overrides `path`.
    """
    env_path = os.environ.get(CONFIG_ENV_VAR)
    if env_path:
        path = env_path
    raw: dict[str, str] = {}
    if path is not None:
        raw = parse_config_text(Path(path).read_text())

    gen_kwargs = {}
    det_kwargs = {}
    svc_kwargs = {}
    extras = {}
    for key, value in raw.items():
        if key in _GEN_KEYS:
            gen_kwargs[key] = _GEN_KEYS[key](value)
        elif key in _DETECTOR_KEYS:
            det_kwargs[key] = _DETECTOR_KEYS[key](value)
        elif key in _SERVICE_KEYS:
            svc_kwargs[key] = _SERVICE_KEYS[key](value)
        elif key in _EXTRA_KEYS:
            extras[key] = _EXTRA_KEYS[key](value)
        else:
            extras[key] = value
    cfg = ServiceConfig(gen=GenConfig(**gen_kwargs),
                        detector=DetectorConfig(**det_kwargs), **svc_kwargs)
    return cfg, extras
