"""Engine configuration: one dataclass holding every tunable knob.

Values load from JSON config files with PROVHUNT_* environment overrides on
top; detect runs echo the full configuration in a run manifest together with
content hashes of the knowledge base and vector table actually used.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields


@dataclass
class EngineConfig:
    # matching
    theta_hit: float = 0.75
    theta_q: float | None = None          # explicit override of the calibrated value
    alpha: float = 0.05
    search_mode: str = "widened"          # widened | nearest
    bandwidth: float | str = "median"
    # embedding
    ngram_min: int = 3
    ngram_max: int = 6
    # lifting
    rules_path: str | None = None
    dns_map_path: str | None = None
    bin_user_folder_alias: bool = False
    external_ip_domain_only: bool = False
    # graph
    decay: float = 0.5
    hops: int = 3
    floor: float | str = "theta_q"
    window_sec: float = 86400.0
    ooo_tolerance_sec: float = 5.0
    flush_interval_sec: float | None = None   # defaults to window_sec
    # report client
    report_endpoint: str | None = None
    report_model: str = "default"
    report_timeout: float = 30.0

    def resolved_flush_interval(self) -> float:
        return self.flush_interval_sec if self.flush_interval_sec else self.window_sec

    def resolve_floor(self, theta_q: float | None) -> float:
        if self.floor == "theta_q":
            if theta_q is None:
                raise ValueError("floor is 'theta_q' but theta_q is not set")
            return float(theta_q)
        return float(self.floor)

    def to_dict(self) -> dict:
        return asdict(self)


_ENV_PREFIX = "PROVHUNT_CFG_"


def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    # str-or-float knobs (bandwidth, floor) and optional floats
    try:
        return float(raw)
    except ValueError:
        return raw


def load_config(path=None, env: dict | None = None) -> EngineConfig:
    """JSON file config, then PROVHUNT_CFG_<NAME> environment overrides."""
    cfg = EngineConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        valid = {f.name for f in fields(EngineConfig)}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            setattr(cfg, key, value)
    env = os.environ if env is None else env
    for f in fields(EngineConfig):
        env_key = _ENV_PREFIX + f.name.upper()
        if env_key in env:
            setattr(cfg, f.name, _coerce(env[env_key], getattr(cfg, f.name)))
    return cfg


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    amid_sha256: str
    vectors_sha256: str
    kernel_backend: str
    theta_q: float | None = None
    counts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)
