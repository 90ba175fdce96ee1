"""Flat JSON run configuration: network keys, training keys and optional paths in one object.

Every key is optional; omitted keys take the dataclass defaults.  Unknown keys
are rejected.  ``TPCNET_SEED`` in the environment overrides ``seed``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .network import NetworkConfig
from .training import TrainConfig

SEED_ENV = "TPCNET_SEED"
PATH_KEYS = ("data", "out", "max_steps", "profile")
PROFILES = ("full", "desk")


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: str | None = None
    out: str | None = None
    max_steps: int | None = None

    @classmethod
    def from_dict(cls, d: dict, env: dict | None = None) -> "RunConfig":
        env = os.environ if env is None else env
        net_keys = {f.name for f in fields(NetworkConfig)}
        train_keys = {f.name for f in fields(TrainConfig)}
        unknown = set(d) - net_keys - train_keys - set(PATH_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        profile = d.get("profile", "full")
        if profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {profile!r}")
        train_over = {k: v for k, v in d.items() if k in train_keys}
        if env.get(SEED_ENV):
            train_over["seed"] = int(env[SEED_ENV])
        train = TrainConfig.desk_scale(**train_over) if profile == "desk" else TrainConfig(**train_over)
        network = NetworkConfig.from_dict({k: v for k, v in d.items() if k in net_keys})
        return cls(network, train, d.get("data"), d.get("out"), d.get("max_steps"))

    @classmethod
    def load(cls, path, env: dict | None = None) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(d, env)

    def to_dict(self) -> dict:
        d = self.network.to_dict()
        d.update({f.name: getattr(self.train, f.name) for f in fields(TrainConfig)})
        for k in ("data", "out", "max_steps"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        return d
