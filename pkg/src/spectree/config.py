"""Run configuration shared by the learner, recovery, decoder and CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass


@dataclass
class RunConfig:
    seed: int = 0
    restarts: int = 50
    iterations: int = 100
    polish: int = 20
    rank_threshold: float = 1e-8
    pinv_rtol: float = 1e-12
    window: str = "overlap"
    burn_in: int = 1000
    meta_state_cap: int = 4096
    threads: int = 1
    log_space: bool = False

    def __post_init__(self):
        for name in ("restarts", "iterations", "meta_state_cap", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("polish", "burn_in"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("rank_threshold", "pinv_rtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.window not in ("overlap", "disjoint"):
            raise ValueError(f"window must be 'overlap' or 'disjoint', not {self.window!r}")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_mapping(json.load(fh))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
