"""Runtime configuration: file-based with environment overrides.

Config files are JSON. Every key can be overridden through a
``DOCTABLES_<SECTION>_<KEY>`` (or ``DOCTABLES_<KEY>``) environment
variable, e.g. ``DOCTABLES_ORACLE_BACKEND=mock`` or ``DOCTABLES_SEED=3``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class OracleConfig:
    backend: str = "mock"  # mock | http | replay
    endpoint: str = ""
    auth_env: str = "DOCTABLES_API_TOKEN"
    model: str = "gpt-4-32k"
    annotations_dir: str = ""  # ground-truth annotations for the mock backend
    cache_path: str = ""  # replay cache file; empty = in-memory only
    max_inflight: int = 1
    retry_base: float = 1.0
    retry_factor: float = 2.0
    retry_attempts: int = 5
    # Ledger display rates, per token (GPT-4-32k era published pricing).
    rate_in: float = 0.06e-3
    rate_out: float = 0.12e-3


@dataclass
class Config:
    seed: int = 7
    header_sample_k: int = 10  # phrases sampled per cluster for header pruning
    center_tolerance: float = 12.0  # points; |midpoint - width/2| <= tol
    size_quantum: float = 0.5  # font sizes rounded to the nearest multiple
    include_italic: bool = False  # fold italic (from the font name) into the type flags
    prefix_threshold: int = 1  # template level coverage required for a match
    like_threshold: float = 0.9  # Jaccard threshold for LIKE
    name_sim_threshold: float = 0.8  # header-name similarity for rule-based table nodes
    summary_budget: int = 128  # token budget of the extractive summary part
    strict: bool = False
    oracle: OracleConfig = field(default_factory=OracleConfig)

    @classmethod
    def load(cls, path: str | Path | None = None, env: dict[str, str] | None = None) -> "Config":
        """Build a config from an optional JSON file plus environment overrides."""
        data: dict = {}
        if path is not None:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls._from_dict(data)
        cfg._apply_env(os.environ if env is None else env)
        return cfg

    @classmethod
    def _from_dict(cls, data: dict) -> "Config":
        oracle_data = data.pop("oracle", {})
        known = {f.name for f in dataclasses.fields(cls)} - {"oracle"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        oracle_known = {f.name for f in dataclasses.fields(OracleConfig)}
        bad = set(oracle_data) - oracle_known
        if bad:
            raise ValueError(f"unknown oracle config keys: {sorted(bad)}")
        return cls(oracle=OracleConfig(**oracle_data), **data)

    def _apply_env(self, env: dict[str, str]) -> None:
        for f in dataclasses.fields(self):
            if f.name == "oracle":
                continue
            raw = env.get(f"DOCTABLES_{f.name.upper()}")
            if raw is not None:
                setattr(self, f.name, _coerce(raw, f.type))
        for f in dataclasses.fields(self.oracle):
            raw = env.get(f"DOCTABLES_ORACLE_{f.name.upper()}")
            if raw is not None:
                setattr(self.oracle, f.name, _coerce(raw, f.type))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(raw: str, annotation) -> object:
    text = str(annotation)
    if "bool" in text:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if "int" in text:
        return int(raw)
    if "float" in text:
        return float(raw)
    return raw
