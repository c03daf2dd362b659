"""Pipeline configuration: defaults, file loading, and the bank fingerprint."""

from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import InvalidConfig
from .ingest import IMAGENET_MEAN, IMAGENET_STD


@dataclass
class PipelineConfig:
    model_path: str = ""
    data_root: str = ""
    layout: str = "generic"
    side: int = 784
    region_radius: int = 12
    jl_eps: float = 0.90
    coreset_fraction: float = 0.10
    train_subset: float = 1.0
    attention_block_rows: int = 512
    smooth_sigma: float = 0.0
    projection_seed: int = 0
    coreset_seed: int | None = None  # None: deterministic start at row 0
    use_region: bool = True
    use_spatial: bool = True
    include_normal_pixels: bool = True
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    bank_path: str = "bank.rsft"
    out_dir: str = "out"
    cache_dir: str | None = None
    no_cache: bool = False

    def validate(self) -> None:
        if self.side < 32:
            raise InvalidConfig(f"side must be >= 32, got {self.side}")
        if self.region_radius < 0:
            raise InvalidConfig("region_radius must be >= 0")
        if not 0.0 < self.jl_eps < 1.0:
            raise InvalidConfig("jl_eps must be in (0, 1)")
        if not 0.0 < self.coreset_fraction <= 1.0:
            raise InvalidConfig("coreset_fraction must be in (0, 1]")
        if not 0.0 < self.train_subset <= 1.0:
            raise InvalidConfig("train_subset must be in (0, 1]")
        if self.attention_block_rows < 1:
            raise InvalidConfig("attention_block_rows must be >= 1")
        if self.smooth_sigma < 0:
            raise InvalidConfig("smooth_sigma must be >= 0")

    def fingerprint(self, backbone_sha256: str) -> dict:
        """Settings that must match between bank build and bank use."""
        return {
            "backbone_sha256": backbone_sha256,
            "side": self.side,
            "region_radius": self.region_radius,
            "use_region": self.use_region,
            "use_spatial": self.use_spatial,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def load_config_file(path: str | Path) -> dict:
    """Read a TOML or JSON config file into a plain dict."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    raise InvalidConfig(f"config file must be .toml or .json, got {path.name}")


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Precedence: explicit overrides > config file > defaults."""
    known = {f.name for f in fields(PipelineConfig)}
    merged: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in known:
                raise InvalidConfig(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = value
    cfg = PipelineConfig(**merged)
    if isinstance(cfg.mean, list):
        cfg.mean = tuple(cfg.mean)
    if isinstance(cfg.std, list):
        cfg.std = tuple(cfg.std)
    cfg.validate()
    return cfg
