"""Service configuration: JSON file, IOR_* environment overrides, CLI flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigInvalid, InvalidSpec
from .scoring import BandPolicy

ENV_PREFIX = "IOR_"

_PATH_KEYS = ("data_dir", "templates_path", "rules_path", "regions_path")


@dataclass
class ServiceConfig:
    data_dir: Path = Path("./data")
    listen_addr: str = "127.0.0.1:8321"
    band_policy: BandPolicy = field(default_factory=BandPolicy)
    templates_path: Path | None = None
    rules_path: Path | None = None
    regions_path: Path | None = None


def load_config(config_path: str | Path | None = None,
                env: Mapping[str, str] | None = None,
                **overrides: Any) -> ServiceConfig:
    """Merge config sources; precedence: defaults < file < env < explicit args."""
    env = os.environ if env is None else env
    merged: dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigInvalid(f"config file {path} does not exist")
        try:
            file_data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file is not valid JSON: {exc.msg}", line=exc.lineno)
        if not isinstance(file_data, dict):
            raise ConfigInvalid("config file must contain a JSON object")
        merged.update(file_data)
    for key in (*_PATH_KEYS, "listen_addr", "band_policy"):
        env_value = env.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            merged[key] = json.loads(env_value) if key == "band_policy" else env_value
    merged.update({k: v for k, v in overrides.items() if v is not None})

    unknown = set(merged) - {*_PATH_KEYS, "listen_addr", "band_policy"}
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    band = merged.get("band_policy", BandPolicy())
    if isinstance(band, Mapping):
        try:
            band = BandPolicy(**band)
        except (TypeError, InvalidSpec) as exc:
            raise ConfigInvalid(f"invalid band_policy: {exc}")
    return ServiceConfig(
        data_dir=Path(merged.get("data_dir", "./data")),
        listen_addr=str(merged.get("listen_addr", "127.0.0.1:8321")),
        band_policy=band,
        templates_path=Path(merged["templates_path"]) if merged.get("templates_path") else None,
        rules_path=Path(merged["rules_path"]) if merged.get("rules_path") else None,
        regions_path=Path(merged["regions_path"]) if merged.get("regions_path") else None,
    )


def load_regions(path: str | Path) -> list[dict]:
    """Region config: [{region_id, station_ids}]; order is preserved."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"regions file is not valid JSON: {exc.msg}", line=exc.lineno)
    regions = data.get("regions") if isinstance(data, dict) else data
    if not isinstance(regions, list):
        raise ConfigInvalid('regions file must contain a "regions" array')
    parsed = []
    for index, region in enumerate(regions):
        if "region_id" not in region:
            raise ConfigInvalid(f"region #{index} is missing region_id")
        parsed.append({
            "region_id": str(region["region_id"]),
            "station_ids": [str(s) for s in region.get("station_ids", [])],
        })
    return parsed
