"""
Observation layout files.

Saved models carry the layout they were trained on so a reader can map a
vector offset back to the sensor that produced it.
"""
from pathlib import Path
from typing import List, NamedTuple

import tomli_w

from ..config.settings import SensorConfig
from .encoder import COLLECT_AUX_WIDTH, HIDE_AUX_WIDTH, RAY_FEATURES, observation_width


class SchemaField(NamedTuple):
    name: str
    offset: int
    width: int


def observation_schema(kind: str, sensors: SensorConfig) -> List[SchemaField]:
    observation_width(kind, sensors)
    fields = []
    offset = 0

    def add(name: str, width: int) -> None:
        nonlocal offset
        fields.append(SchemaField(name, offset, width))
        offset += width

    add("rays", sensors.ray_count * RAY_FEATURES)
    add("health_frac", 1)
    add("ammo_frac", 1)
    add("dir_to_target", 2)
    if kind in ("hide", "curriculum"):
        add("player_sees_agent", 1)
        add("frac_dist_to_block", HIDE_AUX_WIDTH - 1)
    if kind in ("collect", "curriculum"):
        add("dir_to_ammo", 2)
        add("dist_to_ammo", COLLECT_AUX_WIDTH - 2)
    return fields


def write_schema(path: Path, kind: str, sensors: SensorConfig) -> Path:
    fields = observation_schema(kind, sensors)
    document = {
        "kind": kind,
        "width": observation_width(kind, sensors),
        "ray_count": sensors.ray_count,
        "ray_layout": ["distance", "target", "obstacle", "ammo"],
        "fields": [f._asdict() for f in fields],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        tomli_w.dump(document, f)
    return path
