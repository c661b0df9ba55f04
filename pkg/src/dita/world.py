"""Object-type catalog and room presets.

The defaults mirror four household room types with a handful of object
types each. Both tables can be replaced from the run configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigError

HEIGHT_BANDS = ("low", "mid", "high")


@dataclass(frozen=True)
class ObjectType:
    type_id: int
    name: str
    size: float  # meters
    band: str

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigError(f"object type {self.name!r}: size must be > 0")
        if self.band not in HEIGHT_BANDS:
            raise ConfigError(f"object type {self.name!r}: unknown height band {self.band!r}")


@dataclass(frozen=True)
class RoomPreset:
    preset_id: str
    width: int
    height: int
    obstacle_density: float
    pool: tuple[str, ...]
    targets: tuple[str, ...] = ()
    max_instances: int = 2

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ConfigError(f"preset {self.preset_id!r}: width and height must be >= 4")
        if not 0.0 <= self.obstacle_density < 0.5:
            raise ConfigError(f"preset {self.preset_id!r}: obstacle_density must be in [0, 0.5)")
        if self.max_instances < 1:
            raise ConfigError(f"preset {self.preset_id!r}: max_instances must be >= 1")
        if not set(self.targets) <= set(self.pool):
            raise ConfigError(f"preset {self.preset_id!r}: targets must be drawn from the pool")


@dataclass(frozen=True)
class World:
    catalog: tuple[ObjectType, ...]
    presets: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [t.name for t in self.catalog]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate object type names in catalog")
        for i, t in enumerate(self.catalog):
            if t.type_id != i:
                raise ConfigError("catalog type_ids must be 0..N-1 in order")
        for p in self.presets.values():
            for name in p.pool:
                if name not in names:
                    raise ConfigError(f"preset {p.preset_id!r}: unknown object type {name!r}")

    @property
    def n_types(self) -> int:
        return len(self.catalog)

    def type_id(self, name: str) -> int:
        for t in self.catalog:
            if t.name == name:
                return t.type_id
        raise ConfigError(f"unknown object type {name!r}")

    def preset(self, preset_id: str) -> RoomPreset:
        try:
            return self.presets[preset_id]
        except KeyError:
            raise ConfigError(f"unknown room preset {preset_id!r}") from None

    def target_ids(self, preset_id: str) -> list[int]:
        p = self.preset(preset_id)
        names = p.targets or p.pool
        return [self.type_id(n) for n in names]


# name, size (m), height band
_DEFAULT_CATALOG = [
    ("Toaster", 0.30, "mid"),
    ("Mug", 0.20, "mid"),
    ("CoffeeMachine", 0.45, "mid"),
    ("Apple", 0.15, "mid"),
    ("Fridge", 1.00, "mid"),
    ("Television", 0.90, "mid"),
    ("Laptop", 0.40, "mid"),
    ("ArmChair", 0.90, "low"),
    ("Painting", 0.70, "high"),
    ("Sofa", 1.40, "low"),
    ("Pillow", 0.45, "mid"),
    ("AlarmClock", 0.20, "mid"),
    ("Bed", 1.60, "low"),
    ("Mirror", 0.60, "high"),
    ("Towel", 0.40, "mid"),
    ("SoapBar", 0.15, "mid"),
]

_DEFAULT_PRESETS = [
    RoomPreset("kitchen", 10, 10, 0.10,
               ("Toaster", "Mug", "CoffeeMachine", "Apple", "Fridge"),
               ("Toaster", "Mug", "CoffeeMachine")),
    RoomPreset("living", 14, 14, 0.10,
               ("Television", "Laptop", "ArmChair", "Painting", "Sofa"),
               ("Television", "Laptop", "ArmChair")),
    RoomPreset("bedroom", 12, 12, 0.10,
               ("Pillow", "AlarmClock", "Bed", "Laptop", "Painting"),
               ("Pillow", "AlarmClock", "Laptop")),
    RoomPreset("bathroom", 8, 8, 0.08,
               ("Mirror", "Towel", "SoapBar", "Mug"),
               ("Towel", "SoapBar", "Mirror")),
    RoomPreset("open-10x10", 10, 10, 0.0,
               ("Toaster", "Mug", "Television", "Pillow"),
               ("Toaster", "Mug", "Television", "Pillow")),
    RoomPreset("tiny-6x6", 6, 6, 0.12,
               ("Mug", "Laptop", "Towel"),
               ("Mug", "Laptop", "Towel"),
               max_instances=1),
]

TRAIN_PRESETS = ("kitchen", "living", "bedroom", "bathroom")


def make_catalog(entries: Sequence) -> tuple[ObjectType, ...]:
    """Build a catalog from (name, size, band) tuples or dicts, assigning ids in order."""
    out = []
    for i, e in enumerate(entries):
        if isinstance(e, dict):
            unknown = set(e) - {"name", "size", "band"}
            if unknown:
                raise ConfigError(f"catalog entry {i}: unknown field(s) {sorted(unknown)}")
            try:
                name, size, band = e["name"], e["size"], e["band"]
            except KeyError as exc:
                raise ConfigError(f"catalog entry {i}: missing field {exc.args[0]!r}") from None
        else:
            name, size, band = e
        out.append(ObjectType(i, str(name), float(size), str(band)))
    return tuple(out)


def make_preset(entry: dict) -> RoomPreset:
    allowed = {"id", "width", "height", "obstacle_density", "pool", "targets", "max_instances"}
    unknown = set(entry) - allowed
    if unknown:
        raise ConfigError(f"preset entry: unknown field(s) {sorted(unknown)}")
    try:
        return RoomPreset(
            preset_id=str(entry["id"]),
            width=int(entry["width"]),
            height=int(entry["height"]),
            obstacle_density=float(entry.get("obstacle_density", 0.0)),
            pool=tuple(entry["pool"]),
            targets=tuple(entry.get("targets", ())),
            max_instances=int(entry.get("max_instances", 2)),
        )
    except KeyError as exc:
        raise ConfigError(f"preset entry: missing field {exc.args[0]!r}") from None


def default_world() -> World:
    return World(make_catalog(_DEFAULT_CATALOG), {p.preset_id: p for p in _DEFAULT_PRESETS})


def catalog_to_dicts(catalog) -> list[dict]:
    return [{"name": t.name, "size": t.size, "band": t.band} for t in catalog]


def preset_to_dict(p: RoomPreset) -> dict:
    return {
        "id": p.preset_id,
        "width": p.width,
        "height": p.height,
        "obstacle_density": p.obstacle_density,
        "pool": list(p.pool),
        "targets": list(p.targets),
        "max_instances": p.max_instances,
    }
