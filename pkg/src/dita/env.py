"""Discrete grid-world environment for object-goal navigation.

Cells are 0.25 m on a side. The agent has a position, a heading in 45 degree
steps and a camera pitch in 30 degree steps. Objects sit on free cells and
block movement; only structural cells (``occupancy``) block line of sight.
Heading 0 points towards -y, heading 90 towards +x.
"""
from __future__ import annotations

import enum
import zlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EpisodeSetupError, InterfaceError
from .world import World, default_world

CELL_SIZE = 0.25
HEADINGS = tuple(range(0, 360, 45))
PITCHES = (-60, -30, 0, 30, 60)


class Action(enum.IntEnum):
    MOVE_AHEAD = 0
    ROTATE_LEFT = 1
    ROTATE_RIGHT = 2
    LOOK_UP = 3
    LOOK_DOWN = 4
    DONE = 5


N_ACTIONS = len(Action)
MOTION_ACTIONS = (Action.MOVE_AHEAD, Action.ROTATE_LEFT, Action.ROTATE_RIGHT,
                  Action.LOOK_UP, Action.LOOK_DOWN)

# heading -> (dx, dy)
_MOVES = {
    0: (0, -1), 45: (1, -1), 90: (1, 0), 135: (1, 1),
    180: (0, 1), 225: (-1, 1), 270: (-1, 0), 315: (-1, -1),
}


@dataclass(frozen=True)
class ObjectInstance:
    type_id: int
    position: tuple[int, int]
    physical_size: float
    height_band: str
    index: int = 0


@dataclass(frozen=True, eq=False)
class GridRoom:
    """Room layout. Equality is identity; use ``same_layout`` to compare contents."""

    width: int
    height: int
    occupancy: np.ndarray  # (height, width) bool, True = blocked
    objects: tuple[ObjectInstance, ...]
    room_preset_id: str
    seed: int
    walkable: np.ndarray = field(init=False, repr=False)
    cache: dict = field(init=False, repr=False, default_factory=dict)  # derived data, never serialized

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        walk = ~occ.copy()
        for obj in self.objects:
            x, y = obj.position
            walk[y, x] = False
        walk.setflags(write=False)
        object.__setattr__(self, "walkable", walk)

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_blocked(self, x: int, y: int) -> bool:
        return not self.in_bounds(x, y) or bool(self.occupancy[y, x])

    def can_enter(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and bool(self.walkable[y, x])

    def instances_of(self, type_id: int) -> list[ObjectInstance]:
        return [o for o in self.objects if o.type_id == type_id]

    def walkable_cells(self) -> list[tuple[int, int]]:
        cells = self.cache.get("walkable_cells")
        if cells is None:
            ys, xs = np.nonzero(self.walkable)
            cells = self.cache["walkable_cells"] = [(int(x), int(y)) for y, x in zip(ys, xs)]
        return cells

    def same_layout(self, other: "GridRoom") -> bool:
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "occupancy": ["".join("#" if c else "." for c in row) for row in self.occupancy],
            "objects": [
                {"type_id": o.type_id, "position": list(o.position), "physical_size": o.physical_size,
                 "height_band": o.height_band, "index": o.index}
                for o in self.objects
            ],
            "room_preset_id": self.room_preset_id,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridRoom":
        occ = np.array([[c == "#" for c in row] for row in d["occupancy"]], dtype=bool)
        objects = tuple(
            ObjectInstance(o["type_id"], tuple(o["position"]), float(o["physical_size"]),
                           o["height_band"], o.get("index", i))
            for i, o in enumerate(d["objects"])
        )
        return cls(int(d["width"]), int(d["height"]), occ, objects, d["room_preset_id"], int(d["seed"]))


@dataclass(frozen=True)
class AgentPose:
    position: tuple[int, int]
    heading: int
    pitch: int = 0


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminated: bool
    success: bool
    collision: bool
    steps_taken: int


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 100
    step_penalty: float = -0.01
    success_reward: float = 5.0
    success_distance: float = 1.5
    target_type: int = 0

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be > 0")
        if self.success_distance <= 0:
            raise ConfigError("success_distance must be > 0")


def distance_m(a: tuple[int, int], b: tuple[int, int]) -> float:
    return CELL_SIZE * float(np.hypot(a[0] - b[0], a[1] - b[1]))


# -- generation ---------------------------------------------------------------

def _components(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y0 in range(h):
        for x0 in range(w):
            if not mask[y0, x0] or seen[y0, x0]:
                continue
            comp = []
            seen[y0, x0] = True
            queue = deque([(x0, y0)])
            while queue:
                x, y = queue.popleft()
                comp.append((x, y))
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((nx, ny))
            comps.append(comp)
    return comps


def _is_connected(mask: np.ndarray) -> bool:
    return len(_components(mask)) == 1


def _obstacles(rng: np.random.Generator, width: int, height: int, density: float) -> np.ndarray:
    blocked = np.zeros((height, width), dtype=bool)
    target = int(round(density * width * height))
    while blocked.sum() < target:
        rw, rh = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        if rng.random() < 0.5:
            rw, rh = rh, rw
        x0, y0 = int(rng.integers(0, width - rw + 1)), int(rng.integers(0, height - rh + 1))
        blocked[y0:y0 + rh, x0:x0 + rw] = True
    # keep only the largest free region
    comps = _components(~blocked)
    largest = max(comps, key=len)
    blocked[:] = True
    for x, y in largest:
        blocked[y, x] = False
    return blocked


def _place_objects(rng, blocked, preset, world) -> list[ObjectInstance] | None:
    h, w = blocked.shape
    walk = ~blocked
    placed: list[ObjectInstance] = []
    for name in preset.pool:
        otype = world.catalog[world.type_id(name)]
        count = int(rng.integers(1, preset.max_instances + 1))
        for _ in range(count):
            cells = [(int(x), int(y)) for y, x in zip(*np.nonzero(walk))]
            # furniture-like placement: prefer cells touching a wall or obstacle
            near = [c for c in cells if any(
                not (0 <= c[0] + dx < w and 0 <= c[1] + dy < h) or blocked[c[1] + dy, c[0] + dx]
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))]
            pool = near if near and rng.random() < 0.8 else cells
            order = rng.permutation(len(pool))
            ok = False
            for k in order[:20]:
                x, y = pool[int(k)]
                walk[y, x] = False
                if walk.sum() >= 2 and _is_connected(walk):
                    placed.append(ObjectInstance(otype.type_id, (x, y), otype.size, otype.band, len(placed)))
                    ok = True
                    break
                walk[y, x] = True
            if not ok and not any(o.type_id == otype.type_id for o in placed):
                return None
    return placed


def generate_room(preset_id: str, seed: int, world: World | None = None) -> GridRoom:
    """Procedurally generate a room; deterministic in (preset_id, seed)."""
    world = world or default_world()
    preset = world.preset(preset_id)
    if not preset.pool:
        raise ConfigError(f"preset {preset_id!r} has an empty object pool")
    key = zlib.crc32(preset_id.encode())
    for attempt in range(200):
        rng = np.random.default_rng([key, int(seed), attempt])
        blocked = _obstacles(rng, preset.width, preset.height, preset.obstacle_density)
        objects = _place_objects(rng, blocked, preset, world)
        if objects is not None:
            return GridRoom(preset.width, preset.height, blocked, tuple(objects), preset_id, int(seed))
    raise ConfigError(f"could not generate a valid room for preset {preset_id!r}")


def check_room(room: GridRoom, world: World | None = None) -> list[str]:
    """Return a list of invariant violations (empty when the room is valid)."""
    problems = []
    if room.width < 4 or room.height < 4:
        problems.append("room smaller than 4x4")
    if room.occupancy.shape != (room.height, room.width):
        problems.append("occupancy shape mismatch")
    if not room.objects:
        problems.append("no objects")
    cells = set()
    for o in room.objects:
        x, y = o.position
        if not room.in_bounds(x, y) or room.occupancy[y, x]:
            problems.append(f"object {o.index} not on a free cell")
        if o.position in cells:
            problems.append(f"object {o.index} shares a cell")
        cells.add(o.position)
        if o.physical_size <= 0:
            problems.append(f"object {o.index} has non-positive size")
        if world is not None and not 0 <= o.type_id < world.n_types:
            problems.append(f"object {o.index} has invalid type id")
    if not room.walkable.any():
        problems.append("no walkable cells")
    elif not _is_connected(room.walkable):
        problems.append("walkable space is not connected")
    return problems


# -- episode dynamics ---------------------------------------------------------

def reset(room: GridRoom, config: EpisodeConfig, seed: int) -> AgentPose:
    """Sample a start pose uniformly over walkable cells x headings, pitch 0."""
    if not room.instances_of(config.target_type):
        raise EpisodeSetupError(f"target type {config.target_type} not present in room")
    cells = room.walkable_cells()
    if not cells:
        raise EpisodeSetupError("room has no walkable cells")
    rng = np.random.default_rng(int(seed))
    k = int(rng.integers(len(cells) * len(HEADINGS)))
    cell, heading = cells[k // len(HEADINGS)], HEADINGS[k % len(HEADINGS)]
    return AgentPose(cell, heading, 0)


def success_check(pose: AgentPose, target_instance: ObjectInstance, detections, config: EpisodeConfig) -> bool:
    """Target within ``success_distance`` and this very instance in the current frame."""
    if distance_m(pose.position, target_instance.position) >= config.success_distance:
        return False
    return any(d.type_id == target_instance.type_id and d.instance_index == target_instance.index
               for d in detections)


def is_success_pose(room: GridRoom, pose: AgentPose, detections, config: EpisodeConfig) -> bool:
    return any(success_check(pose, inst, detections, config)
               for inst in room.instances_of(config.target_type))


def apply_motion(room: GridRoom, pose: AgentPose, action: int) -> tuple[AgentPose, bool]:
    """Pose after a non-Done action and whether the move collided."""
    if action == Action.MOVE_AHEAD:
        dx, dy = _MOVES[pose.heading]
        x, y = pose.position[0] + dx, pose.position[1] + dy
        if room.can_enter(x, y):
            return AgentPose((x, y), pose.heading, pose.pitch), False
        return pose, True
    if action == Action.ROTATE_LEFT:
        return AgentPose(pose.position, (pose.heading - 45) % 360, pose.pitch), False
    if action == Action.ROTATE_RIGHT:
        return AgentPose(pose.position, (pose.heading + 45) % 360, pose.pitch), False
    if action == Action.LOOK_UP:
        return AgentPose(pose.position, pose.heading, min(60, pose.pitch + 30)), False
    if action == Action.LOOK_DOWN:
        return AgentPose(pose.position, pose.heading, max(-60, pose.pitch - 30)), False
    raise InterfaceError(f"not a motion action: {action!r}")


def step(room: GridRoom, pose: AgentPose, config: EpisodeConfig, action: int, detections,
         steps_taken: int = 0) -> tuple[AgentPose, StepOutcome]:
    """Apply one action. ``detections`` must describe the frame seen from ``pose``."""
    try:
        action = Action(action)
    except ValueError:
        raise InterfaceError(f"unknown action {action!r}") from None
    steps = steps_taken + 1
    if action == Action.DONE:
        success = is_success_pose(room, pose, detections, config)
        reward = config.success_reward + config.step_penalty if success else config.step_penalty
        return pose, StepOutcome(reward, True, success, False, steps)
    new_pose, collision = apply_motion(room, pose, action)
    terminated = steps >= config.max_steps
    return new_pose, StepOutcome(config.step_penalty, terminated, False, collision, steps)
