"""Synthetic object detection and the per-frame feature tables built from it.

Detections are derived from geometry: a 90 degree field of view, a 5 m range,
grid line-of-sight, and a pitch-dependent height band. The bounding-box area
``min(1, (size / distance)**2)`` is the only depth cue the agent receives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import CELL_SIZE, AgentPose, GridRoom
from .errors import DomainError

FRAME = 300.0
HALF_FOV = 45.0
VIEW_RANGE = 5.0
LOW_CLOSE_RANGE = 2.0  # low objects are visible at level pitch only this close
ROW_FIELDS = ("b", "x_c", "y_c", "bbx", "cs")
_BAND_LEVEL = {"low": -1, "mid": 0, "high": 1}


@dataclass(frozen=True)
class Detection:
    type_id: int
    instance_index: int
    x_c: float
    y_c: float
    bbx_area: float
    distance: float  # simulator-internal


@dataclass(frozen=True)
class DetectionRow:
    b: int
    x_c: float
    y_c: float
    bbx: float
    cs: float

    def as_array(self) -> np.ndarray:
        return np.array([self.b, self.x_c, self.y_c, self.bbx, self.cs], dtype=float)


@dataclass(frozen=True)
class TypeEmbedding:
    type_id: int
    vector: np.ndarray


def band_visible(band: str, pitch: int, distance: float) -> bool:
    if pitch >= 60:
        return band == "high"
    if pitch >= 30:
        return band in ("high", "mid")
    if pitch == 0:
        return band == "mid" or (band == "low" and distance <= LOW_CLOSE_RANGE)
    if pitch >= -30:
        return band in ("mid", "low")
    return band == "low"


def _line_clear(room: GridRoom, a: tuple[int, int], b: tuple[int, int]) -> bool:
    """Sample the segment between cell centers; any blocked cell strictly between occludes."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = 8 * max(abs(dx), abs(dy))
    if n <= 8:
        return True  # neighbouring cells
    t = np.arange(1, n) / n
    cx = np.floor(a[0] + t * dx + 0.5).astype(int)
    cy = np.floor(a[1] + t * dy + 0.5).astype(int)
    return not room.occupancy[cy, cx].any()


def _sightlines(room: GridRoom, cell: tuple[int, int]):
    """(object, distance, absolute bearing) for every object in range with clear sight."""
    per_room = room.cache.setdefault("sightlines", {})
    lines = per_room.get(cell)
    if lines is None:
        lines = []
        for obj in room.objects:
            dx, dy = obj.position[0] - cell[0], obj.position[1] - cell[1]
            dist = CELL_SIZE * math.hypot(dx, dy)
            if dist > VIEW_RANGE or dist == 0.0:
                continue
            if not _line_clear(room, cell, obj.position):
                continue
            bearing = math.degrees(math.atan2(dx, -dy)) % 360.0
            lines.append((obj, dist, bearing))
        per_room[cell] = lines
    return lines


def detect(room: GridRoom, pose: AgentPose) -> list[Detection]:
    """Ground-truth style detections for the frame seen from ``pose``."""
    out = []
    for obj, dist, bearing in _sightlines(room, pose.position):
        rel = (bearing - pose.heading + 180.0) % 360.0 - 180.0
        if abs(rel) > HALF_FOV:
            continue
        if not band_visible(obj.height_band, pose.pitch, dist):
            continue
        area = min(1.0, (obj.physical_size / dist) ** 2)
        x_c = 150.0 * (1.0 + rel / HALF_FOV)
        y_c = min(FRAME, max(0.0, 150.0 - 75.0 * (_BAND_LEVEL[obj.height_band] - pose.pitch / 30.0)))
        out.append(Detection(obj.type_id, obj.index, x_c, y_c, area, dist))
    return out


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def type_embedding(type_id: int, d_emb: int = 16, embedding_seed: int = 0) -> TypeEmbedding:
    """Deterministic unit-norm pseudo word vector for an object type."""
    if d_emb < 2:
        raise DomainError("d_emb must be >= 2")
    rng = np.random.default_rng([int(embedding_seed), int(type_id), 0xE3B])
    v = rng.standard_normal(d_emb)
    return TypeEmbedding(int(type_id), v / np.linalg.norm(v))


class Embeddings:
    """Type embeddings, their pairwise cosine similarities and the scene projection."""

    def __init__(self, n_types: int, d_emb: int = 16, seed: int = 0, scene_dim: int = 64):
        self.n_types = n_types
        self.d_emb = d_emb
        self.seed = seed
        self.scene_dim = scene_dim
        self.vectors = np.stack([type_embedding(i, d_emb, seed).vector for i in range(n_types)])
        self.cs = np.array([[cosine_similarity(a, b) for b in self.vectors] for a in self.vectors])
        np.fill_diagonal(self.cs, 1.0)
        rng = np.random.default_rng([int(seed), 0x5CE7E])
        n_in = n_types * len(ROW_FIELDS)
        self.projection = rng.standard_normal((scene_dim, n_in)) / math.sqrt(n_in)

    def __getitem__(self, type_id: int) -> np.ndarray:
        return self.vectors[type_id]


class ContextMatrix:
    """One detection row ``(b, x_c, y_c, bbx, cs)`` per object type."""

    __slots__ = ("rows",)

    def __init__(self, rows: np.ndarray):
        self.rows = rows

    def __len__(self):
        return len(self.rows)

    def row(self, type_id: int) -> DetectionRow:
        b, x, y, a, cs = self.rows[type_id]
        return DetectionRow(int(b), float(x), float(y), float(a), float(cs))

    def visible(self) -> np.ndarray:
        return self.rows[:, 0].copy()


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Network-facing scaling of detection rows: coordinates to [0, 1], sqrt of area.

    sqrt(area) is the apparent linear size, i.e. proportional to size / distance.
    """
    f = np.array(rows, dtype=float, copy=True)
    f[..., 1] /= FRAME
    f[..., 2] /= FRAME
    f[..., 3] = np.sqrt(f[..., 3])
    return f


def build_context_matrix(detections, target_type: int, embeddings: Embeddings) -> ContextMatrix:
    rows = np.zeros((embeddings.n_types, 5))
    rows[:, 4] = embeddings.cs[:, target_type]
    rows[target_type, 4] = 1.0
    for det in detections:
        r = rows[det.type_id]
        # several instances of one type: keep the largest box
        if r[0] == 0.0 or det.bbx_area > r[3]:
            r[0], r[1], r[2], r[3] = 1.0, det.x_c, det.y_c, det.bbx_area
    return ContextMatrix(rows)


@dataclass(frozen=True, eq=False)
class StateEmb:
    scene_emb: np.ndarray
    tag_vec: np.ndarray  # target row: b, x_c, y_c, bbx, cs
    target_emb: np.ndarray
    effective: bool

    @property
    def dim(self) -> int:
        return len(self.scene_emb) + len(self.tag_vec) + len(self.target_emb)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.scene_emb, self.tag_vec, self.target_emb])


def build_state_emb(context: ContextMatrix, detections, target_type: int, embeddings: Embeddings) -> StateEmb:
    scene = embeddings.projection @ normalize_rows(context.rows).ravel()
    tag = context.rows[target_type].copy()
    return StateEmb(scene, tag, embeddings[target_type].copy(), bool(tag[0] == 1.0))
