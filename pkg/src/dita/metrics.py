"""Success rate, SPL, the long-episode split, optimal episode lengths and EMA smoothing.

Episode lengths are counted in actions, Done included.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

from .env import HEADINGS, distance_m, MOTION_ACTIONS, PITCHES, AgentPose, EpisodeConfig, GridRoom, apply_motion, is_success_pose
from .errors import ContractError, DomainError
from .perception import detect

log = logging.getLogger(__name__)

LONG_EPISODE = 5


@dataclass(frozen=True)
class EpisodeRecord:
    success: bool
    actions_taken: int
    optimal_actions: int | None  # None: target unreachable
    room_id: str = ""
    target_type: int = -1
    seed: int = 0


@dataclass
class MetricsReport:
    sr: float
    spl: float
    n: int
    excluded: int = 0
    empty: bool = False
    sub: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sub"] = {k: v.to_dict() for k, v in self.sub.items()}
        return d

    def csv_rows(self) -> list[dict]:
        reports = self.sub or {"all": self}
        return [{"filter": k, "n": r.n, "sr": r.sr, "spl": r.spl} for k, r in reports.items()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["filter", "n", "sr", "spl"], lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow(row)
        return buf.getvalue()


def goal_poses(room: GridRoom, target_type: int, config: EpisodeConfig) -> frozenset:
    """All poses from which Done would succeed."""
    per_room = room.cache.setdefault("goals", {})
    key = (target_type, config.success_distance)
    if key not in per_room:
        cfg = EpisodeConfig(max_steps=config.max_steps, success_distance=config.success_distance,
                            target_type=target_type)
        targets = room.instances_of(target_type)
        goals = set()
        for cell in room.walkable_cells():
            # the distance test is necessary for success and cheap
            if not any(distance_m(cell, t.position) < config.success_distance for t in targets):
                continue
            for h in HEADINGS:
                for p in PITCHES:
                    pose = AgentPose(cell, h, p)
                    if is_success_pose(room, pose, detect(room, pose), cfg):
                        goals.add(pose)
        per_room[key] = frozenset(goals)
    return per_room[key]


def optimal_episode_length(room: GridRoom, start_pose: AgentPose, target_type: int,
                           config: EpisodeConfig) -> int | None:
    """Fewest actions (final Done included) to succeed from ``start_pose``; None if unreachable."""
    goals = goal_poses(room, target_type, config)
    if not goals:
        return None
    if start_pose in goals:
        return 1
    seen = {start_pose}
    frontier = deque([(start_pose, 0)])
    while frontier:
        pose, d = frontier.popleft()
        for a in MOTION_ACTIONS:
            nxt, _ = apply_motion(room, pose, a)
            if nxt in seen:
                continue
            if nxt in goals:
                return d + 2
            seen.add(nxt)
            frontier.append((nxt, d + 1))
    return None


def success_rate(records) -> float:
    if not records:
        raise ContractError("success rate of an empty record set")
    return sum(1 for r in records if r.success) / len(records)


def _spl(records) -> tuple[float, int]:
    usable = [r for r in records if r.optimal_actions is not None]
    excluded = len(records) - len(usable)
    if excluded:
        log.warning("%d record(s) with unreachable target excluded from SPL", excluded)
    if not usable:
        return 0.0, excluded
    total = sum(r.optimal_actions / max(r.actions_taken, r.optimal_actions) for r in usable if r.success)
    return total / len(usable), excluded


def spl(records) -> float:
    if not records:
        raise ContractError("SPL of an empty record set")
    return _spl(records)[0]


def report(records) -> MetricsReport:
    if not records:
        return MetricsReport(0.0, 0.0, 0, empty=True)
    value, excluded = _spl(records)
    return MetricsReport(success_rate(records), value, len(records), excluded)


def split_report(records, length_threshold: int = LONG_EPISODE) -> MetricsReport:
    if not records:
        raise ContractError("no records to report")
    top = report(records)
    longs = [r for r in records if r.optimal_actions is not None and r.optimal_actions >= length_threshold]
    top.sub = {"all": report(records), f"L>={length_threshold}": report(longs)}
    return top


def ema_smooth(series, beta: float = 0.8) -> list[float]:
    if not 0.0 <= beta < 1.0:
        raise DomainError("beta must lie in [0, 1)")
    out = []
    for i, x in enumerate(series):
        out.append(float(x) if i == 0 else beta * out[-1] + (1.0 - beta) * float(x))
    return out
