"""Versioned JSON checkpoints.

Each tensor is stored as ``{"shape": [...], "data": [...]}`` with the flat
values in C order. JSON floats are written with ``repr`` precision, so a
save/load round trip reproduces every float64 exactly on any byte order.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointVersionError, MalformedCheckpointError

FORMAT = "dita-checkpoint"
VERSION = 1


@dataclass
class CheckpointData:
    policy: dict
    judge: dict
    policy_version: int = 0
    judge_version: int = 0
    episodes: int = 0
    judge_frozen: bool = False
    config_text: str = ""
    extra: dict = field(default_factory=dict)


def _encode(params: dict) -> dict:
    return {k: {"shape": list(v.shape), "data": [float(x) for x in np.asarray(v, dtype=float).ravel()]}
            for k, v in sorted(params.items())}


def _decode(blob, where: str) -> dict:
    if not isinstance(blob, dict):
        raise MalformedCheckpointError(f"{where}: expected an object of tensors")
    out = {}
    for k, t in blob.items():
        try:
            shape = tuple(int(s) for s in t["shape"])
            data = np.array(t["data"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCheckpointError(f"{where}.{k}: {exc}") from None
        if data.size != int(np.prod(shape, dtype=int)):
            raise MalformedCheckpointError(f"{where}.{k}: {data.size} values for shape {shape}")
        out[k] = data.reshape(shape)
    return out


def dumps(ck: CheckpointData) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "policy_version": ck.policy_version,
        "judge_version": ck.judge_version,
        "episodes": ck.episodes,
        "judge_frozen": ck.judge_frozen,
        "config": ck.config_text,
        "extra": ck.extra,
        "policy": _encode(ck.policy),
        "judge": _encode(ck.judge),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def loads(text: str) -> CheckpointData:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCheckpointError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedCheckpointError("top level must be an object")
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint {doc.get('format')!r} version {doc.get('version')!r}")
    try:
        return CheckpointData(
            policy=_decode(doc["policy"], "policy"),
            judge=_decode(doc["judge"], "judge"),
            policy_version=int(doc["policy_version"]),
            judge_version=int(doc["judge_version"]),
            episodes=int(doc["episodes"]),
            judge_frozen=bool(doc["judge_frozen"]),
            config_text=str(doc["config"]),
            extra=dict(doc.get("extra", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCheckpointError(f"missing or invalid field: {exc}") from None


def write_checkpoint(ck: CheckpointData, path: str | Path) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps(ck))
    os.replace(tmp, path)
    return path


def read_checkpoint(path: str | Path) -> CheckpointData:
    return loads(Path(path).read_text())
