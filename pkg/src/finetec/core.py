"""Skeleton sequences, COCO-17 topology, and the JSONL sequence format."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

NUM_JOINTS = 17
MIN_FRAMES = 3

JOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
REGION_NAMES = ("head", "left_arm", "right_arm", "left_leg", "right_leg")

# (parent, child); rooted at the nose, shoulders and hips hang off the head chain
_COCO17_EDGES = (
    (0, 1), (0, 2), (1, 3), (2, 4),
    (0, 5), (0, 6), (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 11), (6, 12), (11, 13), (13, 15), (12, 14), (14, 16),
)
_COCO17_REGIONS = (
    (0, 1, 2, 3, 4),
    (5, 7, 9),
    (6, 8, 10),
    (11, 13, 15),
    (12, 14, 16),
)
# left/right mirror pairs, used by horizontal flips
FLIP_PERM = (0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15)


class SequenceError(ValueError):
    """A sequence or sequence file violates the data contract."""


@dataclass(frozen=True)
class SkeletonTopology:
    edges: tuple[tuple[int, int], ...]
    regions: tuple[tuple[int, ...], ...]

    @property
    def num_joints(self) -> int:
        return 1 + max(max(e) for e in self.edges)

    def region_of(self) -> np.ndarray:
        """Region index for every joint."""
        out = np.full(self.num_joints, -1, dtype=np.int64)
        for j, members in enumerate(self.regions):
            out[list(members)] = j
        return out

    def adjacency(self) -> np.ndarray:
        n = self.num_joints
        a = np.zeros((n, n))
        for p, c in self.edges:
            a[p, c] = a[c, p] = 1.0
        return a


_TOPOLOGY = SkeletonTopology(edges=_COCO17_EDGES, regions=_COCO17_REGIONS)


def coco17_topology() -> SkeletonTopology:
    return _TOPOLOGY


@dataclass(frozen=True)
class LabelSpace:
    num_classes: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("a label space needs at least 2 classes")
        if self.names is not None and len(self.names) != self.num_classes:
            raise ValueError("names must have one entry per class")


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """T x K x 2 joint coordinates with a per-frame validity mask.

    Invalid frames are all-zero. Arrays are made read-only on construction.
    """

    frames: np.ndarray
    valid: np.ndarray
    id: str = ""
    label: int | None = None

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, 2):
            raise SequenceError(f"frames: expected shape (T, {NUM_JOINTS}, 2), got {frames.shape}")
        if frames.shape[0] < MIN_FRAMES:
            raise SequenceError(f"frames: T={frames.shape[0]} is below the minimum of {MIN_FRAMES}")
        if valid.shape != (frames.shape[0],):
            raise SequenceError(f"valid: expected length {frames.shape[0]}, got shape {valid.shape}")
        if not np.all(np.isfinite(frames)):
            raise SequenceError("frames: non-finite coordinate")
        if np.any(frames[~valid] != 0.0):
            raise SequenceError("frames: invalid frame carries nonzero coordinates")
        if self.label is not None and (not isinstance(self.label, (int, np.integer)) or self.label < 0):
            raise SequenceError(f"label: expected a non-negative int, got {self.label!r}")
        frames.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "valid", valid)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def K(self) -> int:
        return self.frames.shape[1]

    @property
    def num_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid.all())

    def with_frames(self, frames: np.ndarray, valid: np.ndarray | None = None, **changes) -> "SkeletonSequence":
        if valid is None:
            valid = self.valid
        frames = np.where(np.asarray(valid, dtype=bool)[:, None, None], frames, 0.0)
        return replace(self, frames=frames, valid=valid, **changes)

    def equals(self, other: "SkeletonSequence") -> bool:
        return (self.id == other.id and self.label == other.label
                and np.array_equal(self.frames, other.frames)
                and np.array_equal(self.valid, other.valid))


def full_sequence(frames, id: str = "", label: int | None = None) -> SkeletonSequence:
    frames = np.asarray(frames, dtype=np.float64)
    return SkeletonSequence(frames, np.ones(frames.shape[0], dtype=bool), id=id, label=label)


def require_valid(seq: SkeletonSequence, what: str = "sequence") -> None:
    if not seq.fully_valid:
        raise SequenceError(f"{what} {seq.id!r} has {seq.T - seq.num_valid} invalid frames")


# ------------------------------------------------------------------ JSONL I/O

def _to_record(seq: SkeletonSequence) -> dict:
    return {
        "id": seq.id,
        "label": seq.label,
        "T": seq.T,
        "K": seq.K,
        "frames": seq.frames.tolist(),
        "valid": [bool(v) for v in seq.valid],
    }


def _from_record(rec: dict, lineno: int) -> SkeletonSequence:
    if not isinstance(rec, dict):
        raise SequenceError(f"line {lineno}: expected a JSON object")
    for key in ("id", "label", "T", "K", "frames", "valid"):
        if key not in rec:
            raise SequenceError(f"line {lineno}: missing field {key!r}")
    if rec["K"] != NUM_JOINTS:
        raise SequenceError(f"line {lineno}: K must be {NUM_JOINTS}, got {rec['K']}")
    try:
        frames = np.asarray(rec["frames"], dtype=np.float64)
    except (TypeError, ValueError):
        raise SequenceError(f"line {lineno}: frames must be a T x K x 2 array of numbers") from None
    if frames.shape[:1] != (rec["T"],):
        raise SequenceError(f"line {lineno}: T={rec['T']} disagrees with {frames.shape[0]} frames")
    label = rec["label"]
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise SequenceError(f"line {lineno}: label must be an int or null")
    try:
        return SkeletonSequence(frames, np.asarray(rec["valid"], dtype=bool), id=str(rec["id"]), label=label)
    except (SequenceError, ValueError) as exc:
        raise SequenceError(f"line {lineno}: {exc}") from None


def read_sequences(path) -> list[SkeletonSequence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SequenceError(f"line {lineno}: parse error: {exc.msg}") from None
            out.append(_from_record(rec, lineno))
    return out


def write_sequences(seqs: Iterable[SkeletonSequence], path) -> None:
    # repr-based float formatting in json round-trips float64 exactly
    lines = [json.dumps(_to_record(s), separators=(",", ":")) + "\n" for s in seqs]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    os.replace(tmp, path)


def stack_frames(seqs: list[SkeletonSequence]) -> np.ndarray:
    return np.stack([s.frames for s in seqs])
