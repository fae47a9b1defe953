"""Motion-intensity scoring, dynamic/static region split, augmentation and fusion.

Augmentation primitives that "remove" coordinates (axis masking, joint-frame
dropout) collapse them onto the per-frame skeleton centroid rather than the
image origin, so a masked joint stays on the body instead of jumping to (0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complete import resample
from .core import FLIP_PERM, SkeletonSequence, SkeletonTopology, coco17_topology, full_sequence, require_valid
from .nn import rng

STRONG_PRIMITIVES = (
    "temporal_crop", "frame_drop", "time_warp", "gaussian_noise",
    "axis_mask", "bone_rescale", "time_flip", "joint_dropout",
)


@dataclass(frozen=True)
class MotionProfile:
    per_joint: np.ndarray
    per_region: np.ndarray


@dataclass(frozen=True)
class RegionSplit:
    dynamic: tuple
    static: tuple


@dataclass(frozen=True)
class AugmentSpec:
    strength: str = "strong"
    seed: int = 0
    p_strong: float = 0.5
    weak_crop_p: float = 1.0
    weak_flip_p: float = 0.5
    strong_crop: tuple = (0.6, 1.0)
    weak_crop: tuple = (0.9, 1.0)
    frame_drop_p: float = 0.1
    noise_scale: float = 0.02
    axis_mask_p: float = 0.2
    bone_scale: tuple = (0.9, 1.1)
    dropout_p: float = 0.05
    time_warp: tuple = (0.8, 1.25)

    def __post_init__(self):
        if self.strength not in ("strong", "weak"):
            raise ValueError(f"unknown augmentation strength {self.strength!r}")

    def disabled(self) -> "AugmentSpec":
        return AugmentSpec(self.strength, self.seed, p_strong=0.0, weak_crop_p=0.0, weak_flip_p=0.0)


@dataclass(frozen=True)
class DecompositionResult:
    base: SkeletonSequence
    dyna: SkeletonSequence
    stat: SkeletonSequence
    pred: SkeletonSequence
    split: RegionSplit
    profile: MotionProfile


def motion_profile(s_base: SkeletonSequence, topo: SkeletonTopology | None = None) -> MotionProfile:
    require_valid(s_base)
    topo = topo or coco17_topology()
    steps = np.linalg.norm(np.diff(s_base.frames, axis=0), axis=-1)
    per_joint = steps.mean(axis=0)
    per_region = np.array([per_joint[list(g)].mean() for g in topo.regions])
    return MotionProfile(per_joint, per_region)


def split_regions(profile: MotionProfile) -> RegionSplit:
    order = np.argsort(-np.asarray(profile.per_region), kind="stable")
    return RegionSplit(dynamic=tuple(sorted(int(j) for j in order[:2])),
                       static=tuple(sorted(int(j) for j in order[2:])))


# ------------------------------------------------------------- primitives

def temporal_crop(frames, ratio: float, gen) -> np.ndarray:
    T = frames.shape[0]
    length = max(3, int(round(ratio * T)))
    start = int(gen.integers(0, T - length + 1))
    return resample(frames[start:start + length], T)


def frame_drop_fill(frames, p: float, gen) -> np.ndarray:
    T = frames.shape[0]
    keep = gen.random(T) >= p
    if not keep.any():
        keep[int(gen.integers(T))] = True
    idx = np.flatnonzero(keep)
    t = np.arange(T)
    pos = np.clip(np.searchsorted(idx, t), 0, idx.size - 1)
    left = idx[np.maximum(pos - 1, 0)]
    right = idx[pos]
    nearest = np.where(np.abs(t - left) <= np.abs(right - t), left, right)
    return frames[nearest]


def time_warp(frames, gamma: float) -> np.ndarray:
    T = frames.shape[0]
    u = np.linspace(0.0, 1.0, T) ** gamma * (T - 1)
    lo = np.floor(u).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    w = (u - lo)[:, None, None]
    return frames[lo] * (1.0 - w) + frames[hi] * w


def bbox_diag(frames) -> float:
    pts = frames.reshape(-1, 2)
    span = pts.max(axis=0) - pts.min(axis=0)
    return float(np.hypot(*span))


def axis_mask(frames, p: float, gen) -> np.ndarray:
    axis = int(gen.integers(2))
    hit = gen.random(frames.shape[1]) < p
    out = frames.copy()
    centroid = frames.mean(axis=1)
    out[:, hit, axis] = centroid[:, None, axis]
    return out


def bone_rescale(frames, topo: SkeletonTopology, low: float, high: float, gen) -> np.ndarray:
    out = frames.copy()
    for parent, child in topo.edges:  # edges are listed parent-before-child
        f = gen.uniform(low, high)
        out[:, child] = out[:, parent] + f * (frames[:, child] - frames[:, parent])
    return out


def joint_dropout(frames, p: float, gen) -> np.ndarray:
    hit = gen.random(frames.shape[:2]) < p
    centroid = np.broadcast_to(frames.mean(axis=1, keepdims=True), frames.shape)
    return np.where(hit[..., None], centroid, frames)


def horizontal_flip(frames) -> np.ndarray:
    xs = frames[..., 0]
    mid = 0.5 * (xs.min() + xs.max())
    out = frames[:, list(FLIP_PERM)].copy()
    out[..., 0] = 2.0 * mid - out[..., 0]
    return out


def augment(seq: SkeletonSequence, spec: AugmentSpec, topo: SkeletonTopology | None = None,
            stream=()) -> SkeletonSequence:
    require_valid(seq)
    topo = topo or coco17_topology()
    gen = rng(spec.seed, "augment", spec.strength, *stream)
    x = seq.frames.copy()
    if spec.strength == "weak":
        if gen.random() < spec.weak_crop_p:
            x = temporal_crop(x, gen.uniform(*spec.weak_crop), gen)
        if gen.random() < spec.weak_flip_p:
            x = horizontal_flip(x)
        return full_sequence(x, id=seq.id, label=seq.label)

    on = gen.random(len(STRONG_PRIMITIVES)) < spec.p_strong
    for name, enabled in zip(STRONG_PRIMITIVES, on):
        if not enabled:
            continue
        if name == "temporal_crop":
            x = temporal_crop(x, gen.uniform(*spec.strong_crop), gen)
        elif name == "frame_drop":
            x = frame_drop_fill(x, spec.frame_drop_p, gen)
        elif name == "time_warp":
            x = time_warp(x, np.exp(gen.uniform(np.log(spec.time_warp[0]), np.log(spec.time_warp[1]))))
        elif name == "gaussian_noise":
            x = x + gen.normal(0.0, spec.noise_scale * bbox_diag(x), size=x.shape)
        elif name == "axis_mask":
            x = axis_mask(x, spec.axis_mask_p, gen)
        elif name == "bone_rescale":
            x = bone_rescale(x, topo, *spec.bone_scale, gen)
        elif name == "time_flip":
            x = x[::-1].copy()
        else:
            x = joint_dropout(x, spec.dropout_p, gen)
    if x.shape[0] != seq.T:
        x = resample(x, seq.T)
    return full_sequence(x, id=seq.id, label=seq.label)


def replace_regions(base: SkeletonSequence, donor: SkeletonSequence, regions, topo: SkeletonTopology):
    joints = [i for j in regions for i in topo.regions[j]]
    frames = base.frames.copy()
    frames[:, joints] = donor.frames[:, joints]
    return full_sequence(frames, id=base.id, label=base.label)


def decompose(s_base: SkeletonSequence, topo: SkeletonTopology | None = None, seed: int = 0,
              strong: AugmentSpec | None = None, weak: AugmentSpec | None = None,
              stream=()) -> DecompositionResult:
    """Split into dynamic/static regions, augment each, fuse by averaging."""
    require_valid(s_base)
    topo = topo or coco17_topology()
    strong = strong or AugmentSpec("strong", seed)
    weak = weak or AugmentSpec("weak", seed)
    profile = motion_profile(s_base, topo)
    split = split_regions(profile)
    dyna = replace_regions(s_base, augment(s_base, strong, topo, stream), split.dynamic, topo)
    stat = replace_regions(s_base, augment(s_base, weak, topo, stream), split.static, topo)
    pred = full_sequence((s_base.frames + dyna.frames + stat.frames) / 3.0, id=s_base.id, label=s_base.label)
    return DecompositionResult(s_base, dyna, stat, pred, split, profile)
