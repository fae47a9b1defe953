"""Synthetic labelled skeleton motion with a known dynamic/static region split."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import SkeletonSequence, coco17_topology, full_sequence
from .nn import rng

# image-normalized rest pose (x right, y down)
REST_POSE = np.array([
    [0.50, 0.20], [0.52, 0.18], [0.48, 0.18], [0.54, 0.19], [0.46, 0.19],
    [0.58, 0.30], [0.42, 0.30], [0.62, 0.42], [0.38, 0.42], [0.64, 0.53],
    [0.36, 0.53], [0.55, 0.55], [0.45, 0.55], [0.56, 0.70], [0.44, 0.70],
    [0.56, 0.85], [0.44, 0.85],
])

# distal joints swing further than proximal ones
_JOINT_GAIN = np.array([1.0, 1.0, 1.0, 1.0, 1.0,
                        0.4, 0.4, 0.7, 0.7, 1.0, 1.0,
                        0.4, 0.4, 0.7, 0.7, 1.0, 1.0])

_REGION_PAIRS = list(itertools.combinations(range(5), 2))


@dataclass(frozen=True)
class ClassSignature:
    cycles: tuple  # oscillation cycles per sequence, one per region
    amplitude: tuple  # per region, normalized units
    drift: tuple  # (dx, dy) per frame

    def key(self):
        return (tuple(np.round(self.cycles, 12)), tuple(np.round(self.amplitude, 12)),
                tuple(np.round(self.drift, 12)))


def default_signature(c: int) -> ClassSignature:
    dominant = _REGION_PAIRS[(3 * c) % len(_REGION_PAIRS)]
    amp = [0.012] * 5
    for j in dominant:
        amp[j] = 0.06
    cycles = [1.0 + 0.5 * ((c + j) % 4) for j in range(5)]
    drift = (0.002 * ((c % 3) - 1), 0.0)
    return ClassSignature(tuple(cycles), tuple(amp), drift)


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    per_class: int = 50
    T: int = 16
    seed: int = 0
    noise: float = 0.01
    signatures: tuple | None = None

    def __post_init__(self):
        if self.T < 8:
            raise ValueError("synthetic sequences need T >= 8")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        sigs = self.resolved_signatures()
        if len(sigs) != self.num_classes:
            raise ValueError("one signature per class is required")
        keys = [s.key() for s in sigs]
        if len(set(keys)) != len(keys):
            raise ValueError("class signatures must be pairwise distinct")

    def resolved_signatures(self) -> tuple:
        if self.signatures is not None:
            return tuple(self.signatures)
        return tuple(default_signature(c) for c in range(self.num_classes))


def generate_sequence(sig: ClassSignature, T: int, gen: np.random.Generator, noise: float) -> np.ndarray:
    regions = coco17_topology().region_of()
    t = np.arange(T, dtype=np.float64)
    phase = gen.uniform(0.0, 2.0 * np.pi, size=5)
    jitter = gen.uniform(0.85, 1.15, size=5)
    offset = gen.uniform(-0.03, 0.03, size=2)
    frames = np.broadcast_to(REST_POSE, (T, 17, 2)).copy()
    for j in range(5):
        omega = 2.0 * np.pi * sig.cycles[j] / T
        a = sig.amplitude[j] * jitter[j]
        arg = omega * t + phase[j]
        joints = regions == j
        gain = _JOINT_GAIN[joints]
        frames[:, joints, 0] += a * np.sin(arg)[:, None] * gain
        frames[:, joints, 1] += 0.6 * a * np.cos(arg)[:, None] * gain
    frames += np.asarray(sig.drift)[None, None, :] * t[:, None, None]
    frames += offset
    frames += gen.normal(0.0, noise, size=frames.shape)
    return frames


def gen_synth(spec: SynthSpec) -> tuple[list[SkeletonSequence], list[SkeletonSequence]]:
    """Return (train, val); the first round(0.8 n) sequences of each class train."""
    sigs = spec.resolved_signatures()
    n_train = int(round(0.8 * spec.per_class))
    train, val = [], []
    for i in range(spec.per_class):
        for c in range(spec.num_classes):
            gen = rng(spec.seed, "synth", c, i)
            frames = generate_sequence(sigs[c], spec.T, gen, spec.noise)
            seq = full_sequence(frames, id=f"c{c}_{i:04d}", label=c)
            (train if i < n_train else val).append(seq)
    return train, val
