"""Temporal corruption and the spatial/temporal robustness perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MIN_FRAMES, SequenceError, SkeletonSequence, require_valid
from .nn import rng

CORRUPTION_MODES = ("random", "block_prefix", "block_suffix", "block_middle")
SEVERITY_RATES = {"minor": 0.25, "moderate": 0.50, "severe": 0.75}

NOISE_SCALE = {"low": 0.01, "high": 0.05}
DROP_RATE = {"low": 0.25, "high": 0.50}


@dataclass(frozen=True)
class CorruptionSpec:
    drop_rate: float
    mode: str = "random"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.drop_rate < 1.0:
            raise ValueError(f"drop_rate must lie in (0, 1), got {self.drop_rate}")
        if self.mode not in CORRUPTION_MODES:
            raise ValueError(f"unknown corruption mode {self.mode!r}")


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    severity: str = "low"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("spatial_gaussian", "temporal_drop"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.severity not in ("low", "high"):
            raise ValueError(f"unknown severity {self.severity!r}")


def drop_count(rate: float, T: int) -> int:
    """round(rate * T), ties to even (Python's round)."""
    return int(round(rate * T))


def block_start(kind: str, n_drop: int, T: int) -> int:
    if kind in ("block_prefix", "prefix"):
        return 0
    if kind in ("block_suffix", "suffix"):
        return T - n_drop
    return (T - n_drop) // 2


def drop_mask(T: int, rate: float, mode: str, gen: np.random.Generator) -> np.ndarray:
    """Boolean mask, True where a frame is dropped."""
    n_drop = drop_count(rate, T)
    if T - n_drop < MIN_FRAMES:
        raise SequenceError(f"dropping {n_drop} of {T} frames leaves fewer than {MIN_FRAMES} valid")
    dropped = np.zeros(T, dtype=bool)
    if mode == "random":
        dropped[gen.choice(T, size=n_drop, replace=False)] = True
    else:
        start = block_start(mode, n_drop, T)
        dropped[start:start + n_drop] = True
    return dropped


def corrupt(seq: SkeletonSequence, spec: CorruptionSpec, stream=()) -> SkeletonSequence:
    """Zero out ``round(rate * T)`` frames in place and flag them invalid.

    ``stream`` extends the seed path so many sequences can share one spec
    while drawing independent patterns.
    """
    require_valid(seq)
    gen = rng(spec.seed, "corrupt", *stream)
    dropped = drop_mask(seq.T, spec.drop_rate, spec.mode, gen)
    return seq.with_frames(seq.frames, ~dropped)


def bbox_diagonal(seq: SkeletonSequence) -> float:
    pts = seq.frames[seq.valid].reshape(-1, 2)
    if pts.size == 0:
        return 0.0
    span = pts.max(axis=0) - pts.min(axis=0)
    return float(np.hypot(span[0], span[1]))


def perturb(seq: SkeletonSequence, spec: PerturbationSpec, stream=()) -> SkeletonSequence:
    if spec.kind == "temporal_drop":
        return corrupt(seq, CorruptionSpec(DROP_RATE[spec.severity], "random", spec.seed), stream)
    sigma = NOISE_SCALE[spec.severity] * bbox_diagonal(seq)
    if sigma == 0.0:
        return seq
    gen = rng(spec.seed, "perturb", *stream)
    noise = gen.normal(0.0, sigma, size=seq.frames.shape)
    return seq.with_frames(seq.frames + noise)


def corrupt_all(seqs, spec: CorruptionSpec) -> list[SkeletonSequence]:
    return [corrupt(s, spec, (i,)) for i, s in enumerate(seqs)]
