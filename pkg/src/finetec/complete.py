"""In-context sequence completion and the non-learned restoration baselines.

The completion network sees four sequences laid end to end in time,
``[context; masked context; prior; corrupted query]``. Each frame is encoded
as 34 coordinates, one validity bit and an 8-wide sinusoidal position code
(43 inputs). The frames sitting in the masked-context slot and in the query
slot are read back as the completed demonstration and the restored query.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import NUM_JOINTS, SequenceError, SkeletonSequence, full_sequence, require_valid
from .corrupt import CORRUPTION_MODES, block_start, drop_count, drop_mask
from .nn import ops

log = logging.getLogger(__name__)

COORDS = NUM_JOINTS * 2
POS_DIM = 8
INPUT_DIM = COORDS + 1 + POS_DIM
MASK_KINDS = ("random", "pattern", "prefix", "suffix", "middle")
BASELINES = ("left_copy", "right_copy", "interpolate", "duplicate")


# --------------------------------------------------------------------- bank

def resample(frames: np.ndarray, length: int) -> np.ndarray:
    """Linear resampling of a (T, K, 2) array to ``length`` frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] == length:
        return frames.copy()
    src = np.linspace(0.0, frames.shape[0] - 1, length)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, frames.shape[0] - 1)
    w = (src - lo)[:, None, None]
    return frames[lo] * (1.0 - w) + frames[hi] * w


@dataclass(frozen=True)
class SkeletonBank:
    sequences: tuple

    def __post_init__(self):
        seqs = tuple(self.sequences)
        if not seqs:
            raise SequenceError("skeleton bank is empty")
        T = seqs[0].T
        for s in seqs:
            require_valid(s, "bank sequence")
            if s.T != T:
                raise SequenceError(f"bank sequence {s.id!r} has T={s.T}, expected {T}")
        object.__setattr__(self, "sequences", seqs)

    @classmethod
    def from_sequences(cls, seqs, length: int | None = None) -> "SkeletonBank":
        seqs = list(seqs)
        if not seqs:
            raise SequenceError("skeleton bank is empty")
        length = length or seqs[0].T
        return cls(tuple(
            s if s.T == length else full_sequence(resample(s.frames, length), s.id, s.label)
            for s in seqs))

    @property
    def T(self) -> int:
        return self.sequences[0].T

    def __len__(self) -> int:
        return len(self.sequences)

    def array(self) -> np.ndarray:
        return np.stack([s.frames for s in self.sequences])


def build_prior(bank: SkeletonBank) -> SkeletonSequence:
    return full_sequence(bank.array().mean(axis=0), id="prior")


# ------------------------------------------------------------------ masking

@dataclass(frozen=True)
class MaskStrategy:
    kind: str
    rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.kind != "pattern" and not 0.0 < self.rate < 1.0:
            raise ValueError(f"mask rate must lie in (0, 1), got {self.rate}")


def strategy_mask(T: int, strategy: MaskStrategy, query_mask=None, stream=()) -> np.ndarray:
    """Boolean array, True where the strategy hides a frame."""
    if strategy.kind == "pattern":
        if query_mask is None:
            raise ValueError("pattern masking needs the query's mask")
        query_mask = np.asarray(query_mask, dtype=bool)
        if query_mask.shape != (T,):
            raise ValueError(f"query mask must have length {T}")
        return query_mask.copy()
    n = drop_count(strategy.rate, T)
    hidden = np.zeros(T, dtype=bool)
    if strategy.kind == "random":
        gen = nn.rng(strategy.seed, "mask", *stream)
        hidden[gen.choice(T, size=n, replace=False)] = True
    else:
        start = block_start(strategy.kind, n, T)
        hidden[start:start + n] = True
    return hidden


def apply_mask(seq: SkeletonSequence, strategy: MaskStrategy, query_mask=None, stream=()) -> SkeletonSequence:
    """Hide frames of ``seq``; ``query_mask`` is True on the query's missing frames."""
    hidden = strategy_mask(seq.T, strategy, query_mask, stream)
    return seq.with_frames(seq.frames, seq.valid & ~hidden)


# ------------------------------------------------------------------ network

def positional_encoding(n: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    freqs = 1.0 / 10000.0 ** (2.0 * np.arange(POS_DIM // 2) / POS_DIM)
    angles = pos * freqs[None, :]
    pe = np.empty((n, POS_DIM))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


class MixerBlock(nn.Module):
    """One S-MLP (over features) and one T-MLP (over time), each residual + normed."""

    def __init__(self, width: int, length: int, gen):
        self.spatial = nn.Linear(width, width, gen)
        self.spatial_norm = nn.LayerNorm(width)
        self.temporal = nn.Linear(length, length, gen)
        self.temporal_norm = nn.LayerNorm(width)

    def __call__(self, h):
        h = ops.add(h, self.spatial_norm(self.spatial(h)))
        mixed = ops.swapaxes(self.temporal(ops.swapaxes(h, -1, -2)), -1, -2)
        return ops.add(h, self.temporal_norm(mixed))


class CompletionModel(nn.Module):
    def __init__(self, T: int, embed: int = 34, blocks: int = 8, seed: int = 0, coord_scale: float = 10.0):
        gen = nn.rng(seed, "completion-init")
        self.T = T
        self.embed = embed
        self.num_blocks = blocks
        self.coord_scale = coord_scale
        self.input_proj = nn.Linear(INPUT_DIM, embed, gen)
        self.blocks = [MixerBlock(embed, 4 * T, gen) for _ in range(blocks)]
        self.output_proj = nn.Linear(embed, COORDS, gen)
        w = gen.standard_normal((embed, COORDS))
        while np.any(np.abs(w) > 2.0):
            bad = np.abs(w) > 2.0
            w[bad] = gen.standard_normal(int(bad.sum()))
        self.output_proj.weight.data = 0.02 * w

    def __call__(self, x):
        """(B, 4T, 43) -> (B, 4T, 34)."""
        h = ops.relu(self.input_proj(x))
        for block in self.blocks:
            h = block(h)
        return self.output_proj(h)


@dataclass
class ICLBatch:
    context: SkeletonSequence
    mask: SkeletonSequence
    prior: SkeletonSequence
    corrupt: SkeletonSequence
    target: SkeletonSequence | None = None

    def __post_init__(self):
        seqs = [self.context, self.mask, self.prior, self.corrupt]
        if self.target is not None:
            seqs.append(self.target)
        if len({s.T for s in seqs}) != 1:
            raise ValueError("ICL batch sequences must share T")


def slot_centers(frames: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Per-joint mean over observed frames, shape (B, 1, K, 2)."""
    w = valid.astype(np.float64)[:, :, None, None]
    return (frames * w).sum(axis=1, keepdims=True) / np.maximum(w.sum(axis=1, keepdims=True), 1.0)


def encode_frames(parts, valids, coord_scale: float = 1.0):
    """Concatenate four (B, T, K, 2) arrays in time and build the 43-wide input.

    Coordinates enter relative to their slot's observed per-joint mean,
    multiplied by ``coord_scale``. Returns the input and the (B, 4T, 34)
    centers needed to map network outputs back to image coordinates.
    """
    centers = [slot_centers(p, v) for p, v in zip(parts, valids)]
    rel = [(p - c) * v[:, :, None, None] for p, c, v in zip(parts, centers, valids)]
    B = parts[0].shape[0]
    coords = np.concatenate([r.reshape(B, r.shape[1], COORDS) for r in rel], axis=1) * coord_scale
    flags = np.concatenate(valids, axis=1).astype(np.float64)[..., None]
    pe = np.broadcast_to(positional_encoding(coords.shape[1]), coords.shape[:2] + (POS_DIM,))
    offsets = np.concatenate(
        [np.broadcast_to(c, p.shape).reshape(B, p.shape[1], COORDS) for p, c in zip(parts, centers)], axis=1)
    return np.concatenate([coords, flags, pe], axis=-1), offsets


def forward_arrays(model: CompletionModel, context, mask, mask_valid, prior, query, query_valid):
    """Batched forward; returns a Tensor (B, 4T, 34) in image coordinates."""
    B, T = query.shape[:2]
    if T != model.T:
        raise ValueError(f"model expects T={model.T}, got {T}")
    ones = np.ones((B, T), dtype=bool)
    prior = np.broadcast_to(prior, query.shape)
    x, offsets = encode_frames([context, mask, prior, query], [ones, mask_valid, ones, query_valid],
                               model.coord_scale)
    return ops.add(ops.scale(model(nn.tensor(x)), 1.0 / model.coord_scale), offsets)


def _slots(out, T):
    return ops.getitem(out, (slice(None), slice(T, 2 * T))), ops.getitem(out, (slice(None), slice(3 * T, 4 * T)))


def icl_forward(model: CompletionModel, batch: ICLBatch):
    """Return (completed masked context, restored query) as full sequences."""
    T = batch.corrupt.T
    out = forward_arrays(
        model,
        batch.context.frames[None], batch.mask.frames[None], batch.mask.valid[None],
        batch.prior.frames[None], batch.corrupt.frames[None], batch.corrupt.valid[None])
    mask_out, base_out = _slots(out, T)
    return (full_sequence(mask_out.data[0].reshape(T, NUM_JOINTS, 2), id=batch.mask.id),
            full_sequence(base_out.data[0].reshape(T, NUM_JOINTS, 2), id=batch.corrupt.id,
                          label=batch.corrupt.label))


def icl_loss(outputs, batch: ICLBatch) -> float:
    if batch.target is None:
        raise ValueError("icl_loss needs a target sequence")
    mask_done, base = outputs
    return (float(np.mean((batch.target.frames - base.frames) ** 2))
            + float(np.mean((batch.context.frames - mask_done.frames) ** 2)))


def icl_loss_tensor(out, context, target, T: int):
    mask_out, base_out = _slots(out, T)
    B = context.shape[0]
    return ops.add(ops.mse(base_out, target.reshape(B, T, COORDS)),
                   ops.mse(mask_out, context.reshape(B, T, COORDS)))


# ---------------------------------------------------------------- training

@dataclass
class CompletionConfig:
    embed: int = 34
    blocks: int = 8
    coord_scale: float = 10.0
    steps: int = 2000
    batch_size: int = 16
    lr_max: float = 1e-3
    lr_min: float = 5e-8
    weight_decay: float = 1e-4
    query_rates: tuple = (0.25, 0.5, 0.75)
    query_modes: tuple = CORRUPTION_MODES
    mask_rates: tuple = (0.25, 0.5, 0.75)
    seed: int = 1


@dataclass
class PretrainResult:
    model: CompletionModel
    history: list = field(default_factory=list)


def sample_training_batch(bank_arr: np.ndarray, cfg: CompletionConfig, gen: np.random.Generator):
    """Draw one batch of (context, masked context, query gt, corrupted query)."""
    n, T = bank_arr.shape[:2]
    B = cfg.batch_size
    ctx_idx = gen.integers(0, n, size=B)
    qry_idx = gen.integers(0, n, size=B)
    q_valid = np.empty((B, T), dtype=bool)
    m_valid = np.empty((B, T), dtype=bool)
    for b in range(B):
        rate = cfg.query_rates[gen.integers(len(cfg.query_rates))]
        mode = cfg.query_modes[gen.integers(len(cfg.query_modes))]
        q_drop = drop_mask(T, rate, mode, gen)
        q_valid[b] = ~q_drop
        kind = MASK_KINDS[gen.integers(len(MASK_KINDS))]
        if kind == "pattern":
            hidden = q_drop
        elif kind == "random":
            hidden = np.zeros(T, dtype=bool)
            hidden[gen.choice(T, size=drop_count(cfg.mask_rates[gen.integers(len(cfg.mask_rates))], T),
                              replace=False)] = True
        else:
            r = cfg.mask_rates[gen.integers(len(cfg.mask_rates))]
            k = drop_count(r, T)
            hidden = np.zeros(T, dtype=bool)
            s = block_start(kind, k, T)
            hidden[s:s + k] = True
        m_valid[b] = ~hidden
    context = bank_arr[ctx_idx]
    target = bank_arr[qry_idx]
    masked = context * m_valid[:, :, None, None]
    query = target * q_valid[:, :, None, None]
    return context, masked, m_valid, target, query, q_valid


def pretrain_completion(bank: SkeletonBank, config: CompletionConfig | None = None) -> PretrainResult:
    cfg = config or CompletionConfig()
    if len(bank) < 2:
        raise SequenceError("pretraining needs a bank of at least 2 sequences")
    bank_arr = bank.array()
    prior = build_prior(bank).frames
    T = bank.T
    model = CompletionModel(T, cfg.embed, cfg.blocks, seed=cfg.seed, coord_scale=cfg.coord_scale)
    opt = nn.Adam(model.parameters(), nn.CosineSchedule(cfg.lr_max, cfg.lr_min, cfg.steps),
                  weight_decay=cfg.weight_decay)
    gen = nn.rng(cfg.seed, "completion-data")
    history = []
    for step in range(cfg.steps):
        context, masked, m_valid, target, query, q_valid = sample_training_batch(bank_arr, cfg, gen)
        out = forward_arrays(model, context, masked, m_valid, prior, query, q_valid)
        loss = icl_loss_tensor(out, context, target, T)
        value = loss.item()
        if not np.isfinite(value):
            raise nn.NumericError(f"completion pretraining diverged at step {step} (loss={value})")
        history.append(value)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 500 == 0:
            log.info("completion step %d loss %.6f", step, value)
    return PretrainResult(model, history)


# ---------------------------------------------------------------- inference

def make_context(bank: SkeletonBank, query_valid, seed: int = 0, stream=()):
    """Seed-chosen demonstration pair masked with the query's own pattern."""
    gen = nn.rng(seed, "context", *stream)
    ctx = bank.sequences[int(gen.integers(len(bank)))]
    masked = apply_mask(ctx, MaskStrategy("pattern"), ~np.asarray(query_valid, dtype=bool))
    return ctx, masked


def complete(model: CompletionModel, s_corrupt: SkeletonSequence, prior: SkeletonSequence,
             context_pair) -> SkeletonSequence:
    ctx, masked = context_pair
    _, base = icl_forward(model, ICLBatch(ctx, masked, prior, s_corrupt))
    frames = np.where(s_corrupt.valid[:, None, None], s_corrupt.frames, base.frames)
    return full_sequence(frames, id=s_corrupt.id, label=s_corrupt.label)


def complete_all(model: CompletionModel, seqs, bank: SkeletonBank, seed: int = 0,
                 batch_size: int = 64) -> list[SkeletonSequence]:
    """Batched ``complete`` with one seed-chosen prompt per sequence."""
    prior = build_prior(bank).frames
    T = bank.T
    out = []
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        pairs = [make_context(bank, s.valid, seed, (start + i,)) for i, s in enumerate(chunk)]
        res = forward_arrays(
            model,
            np.stack([c.frames for c, _ in pairs]), np.stack([m.frames for _, m in pairs]),
            np.stack([m.valid for _, m in pairs]), prior,
            np.stack([s.frames for s in chunk]), np.stack([s.valid for s in chunk]))
        base = res.data[:, 3 * T:].reshape(len(chunk), T, NUM_JOINTS, 2)
        for s, b in zip(chunk, base):
            frames = np.where(s.valid[:, None, None], s.frames, b)
            out.append(full_sequence(frames, id=s.id, label=s.label))
    return out


# ---------------------------------------------------------------- baselines

def baseline_restore(seq: SkeletonSequence, method: str) -> SkeletonSequence:
    if method not in BASELINES:
        raise ValueError(f"unknown restoration method {method!r}")
    idx = np.flatnonzero(seq.valid)
    if idx.size == 0:
        raise SequenceError(f"sequence {seq.id!r} has no valid frames to restore from")
    T = seq.T
    t = np.arange(T)
    if method == "left_copy":
        # nearest valid at or before t; before the first valid frame use the first
        pos = np.searchsorted(idx, t, side="right") - 1
        src = idx[np.maximum(pos, 0)]
        frames = seq.frames[src]
    elif method == "right_copy":
        pos = np.searchsorted(idx, t, side="left")
        src = idx[np.minimum(pos, idx.size - 1)]
        frames = seq.frames[src]
    elif method == "interpolate":
        flat = seq.frames.reshape(T, -1)
        frames = np.empty_like(flat)
        for c in range(flat.shape[1]):
            frames[:, c] = np.interp(t, idx, flat[idx, c])
        frames = frames.reshape(seq.frames.shape)
        frames[idx] = seq.frames[idx]
    else:
        frames = seq.frames[idx[t % idx.size]]
    return full_sequence(frames, id=seq.id, label=seq.label)
