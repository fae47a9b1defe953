"""Finite-difference kinematics and learned Lagrangian acceleration estimates.

The physics branch evaluates, per frame,

    acc_t = M_t @ tau - C_t @ v_t - g_t

where M_t and C_t are symmetric n x n matrices (n = 34 flattened coordinates)
built from predicted upper triangles, tau is one force vector per sequence and
v_t is the central-difference velocity. A cross-attention head then blends the
physics estimate into the second-difference acceleration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import nn
from .core import NUM_JOINTS, SkeletonSequence, require_valid
from .nn import ops

STATE_DIM = NUM_JOINTS * 2
VARIANTS = ("base", "dyna", "stat")


def _frames(seq) -> np.ndarray:
    if isinstance(seq, SkeletonSequence):
        require_valid(seq)
        return seq.frames
    x = np.asarray(seq, dtype=np.float64)
    if x.shape[-3] < 3:
        raise ValueError("finite differences need at least 3 frames")
    return x


def velocity(seq, dt: float = 1.0) -> np.ndarray:
    """Central differences inside, one-sided first differences at the ends.

    Time is axis -3, so batched (B, T, K, 2) input works too.
    """
    x = np.moveaxis(_frames(seq), -3, 0)
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) / (2.0 * dt)
    v[0] = (x[1] - x[0]) / dt
    v[-1] = (x[-1] - x[-2]) / dt
    return np.moveaxis(v, 0, -3)


def pseudo_acceleration(seq, dt: float = 1.0) -> np.ndarray:
    """Second differences inside; each end copies its neighbouring interior value."""
    x = np.moveaxis(_frames(seq), -3, 0)
    a = np.empty_like(x)
    a[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / (dt * dt)
    a[0] = a[1]
    a[-1] = a[-2]
    return np.moveaxis(a, 0, -3)


# ------------------------------------------------------------ symmetrize

def triangle_size(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=8)
def _upper_index(n: int) -> np.ndarray:
    """n x n matrix holding, for every cell, its position in the row-major upper triangle."""
    idx = np.empty((n, n), dtype=np.int64)
    rows, cols = np.triu_indices(n)
    idx[rows, cols] = np.arange(rows.size)
    idx[cols, rows] = np.arange(rows.size)
    idx.setflags(write=False)
    return idx


def symmetrize(u, n: int | None = None):
    """Fill the upper triangle (row-major) from ``u`` and mirror it.

    Works on numpy arrays or Tensors, with any leading batch axes.
    """
    m = u.shape[-1]
    if n is None:
        n = int((np.sqrt(8 * m + 1) - 1) / 2)
    if triangle_size(n) != m:
        raise ValueError(f"length {m} is not a triangular number n(n+1)/2")
    if isinstance(u, nn.Tensor):
        return ops.symmetric_from_upper(u, n)
    u = np.asarray(u, dtype=np.float64)
    return u[..., _upper_index(n)]


def extract_upper(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[-1]
    rows, cols = np.triu_indices(n)
    return np.asarray(mat)[..., rows, cols]


# ---------------------------------------------------------------- models

@dataclass
class DynamicsConfig:
    feature_width: int = 32
    hidden: int = 64
    fusion_width: int = 16
    seed: int = 0


class DynamicsModel(nn.Module):
    def __init__(self, feature_width: int = 32, hidden: int = 64, seed: int = 0, n: int = STATE_DIM):
        gen = nn.rng(seed, "dynamics-init")
        F, H = feature_width, hidden
        self.n = n
        self.feature_width = F
        self.f_s_global = nn.MLP([n, H, H, F], gen)
        self.f_s_local = nn.MLP([n, H, H, F], gen)
        self.f_v_global = nn.MLP([n, H, H, F], gen)
        self.f_v_local = nn.MLP([n, H, H, F], gen)
        self.E_g = nn.MLP([2 * F, H, H, n], gen)
        self.E_tau = nn.MLP([2 * F, H, H, n], gen)
        self.E_C = nn.MLP([4 * F, H, H, triangle_size(n)], gen)
        self.E_M = nn.MLP([2 * F, H, H, triangle_size(n)], gen)


def features(model: DynamicsModel, pos, vel):
    """Global and local features for positions and velocities.

    ``pos``/``vel`` are (B, T, n) arrays or Tensors. Returns
    (s_g (B, F), s_t (B, T, F), v_g (B, F), v_t (B, T, F)).
    """
    pos, vel = nn.ops._lift(pos), nn.ops._lift(vel)
    if pos.shape[-1] != model.n or vel.shape != pos.shape:
        raise ValueError(f"expected matching (B, T, {model.n}) inputs, got {pos.shape} and {vel.shape}")
    s_g = model.f_s_global(ops.mean(pos, axis=1))
    s_t = model.f_s_local(pos)
    v_g = model.f_v_global(ops.mean(vel, axis=1))
    v_t = model.f_v_local(vel)
    return s_g, s_t, v_g, v_t


@dataclass
class PhysicsTerms:
    g: nn.Tensor
    tau: nn.Tensor
    C: nn.Tensor
    M: nn.Tensor
    acc: nn.Tensor


def physics_terms(model: DynamicsModel, pos, vel) -> PhysicsTerms:
    """All estimator outputs and the resulting (B, T, n) acceleration."""
    s_g, s_t, v_g, v_t = features(model, pos, vel)
    B, T = s_t.shape[:2]
    F = model.feature_width
    s_g_t = ops.broadcast_to(ops.reshape(s_g, (B, 1, F)), (B, T, F))
    v_g_t = ops.broadcast_to(ops.reshape(v_g, (B, 1, F)), (B, T, F))
    g = model.E_g(ops.concat([s_g_t, s_t], axis=-1))
    tau = model.E_tau(ops.concat([s_g, v_g], axis=-1))
    C = symmetrize(model.E_C(ops.concat([s_g_t, s_t, v_g_t, v_t], axis=-1)), model.n)
    M = symmetrize(model.E_M(ops.concat([s_g_t, s_t], axis=-1)), model.n)
    return PhysicsTerms(g, tau, C, M, combine(M, tau, C, vel, g))


def combine(M, tau, C, vel, g):
    """M_t tau - C_t v_t - g_t for (B, T, n, n) matrices and (B, n) tau."""
    M, tau, C, vel, g = (nn.ops._lift(x) for x in (M, tau, C, vel, g))
    B, T, n = g.shape
    drive = ops.matmul(M, ops.reshape(tau, (B, 1, n, 1)))
    damp = ops.matmul(C, ops.reshape(vel, (B, T, n, 1)))
    return ops.sub(ops.reshape(ops.sub(drive, damp), (B, T, n)), g)


def physics_acceleration(model: DynamicsModel, seq) -> np.ndarray:
    """Physics-estimated acceleration for one sequence, shape (T, K, 2)."""
    x = _frames(seq)
    T = x.shape[0]
    pos = x.reshape(1, T, -1)
    vel = velocity(x).reshape(1, T, -1)
    acc = physics_terms(model, pos, vel).acc.data
    if not np.all(np.isfinite(acc)):
        raise nn.NumericError("physics acceleration produced a non-finite value")
    return acc.reshape(x.shape)


class FusionHead(nn.Module):
    """Per-frame single-head cross-attention over joints.

    Queries come from the finite-difference acceleration, keys and values from
    the physics estimate; the attended values map back to 2 channels and are
    added to the finite-difference acceleration. The head works in units of
    ``accel_scale`` (the RMS finite-difference acceleration of the training
    data), so its parameters live at O(1) regardless of frame rate.
    """

    def __init__(self, width: int = 16, seed: int = 0, out_scale: float = 0.01):
        gen = nn.rng(seed, "fusion-init")
        self.width = width
        self.query = nn.Linear(2, width, gen)
        self.key = nn.Linear(2, width, gen)
        self.value = nn.Linear(2, width, gen)
        self.out = nn.Linear(width, 2, gen)
        self.out.weight.data = self.out.weight.data * out_scale
        self.accel_scale = 1.0

    def fit_scale(self, pseudo: np.ndarray) -> None:
        rms = float(np.sqrt(np.mean(np.square(pseudo))))
        self.accel_scale = rms if rms > 0 else 1.0

    def attention(self, pseudo, physics):
        q = self.query(ops.scale(pseudo, 1.0 / self.accel_scale))
        k = self.key(physics)
        scores = ops.scale(ops.matmul(q, ops.swapaxes(k, -1, -2)), 1.0 / np.sqrt(self.width))
        return ops.softmax(scores, axis=-1)

    def __call__(self, pseudo, physics):
        """(..., K, 2) pseudo and physics accelerations -> fused (..., K, 2)."""
        pseudo, physics = nn.ops._lift(pseudo), nn.ops._lift(physics)
        if pseudo.shape != physics.shape:
            raise ValueError(f"fusion shape mismatch {pseudo.shape} vs {physics.shape}")
        attended = ops.matmul(self.attention(pseudo, physics), self.value(physics))
        return ops.add(pseudo, ops.scale(self.out(attended), self.accel_scale))


def fuse_acceleration(pseudo, physics, fusion: FusionHead) -> np.ndarray:
    return fusion(pseudo, physics).data


def acceleration_loss(outputs: dict, pseudo: dict):
    """Mean over the three variants of MSE(pseudo, fused)."""
    missing = [k for k in VARIANTS if k not in outputs or k not in pseudo]
    if missing:
        raise KeyError(f"missing variants: {missing}")
    if isinstance(next(iter(outputs.values())), nn.Tensor):
        terms = [ops.mse(outputs[k], pseudo[k]) for k in VARIANTS]
        return ops.scale(ops.add(ops.add(terms[0], terms[1]), terms[2]), 1.0 / 3.0)
    return float(np.mean([np.mean((np.asarray(outputs[k]) - np.asarray(pseudo[k])) ** 2) for k in VARIANTS]))


def fused_acceleration_batch(model: DynamicsModel, fusion: FusionHead, frames: np.ndarray):
    """(B, T, K, 2) positions -> (fused Tensor, pseudo array), both (B, T, K, 2)."""
    B, T = frames.shape[:2]
    vel = velocity(frames)
    pseudo = pseudo_acceleration(frames)
    acc = physics_terms(model, frames.reshape(B, T, -1), vel.reshape(B, T, -1)).acc
    fused = fusion(pseudo, ops.reshape(acc, frames.shape))
    return fused, pseudo
