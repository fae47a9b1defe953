"""GCN classifier over positions + fused accelerations, stage-2 training and evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .complete import CompletionModel, SkeletonBank, complete_all
from .core import NUM_JOINTS, SkeletonSequence, SkeletonTopology, coco17_topology
from .corrupt import CorruptionSpec, corrupt
from .decompose import AugmentSpec, decompose
from .dynamics import (
    VARIANTS, DynamicsModel, FusionHead, acceleration_loss, fused_acceleration_batch, pseudo_acceleration,
)
from .nn import ops

log = logging.getLogger(__name__)


def normalized_adjacency(topo: SkeletonTopology) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2."""
    a = topo.adjacency() + np.eye(topo.num_joints)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


class GcnBlock(nn.Module):
    """Node-wise linear, neighbour aggregation, kernel-3 temporal conv, residual.

    Both the aggregated and the convolved features pass through a layer norm
    over channels before their ReLU.
    """

    def __init__(self, c_in: int, c_out: int, adjacency: np.ndarray, gen, kernel: int = 3):
        self.adjacency = adjacency
        self.kernel = kernel
        self.node = nn.Linear(c_in, c_out, gen)
        self.node_norm = nn.LayerNorm(c_out)
        self.temporal = [nn.Linear(c_out, c_out, gen, bias=(k == 0)) for k in range(kernel)]
        self.temporal_norm = nn.LayerNorm(c_out)
        self.residual = nn.Linear(c_in, c_out, gen, bias=False)

    def __call__(self, x):
        """(B, T, K, c_in) -> (B, T, K, c_out)."""
        B, T = x.shape[:2]
        h = ops.relu(self.node_norm(ops.matmul(self.adjacency, self.node(x))))
        half = self.kernel // 2
        padded = ops.pad(h, [(0, 0), (half, half), (0, 0), (0, 0)])
        y = None
        for k, lin in enumerate(self.temporal):
            term = lin(ops.getitem(padded, (slice(None), slice(k, k + T))))
            y = term if y is None else ops.add(y, term)
        return ops.relu(ops.add(self.temporal_norm(y), self.residual(x)))


class GcnModel(nn.Module):
    def __init__(self, num_classes: int, channels=(4, 32, 64), topo: SkeletonTopology | None = None,
                 seed: int = 0, kernel: int = 3):
        gen = nn.rng(seed, "gcn-init")
        self.num_classes = num_classes
        self.channels = tuple(channels)
        self.adjacency = normalized_adjacency(topo or coco17_topology())
        self.blocks = [GcnBlock(a, b, self.adjacency, gen, kernel)
                       for a, b in zip(self.channels[:-1], self.channels[1:])]
        self.head = nn.Linear(self.channels[-1], num_classes, gen)
        # fixed per-channel input gain, fitted once from training data
        self.input_scale = np.ones(self.channels[0])

    def fit_input_scale(self, x: np.ndarray) -> None:
        std = centered(x).reshape(-1, x.shape[-1]).std(axis=0)
        self.input_scale = 1.0 / np.where(std > 0, std, 1.0)

    def logits(self, x):
        # the centering offset is treated as a constant: positions carry no gradient
        x = ops._lift(x)
        h = ops.mul(ops.sub(x, position_center(x.data)), self.input_scale)
        for block in self.blocks:
            h = block(h)
        return self.head(ops.mean(h, axis=(1, 2)))

    def __call__(self, x):
        return ops.softmax(self.logits(x), axis=-1)


def position_center(x: np.ndarray) -> np.ndarray:
    """Per-sequence mean position (over frames and joints); zero on acceleration channels."""
    c = np.zeros(x.shape[:1] + (1, 1, x.shape[-1]))
    c[..., :2] = x[..., :2].mean(axis=(1, 2), keepdims=True)
    return c


def centered(x: np.ndarray) -> np.ndarray:
    return x - position_center(x)


def stack_inputs(s_pred, a_pred):
    """(B, T, K, 2) positions and accelerations -> (B, T, K, 4)."""
    s_pred = ops._lift(s_pred)
    a_pred = ops._lift(a_pred)
    if s_pred.shape != a_pred.shape:
        raise ValueError(f"position/acceleration shapes differ: {s_pred.shape} vs {a_pred.shape}")
    return ops.concat([s_pred, a_pred], axis=-1)


def classify(model: GcnModel, s_pred, a_pred) -> np.ndarray:
    """Class probabilities for one (T, K, 2) pair or a batch of them."""
    s = s_pred.frames if isinstance(s_pred, SkeletonSequence) else np.asarray(s_pred, dtype=np.float64)
    a = np.asarray(a_pred, dtype=np.float64)
    single = s.ndim == 3
    if single:
        s, a = s[None], a[None]
    probs = model(stack_inputs(s, a)).data
    return probs[0] if single else probs


def total_loss(probs, label, acc_loss, lam: float):
    """Batch-mean -log p[label] plus lam * acc_loss.

    Accepts a single probability vector with an int label, or a batch.
    """
    if isinstance(probs, nn.Tensor):
        if not np.all(np.isfinite(probs.data)):
            raise nn.NumericError("non-finite class probabilities")
        ce = ops.nll_from_probs(probs, np.atleast_1d(label))
        return ops.add(ce, ops.scale(acc_loss, lam))
    p = np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise nn.NumericError("non-finite class probabilities")
    p = np.atleast_2d(p)
    labels = np.atleast_1d(label)
    return float(-np.mean(np.log(p[np.arange(len(labels)), labels])) + lam * float(acc_loss))


# ------------------------------------------------------------ evaluation

def topk_hits(probs: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    # stable sort on -p: equal probabilities rank by ascending class index
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return (order == labels[:, None]).any(axis=1)


def accuracy_report(probs, labels, num_classes: int | None = None) -> dict:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot evaluate an empty dataset")
    C = num_classes or probs.shape[1]
    top1 = topk_hits(probs, labels, 1)
    top5 = topk_hits(probs, labels, min(5, C))
    per_class = []
    for c in range(C):
        sel = labels == c
        per_class.append(float(top1[sel].mean()) if sel.any() else None)
    present = [v for v in per_class if v is not None]
    return {
        "top1": float(top1.mean()),
        "top5": float(top5.mean()),
        "mean_class_acc": float(np.mean(present)),
        "per_class": per_class,
    }


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 50
    batch_size: int = 16
    lam: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0.05 <= self.lr <= 0.2:
            log.warning("learning rate %.3g is outside the recommended [0.05, 0.2]", self.lr)


@dataclass
class PipelineModels:
    completion: CompletionModel
    bank: SkeletonBank
    dynamics: DynamicsModel
    fusion: FusionHead
    gcn: GcnModel
    completion_seed: int = 0

    def trainable(self) -> list:
        return self.dynamics.parameters() + self.fusion.parameters() + self.gcn.parameters()


@dataclass
class Prepared:
    """Decomposed variants for a set of sequences, stacked as (N, T, K, 2)."""

    base: np.ndarray
    dyna: np.ndarray
    stat: np.ndarray
    pred: np.ndarray
    labels: np.ndarray


def prepare(models: PipelineModels, clean, corruption: CorruptionSpec | None, augment_seed: int,
            strong: AugmentSpec | None = None, weak: AugmentSpec | None = None,
            stream=()) -> Prepared:
    """corrupt -> complete -> decompose for a list of clean labelled sequences.

    With ``corruption=None`` the inputs are taken as already corrupted.
    """
    if corruption is not None:
        damaged = [corrupt(s, corruption, (*stream, i)) for i, s in enumerate(clean)]
    else:
        damaged = list(clean)
    restored = complete_all(models.completion, damaged, models.bank, seed=models.completion_seed)
    return decompose_all(restored, augment_seed, strong, weak, stream)


def decompose_all(restored, augment_seed: int, strong: AugmentSpec | None = None,
                  weak: AugmentSpec | None = None, stream=()) -> Prepared:
    """Decompose fully valid sequences and stack the variants."""
    st = None if strong is None else AugmentSpec(**{**asdict(strong), "seed": augment_seed})
    wk = None if weak is None else AugmentSpec(**{**asdict(weak), "seed": augment_seed})
    parts = {k: [] for k in ("base", "dyna", "stat", "pred")}
    for i, s in enumerate(restored):
        res = decompose(s, seed=augment_seed, strong=st, weak=wk, stream=(*stream, i))
        for k in parts:
            parts[k].append(getattr(res, k).frames)
    labels = np.array([s.label if s.label is not None else -1 for s in restored], dtype=np.int64)
    return Prepared(*(np.stack(parts[k]) for k in ("base", "dyna", "stat", "pred")), labels)


def fused_inputs(models: PipelineModels, batch: dict):
    """Classifier input (B, T, K, 4) Tensor and the acceleration loss."""
    fused, pseudo = {}, {}
    for k in VARIANTS:
        fused[k], pseudo[k] = fused_acceleration_batch(models.dynamics, models.fusion, batch[k])
    a_pred = ops.scale(ops.add(ops.add(fused["base"], fused["dyna"]), fused["stat"]), 1.0 / 3.0)
    return stack_inputs(batch["pred"], a_pred), acceleration_loss(fused, pseudo)


def forward_batch(models: PipelineModels, batch: dict):
    """Return (probs Tensor, acceleration-loss Tensor) for a dict of variant arrays."""
    x, acc = fused_inputs(models, batch)
    return models.gcn(x), acc


def batch_loss(models: PipelineModels, batch: dict, labels, lam: float):
    """CE (from logits, numerically stable) + lam * acceleration loss."""
    x, acc = fused_inputs(models, batch)
    ce = ops.cross_entropy(models.gcn.logits(x), labels)
    return ops.add(ce, ops.scale(acc, lam))


def predict(models: PipelineModels, prepared: Prepared, batch_size: int = 64) -> np.ndarray:
    out = []
    for s in range(0, len(prepared.labels), batch_size):
        sl = slice(s, s + batch_size)
        batch = {k: getattr(prepared, k)[sl] for k in ("base", "dyna", "stat", "pred")}
        probs, _ = forward_batch(models, batch)
        out.append(probs.data)
    return np.concatenate(out)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_top1: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train_loss": list(self.train_loss), "val_top1": list(self.val_top1)}


def train(models: PipelineModels, train_set, val_set, config: TrainConfig | None = None,
          corruption: CorruptionSpec | None = None, strong: AugmentSpec | None = None,
          weak: AugmentSpec | None = None) -> TrainHistory:
    """Stage-2 training; the completion model is read but never updated.

    Every epoch re-corrupts and re-augments the training set with fresh
    seeded draws. Validation uses one fixed corruption.
    """
    cfg = config or TrainConfig()
    corruption = corruption or CorruptionSpec(0.5, "random", cfg.seed)
    n = len(train_set)
    steps_per_epoch = int(np.ceil(n / cfg.batch_size))
    opt = nn.SGDNesterov(models.trainable(), nn.CosineSchedule(cfg.lr, 0.0, cfg.epochs * steps_per_epoch),
                         momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    gen = nn.rng(cfg.seed, "train-order")
    val = prepare(models, val_set, corruption, cfg.seed, strong, weak, stream=("val",)) if val_set else None
    history = TrainHistory()
    step = 0
    for epoch in range(cfg.epochs):
        data = prepare(models, train_set, corruption, cfg.seed, strong, weak, stream=("train", epoch))
        if epoch == 0:
            models.fusion.fit_scale(pseudo_acceleration(data.base))
            batch = {k: getattr(data, k) for k in ("base", "dyna", "stat", "pred")}
            models.gcn.fit_input_scale(fused_inputs(models, batch)[0].data)
        order = gen.permutation(n)
        losses = []
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            batch = {k: getattr(data, k)[idx] for k in ("base", "dyna", "stat", "pred")}
            loss = batch_loss(models, batch, data.labels[idx], cfg.lam)
            value = loss.item()
            if not np.isfinite(value):
                raise nn.NumericError(f"stage-2 loss is non-finite at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
            step += 1
        history.train_loss.append(float(np.mean(losses)))
        if val is not None:
            history.val_top1.append(accuracy_report(predict(models, val), val.labels,
                                                    models.gcn.num_classes)["top1"])
        log.info("epoch %d loss %.4f val_top1 %s", epoch, history.train_loss[-1],
                 history.val_top1[-1] if history.val_top1 else "-")
    return history


def evaluate(models: PipelineModels, dataset, corruption: CorruptionSpec | None = None,
             augment_seed: int = 0, strong: AugmentSpec | None = None,
             weak: AugmentSpec | None = None) -> dict:
    """Top-1, top-5 and mean-class accuracy on a labelled dataset.

    ``corruption=None`` evaluates the dataset as given (it may already carry
    invalid frames).
    """
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    prepared = prepare(models, dataset, corruption, augment_seed, strong, weak, stream=("eval",))
    return evaluate_prepared(models, prepared)


def evaluate_prepared(models: PipelineModels, prepared: Prepared) -> dict:
    if (prepared.labels < 0).any():
        raise ValueError("evaluation needs a label on every sequence")
    return accuracy_report(predict(models, prepared), prepared.labels, models.gcn.num_classes)
