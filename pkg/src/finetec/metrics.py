"""Restoration metrics: MPJPE, scale-normalized MPJPE and MPJVE."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RestorationReport:
    mpjpe: float
    n_mpjpe: float
    mpjve: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def _frame_weights(T: int, frames_mask) -> np.ndarray:
    if frames_mask is None:
        return np.ones(T, dtype=bool)
    frames_mask = np.asarray(frames_mask, dtype=bool)
    if not frames_mask.any():
        raise ValueError("frame selection is empty")
    return frames_mask


def mpjpe(pred, gt, frames_mask=None) -> float:
    """Mean over (frame, joint) of the Euclidean joint error.

    ``frames_mask`` restricts the average to the selected frames.
    """
    pred, gt = _check(pred, gt)
    err = np.linalg.norm(pred - gt, axis=-1)
    return float(err[_frame_weights(pred.shape[0], frames_mask)].mean())


def optimal_scale(pred, gt) -> float:
    """Least-squares s minimizing ||s * pred - gt||^2 over all elements."""
    pred, gt = _check(pred, gt)
    denom = float(np.sum(pred * pred))
    if denom == 0.0:
        return 0.0
    return float(np.sum(pred * gt)) / denom


def n_mpjpe(pred, gt, frames_mask=None) -> float:
    pred, gt = _check(pred, gt)
    if not np.any(pred):
        log.warning("n_mpjpe: prediction is identically zero, scale set to 0")
    return mpjpe(optimal_scale(pred, gt) * pred, gt, frames_mask)


def mpjve(pred, gt, frames_mask=None) -> float:
    """Mean joint error of frame-to-frame displacements (unit frame step).

    With ``frames_mask`` a step t -> t+1 counts when either endpoint is selected.
    """
    pred, gt = _check(pred, gt)
    if pred.shape[0] < 2:
        raise ValueError("mpjve needs at least two frames")
    err = np.linalg.norm(np.diff(pred, axis=0) - np.diff(gt, axis=0), axis=-1)
    if frames_mask is None:
        return float(err.mean())
    sel = _frame_weights(pred.shape[0], frames_mask)
    steps = sel[:-1] | sel[1:]
    return float(err[steps].mean())


def restoration_report(preds, gts, masks=None) -> RestorationReport:
    """Average the three metrics over a list of sequences (arrays)."""
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equally many, non-zero, predictions and references")
    masks = masks if masks is not None else [None] * len(preds)
    return RestorationReport(
        mpjpe=float(np.mean([mpjpe(p, g, m) for p, g, m in zip(preds, gts, masks)])),
        n_mpjpe=float(np.mean([n_mpjpe(p, g, m) for p, g, m in zip(preds, gts, masks)])),
        mpjve=float(np.mean([mpjve(p, g, m) for p, g, m in zip(preds, gts, masks)])),
    )
