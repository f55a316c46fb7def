"""Reconstruction metrics and the per-frame summary record."""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

log = logging.getLogger(__name__)


def _pair(est, truth) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return est, truth


def rmse(est, truth) -> float:
    est, truth = _pair(est, truth)
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def mae(est, truth) -> float:
    est, truth = _pair(est, truth)
    return float(np.mean(np.abs(est - truth)))


def dice_iou(est, truth, threshold: float) -> tuple[float, float]:
    """Overlap of the supports {est > threshold} and {truth > threshold}.

    Both scores are 1 when both supports are empty.
    """
    est, truth = _pair(est, truth)
    a = est > threshold
    b = truth > threshold
    inter = int(np.count_nonzero(a & b))
    na, nb = int(a.sum()), int(b.sum())
    union = na + nb - inter
    if union == 0:
        log.info("dice/iou: both supports empty, returning (1, 1)")
        return 1.0, 1.0
    return 2.0 * inter / (na + nb), inter / union


@dataclass(frozen=True)
class FrameSummary:
    frame: int
    rmse_T: float
    mae_T: float
    dice: float
    iou: float
    J_mean_Hz: float
    J_std_Hz: float
    J_bias_Hz: float

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_frame(frame: int, est, truth, threshold: float, J_mean: float,
                    J_std: float, J_true: float) -> FrameSummary:
    d, i = dice_iou(est, truth, threshold)
    return FrameSummary(frame, rmse(est, truth), mae(est, truth), d, i,
                        float(J_mean), float(J_std), float(J_mean - J_true))
