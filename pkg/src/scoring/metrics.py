"""
Screening metrics: ROC-AUC (Mann-Whitney), sensitivity/specificity,
ROC operating points and per-cutoff night-level tables.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.stats import rankdata

from ..errors import InvalidValue, SingleClass

logger = logging.getLogger(__name__)


def _binary(labels: Sequence) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise InvalidValue("labels must be binary (0/1)", module="events-metrics")
    return y.astype(np.int64)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic

    P(score_pos > score_neg) + 0.5 * P(tie). Mid-ranks are exact half
    integers, so the result matches brute-force pair counting exactly.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    if s.shape != y.shape:
        raise InvalidValue("scores and labels must have equal length", module="events-metrics")

    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"AUC needs both classes, got {n_pos} positive / {n_neg} negative")

    ranks = rankdata(s, method="average")
    u_stat = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def sensitivity_specificity(pred: Sequence[int], truth: Sequence[int]) -> Tuple[float, float]:
    """(TP / (TP + FN), TN / (TN + FP))"""
    p = _binary(pred)
    t = _binary(truth)
    if p.shape != t.shape:
        raise InvalidValue("pred and truth must have equal length", module="events-metrics")

    tp = int(np.sum((p == 1) & (t == 1)))
    fn = int(np.sum((p == 0) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))
    fp = int(np.sum((p == 1) & (t == 0)))
    if tp + fn == 0 or tn + fp == 0:
        raise SingleClass("sensitivity/specificity need both classes in the reference")
    return tp / (tp + fn), tn / (tn + fp)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> List[Tuple[float, float, float]]:
    """
    Sweep every distinct score as decision threshold (score >= threshold is positive)

    Returns:
        (threshold, sensitivity, specificity) rows, highest threshold first;
        the first row uses +inf (nothing predicted positive)
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    thresholds = [float("inf")] + sorted(set(s.tolist()), reverse=True)
    rows = []
    for threshold in thresholds:
        sens, spec = sensitivity_specificity((s >= threshold).astype(np.int64), y)
        rows.append((threshold, sens, spec))
    return rows


class CutoffMetrics(BaseModel):
    cutoff: float
    n_negative: int
    n_positive: int
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    auc: Optional[float] = None


def cutoff_metrics(
    pred_ahi: Sequence[float],
    ref_ahi: Sequence[float],
    cutoffs: Sequence[float] = (5.0, 15.0, 30.0),
) -> List[CutoffMetrics]:
    """
    Night-level screening performance at each AHI cut-off

    Args:
        pred_ahi: Predicted AHI per night (also the AUC score)
        ref_ahi: Reference AHI per night
        cutoffs: AHI thresholds; a night is positive when AHI >= cutoff

    Returns:
        One CutoffMetrics per cutoff; metrics are None when the reference has a single class
    """
    pred = np.asarray(pred_ahi, dtype=np.float64)
    ref = np.asarray(ref_ahi, dtype=np.float64)
    rows = []
    for cutoff in cutoffs:
        truth = (ref >= cutoff).astype(np.int64)
        row = CutoffMetrics(
            cutoff=cutoff,
            n_negative=int((truth == 0).sum()),
            n_positive=int(truth.sum()),
        )
        try:
            row.sensitivity, row.specificity = sensitivity_specificity((pred >= cutoff).astype(np.int64), truth)
            row.auc = roc_auc(pred, truth)
        except SingleClass:
            logger.warning(f"AHI cut-off {cutoff}: single reference class, metrics left empty")
        rows.append(row)
    return rows


def mean_std(values: Sequence[float]) -> Dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"mean": float("nan"), "std": float("nan")}
    return {"mean": float(v.mean()), "std": float(v.std())}
