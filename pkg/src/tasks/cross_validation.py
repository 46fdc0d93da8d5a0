"""
Subject-level k-fold protocol: per fold, train the effort estimator,
freeze it, train the audio-only and fusion classifiers, and score the
held-out subjects. Writes summary.json and summary.txt.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel

from ..config.config import RunConfig
from ..models.effort_estimator import EffortEvaluation
from ..scoring.folds import FoldSplit, make_folds
from ..scoring.metrics import CutoffMetrics, cutoff_metrics, mean_std
from ..storage.segment_dataset import SegmentDataset
from .evaluation import evaluate_effort_dataset, evaluate_nights, segment_probabilities
from .training import train_effort, train_osa

logger = logging.getLogger(__name__)

MODEL_NAMES = ("audio_only", "latent_fusion")


class NightOutcome(BaseModel):
    night_id: str
    predicted_ahi: float
    reference_ahi: Optional[float] = None


class FoldResult(BaseModel):
    fold_index: int
    train_subjects: List[str]
    val_subjects: List[str]
    test_subjects: List[str]
    effort: EffortEvaluation
    segment_auc: Dict[str, Optional[float]]
    nights: Dict[str, List[NightOutcome]]


class CrossValidationSummary(BaseModel):
    k: int
    seed: int
    config_hash: str
    folds: List[FoldResult]
    aggregate: Dict[str, Dict[str, float]]
    cutoffs: Dict[str, List[CutoffMetrics]]


def run_fold(dataset: SegmentDataset, split: FoldSplit, config: RunConfig) -> FoldResult:
    """Effort stage -> freeze -> both classifiers, scored on the fold's test subjects"""
    train = dataset.subset(split.train)
    val = dataset.subset(split.val)
    test = dataset.subset(split.test)
    seed = config.seed + split.fold_index
    logger.info(
        f"🚀 Fold {split.fold_index}: {len(train)}/{len(val)}/{len(test)} segments "
        f"({len(split.train)}/{len(split.val)}/{len(split.test)} subjects)"
    )

    effort_model, _ = train_effort(train, val, config, seed=seed)
    effort_eval = evaluate_effort_dataset(effort_model, test, config.effort_training.batch_size)

    aucs: Dict[str, Optional[float]] = {}
    nights: Dict[str, List[NightOutcome]] = {}
    for kind in MODEL_NAMES:
        frozen = effort_model if kind == "latent_fusion" else None
        model, _ = train_osa(kind, train, val, config, frozen_effort=frozen, seed=seed)
        probs = segment_probabilities(model, test, batch_size=config.osa_training.batch_size)
        evaluation = evaluate_nights(kind, test, probs, config)
        aucs[kind] = evaluation.segment_auc
        nights[kind] = [
            NightOutcome(night_id=row["night_id"], predicted_ahi=row["predicted_ahi"], reference_ahi=row["reference_ahi"])
            for row in evaluation.nights
        ]

    return FoldResult(
        fold_index=split.fold_index,
        train_subjects=split.train,
        val_subjects=split.val,
        test_subjects=split.test,
        effort=effort_eval,
        segment_auc=aucs,
        nights=nights,
    )


def _aggregate(folds: List[FoldResult]) -> Dict[str, Dict[str, float]]:
    def present(values):
        return [v for v in values if v is not None]

    aggregate = {
        "ccc": mean_std([f.effort.ccc_mean for f in folds]),
        "rmse": mean_std([f.effort.rmse_mean for f in folds]),
        "mae": mean_std([f.effort.mae_mean for f in folds]),
    }
    for kind in MODEL_NAMES:
        aggregate[f"auc_{kind}"] = mean_std(present(f.segment_auc.get(kind) for f in folds))
    return aggregate


def _pooled_cutoffs(folds: List[FoldResult], config: RunConfig) -> Dict[str, List[CutoffMetrics]]:
    tables = {}
    for kind in MODEL_NAMES:
        outcomes = [n for f in folds for n in f.nights[kind] if n.reference_ahi is not None]
        tables[kind] = cutoff_metrics(
            [n.predicted_ahi for n in outcomes],
            [n.reference_ahi for n in outcomes],
            config.scoring.cutoffs,
        )
    return tables


def cross_validate(dataset: SegmentDataset, config: RunConfig, k: Optional[int] = None) -> CrossValidationSummary:
    """
    Run every fold of the subject-level protocol

    Args:
        dataset: Full labelled dataset with effort references
        config: Run configuration
        k: Fold count (config.folds.k when None)

    Returns:
        CrossValidationSummary
    """
    k = k or config.folds.k
    splits = make_folds(dataset.subjects(), k=k, seed=config.seed)
    folds = [run_fold(dataset, split, config) for split in splits]
    summary = CrossValidationSummary(
        k=k,
        seed=config.seed,
        config_hash=config.config_hash(),
        folds=folds,
        aggregate=_aggregate(folds),
        cutoffs=_pooled_cutoffs(folds, config),
    )
    logger.info(f"✅ Cross-validation finished: CCC {summary.aggregate['ccc']['mean']:.3f}")
    return summary


def _pm(stats: Dict[str, float], digits: int = 3) -> str:
    return f"{stats['mean']:.{digits}f} ± {stats['std']:.{digits}f}"


def _opt(value: Optional[float]) -> str:
    return "-" if value is None or not np.isfinite(value) else f"{value:.3f}"


def format_summary(summary: CrossValidationSummary) -> str:
    """Fold table with a mean ± std footer, then pooled night-level cut-off tables"""
    lines = [
        f"# cross-validation k={summary.k} seed={summary.seed} config={summary.config_hash}",
        "fold | CCC | RMSE | MAE | AUC audio_only | AUC latent_fusion",
    ]
    for fold in summary.folds:
        lines.append(
            f"{fold.fold_index} | {fold.effort.ccc_mean:.3f} | {fold.effort.rmse_mean:.3f} | "
            f"{fold.effort.mae_mean:.3f} | {_opt(fold.segment_auc.get('audio_only'))} | "
            f"{_opt(fold.segment_auc.get('latent_fusion'))}"
        )
    agg = summary.aggregate
    lines.append(
        f"mean ± std | {_pm(agg['ccc'])} | {_pm(agg['rmse'])} | {_pm(agg['mae'])} | "
        f"{_pm(agg['auc_audio_only'])} | {_pm(agg['auc_latent_fusion'])}"
    )

    lines.append("")
    lines.append("model | cutoff | negative/positive | sensitivity | specificity | AUC")
    for kind, rows in summary.cutoffs.items():
        for row in rows:
            lines.append(
                f"{kind} | {row.cutoff:g} | {row.n_negative}/{row.n_positive} | "
                f"{_opt(row.sensitivity)} | {_opt(row.specificity)} | {_opt(row.auc)}"
            )
    return "\n".join(lines) + "\n"


def write_summary(summary: CrossValidationSummary, report_dir: Union[str, Path]) -> Path:
    """Write summary.json and summary.txt; returns the text file path"""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "summary.json").write_text(
        json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    )
    text_path = report_dir / "summary.txt"
    text_path.write_text(format_summary(summary))
    logger.info(f"Summary written to {text_path}")
    return text_path
