"""
Scoring module initialization
"""
from .events import NightReport, SdbEvent, Severity, build_night_report, compute_ahi, merge_events, severity
from .metrics import cutoff_metrics, roc_auc, roc_points, sensitivity_specificity
from .folds import FoldSplit, make_folds

__all__ = [
    'NightReport',
    'SdbEvent',
    'Severity',
    'build_night_report',
    'compute_ahi',
    'merge_events',
    'severity',
    'cutoff_metrics',
    'roc_auc',
    'roc_points',
    'sensitivity_specificity',
    'FoldSplit',
    'make_folds'
]
