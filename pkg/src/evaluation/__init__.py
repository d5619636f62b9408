from src.evaluation.metrics import (
    MetricReport,
    confusion_matrix,
    macro_ovr_auc,
    metric_acc_f1,
    metric_auc,
    report_from_probabilities,
)

__all__ = [
    "MetricReport",
    "confusion_matrix",
    "macro_ovr_auc",
    "metric_acc_f1",
    "metric_auc",
    "report_from_probabilities",
]
