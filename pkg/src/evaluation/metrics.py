"""Classification metrics: rank-statistic AUC, accuracy and macro F1."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from src.errors import ContractViolation, UndefinedMetricError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


def metric_auc(scores: ArrayLike, labels: ArrayLike) -> float:
    """P(score+ > score-) + P(tie) / 2 via the Mann-Whitney rank sum."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ContractViolation(f"{scores.size} scores for {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ContractViolation("AUC labels must be binary")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_ovr_auc(probabilities: np.ndarray, labels: ArrayLike) -> float:
    """Unweighted mean of one-vs-rest AUCs over the classes present in ``labels``."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    k = probabilities.shape[1]
    if k == 2:
        return metric_auc(probabilities[:, 1], labels)
    present = np.unique(labels)
    if present.size < 2:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    aucs = []
    for c in range(k):
        if c not in present:
            logger.warning("Class %d absent from labels; left out of the macro AUC", c)
            continue
        aucs.append(metric_auc(probabilities[:, c], (labels == c).astype(np.int64)))
    return float(np.mean(aucs))


def confusion_matrix(pred: ArrayLike, true: ArrayLike, k: int) -> np.ndarray:
    """[k, k] counts, rows = true class, columns = predicted class."""
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ContractViolation(f"{pred.size} predictions for {true.size} labels")
    for name, values in (("predicted", pred), ("true", true)):
        if values.size and (values.min() < 0 or values.max() >= k):
            raise ContractViolation(f"{name} labels fall outside 0..{k - 1}")
    matrix = np.zeros((k, k), dtype=np.int64)
    np.add.at(matrix, (true, pred), 1)
    return matrix


def metric_acc_f1(pred: ArrayLike, true: ArrayLike, k: int) -> Tuple[float, float]:
    matrix = confusion_matrix(pred, true, k)
    total = int(matrix.sum())
    if total == 0:
        raise UndefinedMetricError("accuracy is undefined for an empty set")
    tp = np.diag(matrix).astype(np.float64)
    fp = matrix.sum(axis=0) - tp
    fn = matrix.sum(axis=1) - tp
    denominator = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denominator, out=np.zeros(k), where=denominator > 0)
    return float(tp.sum() / total), float(f1.mean())


@dataclass
class MetricReport:
    auc: float
    acc: float
    macro_f1: float
    class_counts: Dict[int, int] = field(default_factory=dict)
    seed: int = 0
    config_fingerprint: str = ""

    @property
    def auc_name(self) -> str:
        return "auc" if len(self.class_counts) <= 2 else "auc_macro_ovr"

    def rows(self):
        yield self.auc_name, self.auc
        yield "acc", self.acc
        yield "macro_f1", self.macro_f1
        yield "seed", self.seed
        yield "config", self.config_fingerprint
        for c, count in sorted(self.class_counts.items()):
            yield f"count_class_{c}", count


def report_from_probabilities(
    probabilities: np.ndarray,
    labels: ArrayLike,
    seed: int = 0,
    config_fingerprint: str = "",
) -> MetricReport:
    """Metrics for one set of bag predictions; AUC is NaN (with a warning) when undefined."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    k = probabilities.shape[1]
    try:
        auc = macro_ovr_auc(probabilities, labels)
    except UndefinedMetricError as exc:
        logger.warning("%s; reporting NaN", exc)
        auc = float("nan")
    acc, macro_f1 = metric_acc_f1(probabilities.argmax(axis=1), labels, k)
    counts = {c: int((labels == c).sum()) for c in range(k)}
    return MetricReport(
        auc=auc, acc=acc, macro_f1=macro_f1, class_counts=counts, seed=seed, config_fingerprint=config_fingerprint
    )
