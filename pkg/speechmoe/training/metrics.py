from typing import Iterable, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from speechmoe.constants import METRIC_NAMES
from speechmoe.errors import ShapeError, ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import FoldResult, MetricSummary, Metrics, RunReport

_logger = get_logger()


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax over the two logits; ties go to control (index 0)."""
    return np.argmax(np.asarray(logits), axis=-1).astype(np.int64)


def evaluate_metrics(preds: Sequence[int], labels: Sequence[int]) -> Metrics:
    """
    Confusion-matrix metrics with depression (1) as the positive class.

    Ratios with a zero denominator are reported as 0 and listed in `undefined`.

    Raises:
        ValidationError: empty input or non-binary values
        ShapeError: length mismatch
    """
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.size == 0:
        raise ValidationError("cannot evaluate metrics on empty input")
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.size} predictions vs {labels.size} labels")
    if not np.isin(preds, (0, 1)).all() or not np.isin(labels, (0, 1)).all():
        raise ValidationError("predictions and labels must be 0 or 1")

    tn, fp, fn, tp = (int(v) for v in confusion_matrix(labels, preds, labels=[0, 1]).ravel())
    # recall of the control class is the specificity
    prec, rec, f_score, _ = precision_recall_fscore_support(
        labels, preds, labels=[1, 0], average=None, zero_division=0
    )
    precision, recall, f1, specificity = float(prec[0]), float(rec[0]), float(f_score[0]), float(rec[1])
    undefined = [
        name
        for name, den in (("precision", tp + fp), ("recall", tp + fn), ("specificity", tn + fp))
        if den == 0
    ]
    if precision + recall == 0:
        undefined.append("f1")
    if undefined:
        _logger.warning(f"Undefined metric(s) reported as 0: {', '.join(undefined)}")
    return Metrics(
        accuracy=(tp + tn) / preds.size,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        undefined=undefined,
    )


def summarize(values: Iterable[float]) -> MetricSummary:
    """Mean and population std of fractions, as percentages rounded to two decimals."""
    percent = np.asarray(list(values), dtype=np.float64) * 100.0
    return MetricSummary(mean=round(float(percent.mean()), 2), std=round(float(percent.std()), 2))


def aggregate_report(
    entries: Sequence[FoldResult],
    runs: int,
    folds: int,
    name: str = "run",
    config: dict | None = None,
    seed: int = 0,
    wall_clock_seconds: float = 0.0,
    strict: bool = True,
) -> RunReport:
    """
    Build a RunReport whose aggregate covers exactly runs × folds entries, sorted by (run, fold).

    Raises:
        ValidationError: entries missing or duplicated while `strict`
    """
    ordered = sorted(entries, key=lambda e: (e.run, e.fold))
    keys = [(e.run, e.fold) for e in ordered]
    if len(set(keys)) != len(keys):
        raise ValidationError("duplicate (run, fold) entries")
    stray = [k for k in keys if not (0 <= k[0] < runs and 0 <= k[1] < folds)]
    if stray:
        raise ValidationError(f"entries outside {runs} runs × {folds} folds: {stray}")
    report = RunReport(
        name=name,
        config=config or {},
        seed=seed,
        runs=runs,
        folds=folds,
        entries=ordered,
        wall_clock_seconds=wall_clock_seconds,
    )
    missing = report.missing()
    if missing:
        if strict:
            raise ValidationError(
                f"report {name!r} is missing entries for (run, fold) {missing}"
            )
        return report.model_copy(update={"partial": True})
    aggregate = {
        metric: summarize(e.metrics.value(metric) for e in ordered) for metric in METRIC_NAMES
    }
    return report.model_copy(update={"aggregate": aggregate})
