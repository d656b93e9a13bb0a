import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, NamedTuple

import numpy as np

from speechmoe.components import DepressionModel, build_model
from speechmoe.errors import NonFiniteError, ValidationError
from speechmoe.globals import Globals
from speechmoe.logger import get_logger
from speechmoe.schema import FoldResult, ModelConfig, RunReport, StepLog
from speechmoe.tensor import RngStream, Tensor, no_grad
from speechmoe.training.dataset import Dataset
from speechmoe.training.folds import kfold_split
from speechmoe.training.losses import total_loss
from speechmoe.training.metrics import aggregate_report, evaluate_metrics, predict
from speechmoe.training.optim import Adam

_logger = get_logger()

EVAL_BATCH = 32


class FoldOutcome(NamedTuple):
    result: FoldResult
    steps: list[StepLog]


class TrainResult(NamedTuple):
    """What `train_model` returns for one run: a trained model per fold plus their metrics."""

    models: list[DepressionModel]
    results: list[FoldResult]
    steps: list[list[StepLog]]


class ExperimentResult(NamedTuple):
    report: RunReport
    final_model: DepressionModel | None
    steps: dict[tuple[int, int], list[StepLog]]


def run_seed_for(cfg: ModelConfig, run: int) -> int:
    return cfg.seed + run


def fold_stream(run_seed: int, fold: int) -> RngStream:
    return RngStream(run_seed).split("fold", fold)


def _as_tensor(images: np.ndarray | None) -> Tensor | None:
    return None if images is None else Tensor(images)


def fit(
    cfg: ModelConfig,
    data: Dataset,
    train_index: np.ndarray,
    rng: RngStream,
    tag: str = "",
    on_step: Callable[[StepLog], None] | None = None,
) -> tuple[DepressionModel, list[StepLog]]:
    """
    Initialize a model from `rng` and train it with Adam on `train_index`.

    Every epoch reshuffles the training subjects into mini-batches of `batch_size`; gating
    noise for each step comes from its own child stream.

    Raises:
        ValidationError: a class is absent from the training subjects
        NonFiniteError: the loss became NaN or infinite
    """
    train_index = np.asarray(train_index, dtype=np.int64)
    present = set(data.labels[train_index].tolist())
    if present != {0, 1}:
        raise ValidationError(f"{tag or 'training set'}: needs both classes, found {sorted(present)}")

    model = build_model(cfg, rng.split("init"))
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    use_aux = cfg.uses_aux_loss()
    steps: list[StepLog] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = train_index[rng.split("shuffle", epoch).permutation(train_index.size)]
        for start in range(0, order.size, cfg.batch_size):
            read, inter, labels = data.batch(order[start : start + cfg.batch_size])
            out = model(_as_tensor(read), _as_tensor(inter), "train", rng.split("noise", step))
            aux = (out.importance, out.load) if use_aux else None
            parts = total_loss(out.logits, labels, aux, cfg.alpha)
            if not np.isfinite(parts.total.item()):
                raise NonFiniteError(
                    f"{tag}: non-finite loss at epoch {epoch} step {step} "
                    f"(cross-entropy {parts.cross_entropy.item()})"
                )
            optimizer.zero_grad()
            parts.total.backward()
            optimizer.step()
            log = StepLog(
                epoch=epoch,
                step=step,
                total=parts.total.item(),
                cross_entropy=parts.cross_entropy.item(),
                importance=parts.importance.item() if parts.importance is not None else None,
                load=parts.load.item() if parts.load is not None else None,
            )
            steps.append(log)
            if on_step is not None:
                on_step(log)
            _logger.debug(f"{tag} epoch {epoch} step {step}: loss {log.total:.6f}")
            step += 1
    return model, steps


def predict_model(model: DepressionModel, data: Dataset, index: np.ndarray) -> np.ndarray:
    """Eval-mode predictions (gating noise off, no taping) for subjects `index`."""
    index = np.asarray(index, dtype=np.int64)
    preds = []
    with no_grad():
        for start in range(0, index.size, EVAL_BATCH):
            read, inter, _ = data.batch(index[start : start + EVAL_BATCH])
            logits = model(_as_tensor(read), _as_tensor(inter), "eval").logits
            preds.append(predict(logits.data))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def evaluate_model(model: DepressionModel, data: Dataset, index: np.ndarray | None = None):
    index = np.arange(len(data)) if index is None else index
    return evaluate_metrics(predict_model(model, data, index), data.labels[index])


def train_fold(
    cfg: ModelConfig, data: Dataset, run: int, fold: int
) -> tuple[DepressionModel, FoldOutcome]:
    run_seed = run_seed_for(cfg, run)
    train_index, test_index = kfold_split(data.entries, cfg.folds, run_seed)[fold]
    tag = f"run {run} fold {fold}"
    model, steps = fit(cfg, data, train_index, fold_stream(run_seed, fold), tag)
    metrics = evaluate_model(model, data, test_index)
    _logger.info(f"{tag}: accuracy {metrics.accuracy:.4f} f1 {metrics.f1:.4f}")
    result = FoldResult(run=run, fold=fold, seed=run_seed, metrics=metrics)
    return model, FoldOutcome(result=result, steps=steps)


def train_model(cfg: ModelConfig, data: Dataset, run: int = 0) -> TrainResult:
    """Every fold of one run, sequentially, keeping the trained models."""
    models, results, steps = [], [], []
    for fold in range(cfg.folds):
        model, outcome = train_fold(cfg, data, run, fold)
        models.append(model)
        results.append(outcome.result)
        steps.append(outcome.steps)
    return TrainResult(models=models, results=results, steps=steps)


# worker processes receive the dataset once through the pool initializer
_WORKER_DATA: Dataset | None = None


def _init_worker(data: Dataset) -> None:
    global _WORKER_DATA
    _WORKER_DATA = data


def try_fold(cfg: ModelConfig, data: Dataset, run: int, fold: int) -> FoldOutcome | None:
    """`train_fold` that logs a diverged fold and returns None instead of raising."""
    try:
        return train_fold(cfg, data, run, fold)[1]
    except NonFiniteError as e:
        _logger.error(f"Skipping fold: {e}")
        return None


def _fold_job(job: tuple[ModelConfig, int, int]) -> FoldOutcome | None:
    cfg, run, fold = job
    return try_fold(cfg, _WORKER_DATA, run, fold)


def fit_final(cfg: ModelConfig, data: Dataset) -> DepressionModel:
    """One model trained on every subject, initialized from the "final" stream of the base seed."""
    model, _ = fit(cfg, data, np.arange(len(data)), RngStream(cfg.seed).split("final"), "final")
    return model


def run_experiment(
    cfg: ModelConfig,
    data: Dataset,
    name: str = "run",
    workers: int | None = None,
    final: bool | None = None,
) -> ExperimentResult:
    """
    `runs` × `folds` cross-validation, optionally followed by the final all-subject fit.

    Jobs may run in worker processes; results are assembled in (run, fold) order, so the
    report does not depend on the worker count. A fold whose loss diverges is left out and
    the report comes back partial, with no aggregate.
    """
    workers = workers or Globals().workers
    final = cfg.fit_final if final is None else final
    jobs = [(cfg, run, fold) for run in range(cfg.runs) for fold in range(cfg.folds)]
    _logger.info(
        f"Experiment {name!r}: {cfg.runs} run(s) × {cfg.folds} folds on {len(data)} subjects, "
        f"{workers} worker(s)"
    )
    started = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(data,)
        ) as pool:
            outcomes = list(pool.map(_fold_job, jobs))
    else:
        outcomes = [try_fold(c, data, r, f) for c, r, f in jobs]
    outcomes = [o for o in outcomes if o is not None]
    failed = len(jobs) - len(outcomes)
    if failed:
        _logger.warning(f"Experiment {name!r}: {failed} of {len(jobs)} fold(s) diverged")

    if final and failed:
        _logger.warning(f"Experiment {name!r}: skipping the final fit after diverged folds")
    final_model = fit_final(cfg, data) if final and not failed else None
    report = aggregate_report(
        [o.result for o in outcomes],
        runs=cfg.runs,
        folds=cfg.folds,
        name=name,
        config=cfg.model_dump(),
        seed=cfg.seed,
        wall_clock_seconds=time.perf_counter() - started,
        strict=False,
    )
    steps = {(o.result.run, o.result.fold): o.steps for o in outcomes}
    if report.aggregate is not None:
        _logger.info(f"Experiment {name!r}: accuracy {report.aggregate['accuracy']}")
    return ExperimentResult(report=report, final_model=final_model, steps=steps)
