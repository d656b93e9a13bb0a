from typing import Iterable, Sequence

import pydantic

from speechmoe.errors import ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import ModelConfig, RunReport
from speechmoe.training.dataset import Dataset
from speechmoe.training.trainer import run_experiment

_logger = get_logger()

# architecture label -> overrides applied to the base config
ABLATIONS: dict[str, dict] = {
    "proposed": {},
    "only_read": {"inputs": "read_only", "fusion": "none"},
    "only_interview": {"inputs": "interview_only", "fusion": "none"},
    "non_shared_encoder": {"encoder_shared": False},
    "concat_fusion": {"fusion": "concat"},
    "no_moe": {"head": "dense128"},
}

DEFAULT_EXPERTS = (2, 4, 8, 16)

# mixture heads compared on identical folds
HEAD_COMPARISON = ("sparse_moe", "cp_mumoe", "tr_mumoe")


def derive_config(base: ModelConfig, **overrides) -> ModelConfig:
    """Re-validated copy of `base` with `overrides` applied."""
    try:
        return ModelConfig.model_validate({**base.model_dump(), **overrides})
    except pydantic.ValidationError as e:
        raise ValidationError(f"invalid overrides {overrides}: {e}")


def ablation_configs(base: ModelConfig, names: Iterable[str] | None = None) -> dict[str, ModelConfig]:
    names = list(ABLATIONS) if names is None else list(names)
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise ValidationError(f"Unknown ablation(s): {unknown}; choose from {list(ABLATIONS)}")
    return {name: derive_config(base, **ABLATIONS[name]) for name in names}


def run_ablation(
    base: ModelConfig,
    data: Dataset,
    names: Iterable[str] | None = None,
    workers: int | None = None,
) -> list[RunReport]:
    """One cross-validated report per architecture variant, in the order requested."""
    reports = []
    for name, cfg in ablation_configs(base, names).items():
        reports.append(run_experiment(cfg, data, name=name, workers=workers, final=False).report)
    return reports


def head_config(base: ModelConfig, head: str) -> ModelConfig:
    overrides: dict = {"head": head}
    if head == "sparse_moe" and base.n_experts is not None:
        overrides["k"] = min(base.k, base.n_experts)
    return derive_config(base, **overrides)


def compare_heads(
    base: ModelConfig,
    data: Dataset,
    heads: Sequence[str] = HEAD_COMPARISON,
    workers: int | None = None,
) -> list[RunReport]:
    """
    One cross-validated report per head, everything else taken from `base`.

    Every head sees the same folds and seeds, so the reports differ only by the head.
    """
    reports = []
    for head in heads:
        cfg = head_config(base, head)
        _logger.info(f"Head comparison: {head} with {cfg.resolved_experts} experts")
        reports.append(run_experiment(cfg, data, name=head, workers=workers, final=False).report)
    return reports


def sweep_config(base: ModelConfig, n_experts: int) -> ModelConfig:
    overrides: dict = {"n_experts": n_experts}
    if base.head == "sparse_moe":
        overrides["k"] = min(base.k, n_experts)
    return derive_config(base, **overrides)


def expert_sweep(
    base: ModelConfig,
    data: Dataset,
    experts: Sequence[int] = DEFAULT_EXPERTS,
    workers: int | None = None,
) -> list[tuple[int, RunReport]]:
    """Cross-validated reports for each expert count; sparse heads cap k at the count."""
    results = []
    for n in experts:
        cfg = sweep_config(base, n)
        report = run_experiment(cfg, data, name=f"{base.head}_n{n}", workers=workers, final=False)
        results.append((n, report.report))
    return results


def render_sweep(results: Sequence[tuple[int, RunReport]]) -> str:
    """Accuracy (mean ± std, percent) against the number of experts."""
    rows = [("Experts", "Accuracy")]
    for n, report in results:
        acc = report.aggregate.get("accuracy") if report.aggregate else None
        rows.append((str(n), str(acc) if acc is not None else "n/a"))
    width = max(len(r[0]) for r in rows)
    lines = [f"{a.ljust(width)}  {b}" for a, b in rows]
    lines.insert(1, "-" * width + "  " + "-" * max(len(r[1]) for r in rows))
    return "\n".join(lines)
