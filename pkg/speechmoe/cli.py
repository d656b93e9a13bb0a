import sys
from pathlib import Path
from typing import Sequence

import click
from pydantic import BaseModel

from speechmoe.components import build_model, export_weights, import_weights
from speechmoe.constants import IMAGE_SIZE
from speechmoe.errors import GradcheckError, SpeechMoEError, ValidationError
from speechmoe.globals import Globals
from speechmoe.logger import get_logger, set_global_logging_level
from speechmoe.schema import ModelConfig, SyntheticSpec, dump_config, load_config
from speechmoe.tensor import RngStream
from speechmoe.training import (
    HEAD_COMPARISON,
    ablation_configs,
    compare_heads,
    evaluate_model,
    expert_sweep,
    featurize_manifest,
    gradcheck_component,
    load_dataset,
    render_sweep,
    run_ablation,
    run_experiment,
    write_features,
)
from speechmoe.training.ablation import derive_config
from speechmoe.utils import mkdir, parse_manifest
from speechmoe.utils.report import emit_report, read_report, render_table
from speechmoe.utils.synth import synth_dataset

_logger = get_logger()

REPORT_NAME = "report.json"
WEIGHTS_NAME = "weights.moet"
CONFIG_ECHO = "config.toml"

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ErrorLine(BaseModel):
    """Machine-readable failure written as one JSON line on stderr."""

    error: str
    type: str
    message: str


def _report_error(kind: str, exc: BaseException) -> None:
    line = ErrorLine(error=kind, type=type(exc).__name__, message=str(exc))
    click.echo(line.model_dump_json(), err=True)


class SpeechMoEGroup(click.Group):
    """Maps library errors to exit codes: 1 for validation problems, 2 for runtime failures."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except ValidationError as e:
            _report_error("validation", e)
            raise click.exceptions.Exit(EXIT_VALIDATION)
        except SpeechMoEError as e:
            _report_error("runtime", e)
            raise click.exceptions.Exit(EXIT_RUNTIME)
        except Exception as e:
            _logger.exception("Unexpected failure")
            _report_error("runtime", e)
            raise click.exceptions.Exit(EXIT_RUNTIME)

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            _report_error("usage", e)
            code = EXIT_VALIDATION
        except click.ClickException as e:
            e.show()
            _report_error("validation", e)
            code = EXIT_VALIDATION
        except click.Abort as e:
            _report_error("runtime", e)
            code = EXIT_RUNTIME
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=SpeechMoEGroup)
@click.option(
    "--log-level",
    type=click.Choice(["TRACE", "DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="INFO",
    show_default=True,
)
@click.option("--log-file/--no-log-file", default=False, help="Also log to logs/speechmoe.log")
def cli(log_level: str, log_file: bool):
    """Speech-based depression recognition with mixture-of-experts heads."""
    set_global_logging_level(log_level.upper(), use_file_handler=log_file)


def _workers(value: int | None) -> int:
    if value is not None:
        Globals().workers = value
    return Globals().workers


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--image-size", default=IMAGE_SIZE, show_default=True, type=click.IntRange(min=8))
@click.option("--workers", type=click.IntRange(min=1), default=None)
def featurize(manifest_path: str, out_path: str, image_size: int, workers: int | None):
    """Compute feature images for every recording of a manifest."""
    entries = parse_manifest(manifest_path)
    features = featurize_manifest(entries, size=image_size, workers=_workers(workers))
    write_features(out_path, features)
    click.echo(f"{len(features)} feature images -> {out_path}")


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-subjects", default=40, show_default=True, type=click.IntRange(min=2))
@click.option("--balance", default=0.5, show_default=True, type=float)
@click.option("--noise", "noise_level", default=0.05, show_default=True, type=float)
@click.option("--duration", default=2.0, show_default=True, type=float)
@click.option("--seed", default=7, show_default=True, type=int)
def synth(out_dir: str, n_subjects: int, balance: float, noise_level: float, duration: float, seed: int):
    """Write a seeded two-class tone dataset and its manifest."""
    try:
        spec = SyntheticSpec(
            n_subjects=n_subjects,
            class_balance=balance,
            noise_level=noise_level,
            duration=duration,
            seed=seed,
        )
    except ValueError as e:
        raise ValidationError(str(e))
    manifest = synth_dataset(spec, out_dir)
    click.echo(str(manifest))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=click.IntRange(min=1), default=None)
@click.option("--name", default="run", show_default=True)
def train(config_path: str, out_dir: str, workers: int | None, name: str):
    """Cross-validate a config, write the report and the final model's weights."""
    cfg = load_config(config_path)
    out = mkdir(out_dir)
    data = load_dataset(cfg, _workers(workers))
    result = run_experiment(cfg, data, name=name, workers=_workers(workers))
    (out / CONFIG_ECHO).write_text(dump_config(cfg), encoding="utf-8")
    emit_report(result.report, out / REPORT_NAME)
    if result.final_model is not None:
        export_weights(result.final_model, out / WEIGHTS_NAME)
    click.echo(render_table([result.report]))


@cli.command(name="eval")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--weights", "weights_path", required=True, type=click.Path(dir_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), default=None)
@click.option("--features", "features_path", type=click.Path(dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def evaluate(
    config_path: str,
    weights_path: str,
    manifest_path: str | None,
    features_path: str | None,
    out_path: str | None,
):
    """Evaluate exported weights on a manifest; prints Metrics as JSON."""
    cfg = load_config(config_path)
    if manifest_path is not None:
        cfg = derive_config(
            cfg,
            manifest=str(Path(manifest_path).resolve()),
            features=str(Path(features_path).resolve()) if features_path else None,
        )
    elif features_path is not None:
        cfg = derive_config(cfg, features=str(Path(features_path).resolve()))
    data = load_dataset(cfg)
    model = import_weights(build_model(cfg, RngStream(cfg.seed)), weights_path)
    metrics = evaluate_model(model, data)
    text = metrics.model_dump_json(indent=2)
    if out_path is not None:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option(
    "--head",
    type=click.Choice(["sparse_moe", "cp_mumoe", "tr_mumoe", "dense_mumoe", "dense128"]),
    default=None,
)
@click.option(
    "--component",
    type=click.Choice(["head", "fusion", "encoder", "model"]),
    default="head",
    show_default=True,
)
@click.option("--tolerance", default=1e-4, show_default=True, type=float)
@click.option("--coords", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--image-size", type=click.IntRange(min=8), default=None)
def gradcheck(
    config_path: str | None,
    head: str | None,
    component: str,
    tolerance: float,
    coords: int,
    image_size: int | None,
):
    """Finite-difference gradient check; prints max relative error per parameter."""
    cfg = load_config(config_path) if config_path else ModelConfig()
    overrides = {}
    if head is not None:
        overrides["head"] = head
    if image_size is not None:
        overrides["image_size"] = image_size
    if overrides:
        cfg = derive_config(cfg, **overrides)
    report = gradcheck_component(cfg, component, tolerance=tolerance, n_coords=coords)
    for name, err in report.max_rel_error.items():
        status = "ok" if err < tolerance else "FAIL"
        click.echo(f"{name}: {err:.3e} {status}")
    click.echo(f"max rel. err {report.worst:.3e} (tolerance {tolerance:g})")
    if not report.passed:
        raise GradcheckError(
            f"gradient check failed for {', '.join(report.failures())}", report.failures()
        )


@cli.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(dir_okay=False))
def report(paths: Sequence[str]):
    """Render report files as a Precision/Recall/F1/Accuracy/Specificity table."""
    click.echo(render_table([read_report(p) for p in paths]))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--only", "names", multiple=True, help="Ablation name; repeatable")
@click.option("--workers", type=click.IntRange(min=1), default=None)
def ablate(config_path: str, out_dir: str, names: tuple[str, ...], workers: int | None):
    """Cross-validate the proposed architecture and each ablation."""
    cfg = load_config(config_path)
    selected = list(names) or None
    ablation_configs(cfg, selected)
    out = mkdir(out_dir)
    data = load_dataset(cfg, _workers(workers), tasks=("reading", "interview"))
    reports = run_ablation(cfg, data, selected, _workers(workers))
    for r in reports:
        emit_report(r, out / f"{r.name}.json")
    click.echo(render_table(reports))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--head",
    "head_names",
    multiple=True,
    type=click.Choice(["sparse_moe", "cp_mumoe", "tr_mumoe", "dense_mumoe", "dense128"]),
    help="Head to compare; repeatable",
)
@click.option("--workers", type=click.IntRange(min=1), default=None)
def heads(config_path: str, out_dir: str, head_names: tuple[str, ...], workers: int | None):
    """Cross-validate each mixture head on the same folds."""
    cfg = load_config(config_path)
    out = mkdir(out_dir)
    data = load_dataset(cfg, _workers(workers))
    reports = compare_heads(cfg, data, list(head_names) or HEAD_COMPARISON, _workers(workers))
    for r in reports:
        emit_report(r, out / f"{r.name}.json")
    click.echo(render_table(reports))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--experts", default="2,4,8,16", show_default=True, help="Comma-separated counts")
@click.option("--workers", type=click.IntRange(min=1), default=None)
def sweep(config_path: str, out_dir: str, experts: str, workers: int | None):
    """Accuracy against the number of experts."""
    cfg = load_config(config_path)
    try:
        counts = [int(n) for n in experts.split(",") if n.strip()]
    except ValueError:
        raise ValidationError(f"--experts must be comma-separated integers, got {experts!r}")
    if not counts or min(counts) < 1:
        raise ValidationError(f"--experts needs positive counts, got {experts!r}")
    out = mkdir(out_dir)
    data = load_dataset(cfg, _workers(workers))
    results = expert_sweep(cfg, data, counts, _workers(workers))
    for _, r in results:
        emit_report(r, out / f"{r.name}.json")
    click.echo(render_sweep(results))


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the process exit code."""
    args = list(argv) if argv is not None else None
    return cli.main(args=args, prog_name="speechmoe", standalone_mode=False)


if __name__ == "__main__":
    sys.exit(main())
