import numpy as np
import pytest

from speechmoe.schema import ModelConfig, SyntheticSpec
from speechmoe.tensor import RngStream
from speechmoe.training import expert_sweep, load_dataset, render_sweep, run_experiment, train_fold
from speechmoe.utils.synth import synth_dataset

pytestmark = pytest.mark.slow

WORKERS = 4


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    spec = SyntheticSpec(n_subjects=40, noise_level=0.05, seed=7)
    return synth_dataset(spec, tmp_path_factory.mktemp("synth"))


@pytest.fixture(scope="module")
def benchmark_cfg(manifest) -> ModelConfig:
    return ModelConfig(
        head="tr_mumoe",
        fusion="block",
        encoder_topology="tiny",
        encoder_shared=True,
        epochs=30,
        batch_size=8,
        lr=1e-4,
        folds=5,
        runs=4,
        seed=7,
        fit_final=False,
        manifest=str(manifest),
    )


@pytest.fixture(scope="module")
def benchmark_data(benchmark_cfg):
    return load_dataset(benchmark_cfg, workers=WORKERS)


@pytest.fixture(scope="module")
def benchmark_report(benchmark_cfg, benchmark_data):
    return run_experiment(benchmark_cfg, benchmark_data, name="proposed", workers=WORKERS).report


class TestSyntheticBenchmark:
    """Full cross-validation on the seeded tone dataset"""

    def test_accuracy(self, benchmark_report):
        accuracies = [e.metrics.accuracy for e in benchmark_report.entries]
        assert len(accuracies) == 20
        assert np.mean(accuracies) >= 0.95

    def test_worker_count_does_not_change_report(self, benchmark_cfg, benchmark_data, benchmark_report):
        again = run_experiment(benchmark_cfg, benchmark_data, name="proposed", workers=1).report
        assert again.entries == benchmark_report.entries
        assert again.aggregate == benchmark_report.aggregate
        assert again.config == benchmark_report.config

    def test_expert_sweep_table(self, benchmark_cfg, benchmark_data):
        cfg = benchmark_cfg.model_copy(update={"runs": 1, "epochs": 10})
        results = expert_sweep(cfg, benchmark_data, workers=WORKERS)
        assert [n for n, _ in results] == [2, 4, 8, 16]
        lines = render_sweep(results).splitlines()
        assert len(lines) == 6
        assert all("±" in line for line in lines[2:])

    def test_shuffled_labels_fall_to_chance(self, benchmark_cfg, benchmark_data):
        labels = benchmark_data.labels[RngStream(99).permutation(len(benchmark_data))]
        shuffled = benchmark_data.with_labels(labels)
        # mean over all 20 folds of the 4 runs
        report = run_experiment(benchmark_cfg, shuffled, name="shuffled", workers=WORKERS).report
        assert 35.0 <= report.aggregate["accuracy"].mean <= 65.0

    def test_epoch_loss_mostly_decreases(self, benchmark_cfg, benchmark_data):
        _, outcome = train_fold(benchmark_cfg, benchmark_data, run=0, fold=0)
        epochs = np.array([s.epoch for s in outcome.steps])
        totals = np.array([s.total for s in outcome.steps])
        averages = [totals[epochs == e].mean() for e in range(benchmark_cfg.epochs)]
        increases = sum(b > a for a, b in zip(averages, averages[1:]))
        # the first epoch has no predecessor, so at most 5 of 30 may go up
        assert increases <= 5, averages
