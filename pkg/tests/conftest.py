import numpy as np
import pytest

from speechmoe.schema import ManifestEntry, ModelConfig, SyntheticSpec
from speechmoe.tensor import RngStream
from speechmoe.training import Dataset

SMALL_IMAGE = 64


@pytest.fixture
def rng() -> RngStream:
    return RngStream(1234)


def small_config(**overrides) -> ModelConfig:
    """A model small enough to train in a unit test."""
    values = dict(
        image_size=SMALL_IMAGE,
        embedding_dim=16,
        head_out=8,
        expert_hidden=8,
        epochs=2,
        batch_size=4,
        folds=2,
        runs=1,
        lr=1e-3,
        seed=3,
        fit_final=False,
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def small_cfg() -> ModelConfig:
    return small_config()


def toy_dataset(n_subjects: int = 12, size: int = SMALL_IMAGE, seed: int = 0) -> Dataset:
    """Random feature images whose brightness depends on the label."""
    stream = RngStream(seed)
    labels = ["control", "depression"] * (n_subjects // 2)
    entries = [
        ManifestEntry(subject_id=f"s{i:03d}", label=label) for i, label in enumerate(labels)
    ]
    shift = np.array([0.0 if label == "control" else 0.5 for label in labels])[:, None, None, None]
    shape = (n_subjects, 3, size, size)
    reading = np.clip(stream.split("r").uniform(0.0, 0.5, shape) + shift, 0.0, 1.0)
    interview = np.clip(stream.split("i").uniform(0.0, 0.5, shape) + shift, 0.0, 1.0)
    return Dataset(entries, reading, interview)


@pytest.fixture
def toy_data() -> Dataset:
    return toy_dataset()


@pytest.fixture
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(n_subjects=6, duration=1.0, seed=11)


@pytest.fixture
def make_config():
    return small_config


@pytest.fixture
def make_dataset():
    return toy_dataset
