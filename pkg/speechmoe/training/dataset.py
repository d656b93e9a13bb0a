from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from speechmoe.audio import featurize_file
from speechmoe.constants import IMAGE_SIZE, N_CHANNELS, TASKS
from speechmoe.errors import ContainerError, ShapeError, ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import ManifestEntry, ModelConfig
from speechmoe.utils import check_tasks, parse_manifest, read_container, write_container

_logger = get_logger()


def feature_key(subject_id: str, task: str) -> str:
    return f"{subject_id}/{task}"


def _featurize_job(job: tuple[str, str, int]) -> np.ndarray:
    path, task, size = job
    return featurize_file(path, task, size).channels


def featurize_manifest(
    entries: Sequence[ManifestEntry],
    tasks: Sequence[str] = TASKS,
    size: int = IMAGE_SIZE,
    workers: int = 1,
) -> dict[str, np.ndarray]:
    """
    FeatureImage channels for every (subject, task), keyed `subject/task` in manifest order.

    Files may be processed in parallel; the result order never depends on completion order.
    """
    check_tasks(entries, tasks)
    keys, jobs = [], []
    for entry in entries:
        for task in tasks:
            keys.append(feature_key(entry.subject_id, task))
            jobs.append((getattr(entry, f"{task}_path"), task, size))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(_featurize_job, jobs))
    else:
        images = [_featurize_job(job) for job in jobs]
    _logger.info(f"Featurized {len(jobs)} recordings of {len(entries)} subjects")
    return dict(zip(keys, images))


def write_features(path: str | Path, features: dict[str, np.ndarray]) -> Path:
    return write_container(path, features)


class Dataset:
    """Per-subject feature images (N×3×S×S per task) with 0/1 labels, in manifest order."""

    def __init__(
        self,
        entries: Sequence[ManifestEntry],
        reading: np.ndarray | None,
        interview: np.ndarray | None,
    ):
        self.entries = list(entries)
        self.labels = np.array([e.target for e in self.entries], dtype=np.int64)
        self.reading = reading
        self.interview = interview
        for name, images in (("reading", reading), ("interview", interview)):
            if images is not None and images.shape[0] != len(self.entries):
                raise ShapeError(
                    f"{name} images: {images.shape[0]} rows for {len(self.entries)} subjects"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def batch(self, index: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray]:
        read = self.reading[index] if self.reading is not None else None
        inter = self.interview[index] if self.interview is not None else None
        return read, inter, self.labels[index]

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        """Copy with replaced labels (label-permutation sanity checks)."""
        labels = np.asarray(labels, dtype=np.int64)
        relabeled = [
            e.model_copy(update={"label": "depression" if y == 1 else "control"})
            for e, y in zip(self.entries, labels)
        ]
        return Dataset(relabeled, self.reading, self.interview)

    @classmethod
    def from_features(
        cls,
        entries: Sequence[ManifestEntry],
        features: dict[str, np.ndarray],
        tasks: Sequence[str] = TASKS,
        size: int = IMAGE_SIZE,
    ) -> "Dataset":
        """
        Raises:
            ContainerError: a subject/task image is missing from `features`
            ShapeError: an image is not 3×size×size
        """
        stacked: dict[str, np.ndarray | None] = {t: None for t in TASKS}
        for task in tasks:
            images = []
            for entry in entries:
                key = feature_key(entry.subject_id, task)
                if key not in features:
                    raise ContainerError(f"feature container has no entry {key!r}")
                image = features[key]
                if image.shape != (N_CHANNELS, size, size):
                    raise ShapeError(
                        f"feature {key!r} has shape {image.shape}, "
                        f"expected {(N_CHANNELS, size, size)}"
                    )
                images.append(image)
            stacked[task] = np.stack(images)
        return cls(entries, stacked["reading"], stacked["interview"])


def config_tasks(cfg: ModelConfig) -> tuple[str, ...]:
    match cfg.inputs:
        case "read_only":
            return ("reading",)
        case "interview_only":
            return ("interview",)
        case _:
            return TASKS


def load_dataset(
    cfg: ModelConfig, workers: int = 1, tasks: Sequence[str] | None = None
) -> Dataset:
    """
    Manifest entries plus feature images: read from `cfg.features` when set, featurized from
    the manifest's audio otherwise.
    """
    if cfg.manifest is None:
        raise ValidationError("config has no manifest")
    entries = parse_manifest(cfg.manifest)
    tasks = config_tasks(cfg) if tasks is None else tuple(tasks)
    if cfg.features is not None:
        features = read_container(cfg.features)
    else:
        features = featurize_manifest(entries, tasks, cfg.image_size, workers)
    return Dataset.from_features(entries, features, tasks, cfg.image_size)
