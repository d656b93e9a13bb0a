from pathlib import Path

import numpy as np

from speechmoe.audio.io import write_wav
from speechmoe.constants import SAMPLE_RATE, TASKS
from speechmoe.logger import get_logger
from speechmoe.schema import ManifestEntry, SyntheticSpec
from speechmoe.tensor import RngStream
from speechmoe.utils.manifest import write_manifest
from speechmoe.utils.path import mkdir

_logger = get_logger()

MANIFEST_NAME = "manifest.csv"
AUDIO_DIR = "audio"


def tone_mixture(
    freqs: tuple[float, ...], duration: float, noise_level: float, rng: RngStream
) -> np.ndarray:
    """Sum of sines with random phases and amplitudes plus white Gaussian noise."""
    t = np.arange(int(round(duration * SAMPLE_RATE))) / SAMPLE_RATE
    signal = np.zeros_like(t)
    for f in freqs:
        amplitude = rng.uniform(0.15, 0.35, ())
        phase = rng.uniform(0.0, 2.0 * np.pi, ())
        signal += amplitude * np.sin(2.0 * np.pi * f * t + phase)
    if noise_level > 0:
        signal += noise_level * rng.standard_normal(t.shape)
    return np.clip(signal, -1.0, 1.0)


def synth_labels(spec: SyntheticSpec) -> list[str]:
    n_depression = int(round(spec.n_subjects * spec.class_balance))
    labels = ["control"] * (spec.n_subjects - n_depression) + ["depression"] * n_depression
    order = RngStream(spec.seed).split("labels").permutation(spec.n_subjects)
    return [labels[i] for i in order]


def synth_dataset(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """
    Write a seeded two-class tone dataset: one reading and one interview WAV per subject plus
    `manifest.csv` with paths relative to `out_dir`. Output bytes depend only on `spec`.
    """
    out_dir = mkdir(out_dir)
    mkdir(out_dir / AUDIO_DIR)
    root = RngStream(spec.seed)
    entries = []
    for index, label in enumerate(synth_labels(spec)):
        subject = f"s{index:03d}"
        paths = {}
        for task_index, task in enumerate(TASKS):
            rel = f"{AUDIO_DIR}/{subject}_{task}.wav"
            samples = tone_mixture(
                spec.tones[label][task_index],
                spec.duration,
                spec.noise_level,
                root.split("subject", index, task_index),
            )
            write_wav(out_dir / rel, samples)
            paths[f"{task}_path"] = rel
        entries.append(ManifestEntry(subject_id=subject, label=label, **paths))

    manifest = write_manifest(out_dir / MANIFEST_NAME, entries)
    _logger.info(
        f"Synthesized {len(entries)} subjects ({2 * len(entries)} WAV files) under {out_dir}"
    )
    return manifest
