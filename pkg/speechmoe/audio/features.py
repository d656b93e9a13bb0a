from pathlib import Path
from typing import Literal

import librosa
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.ndimage import map_coordinates

from speechmoe.audio.io import Waveform, load_audio
from speechmoe.constants import (
    AMIN,
    DELTA_WIDTH,
    HOP_LENGTH,
    IMAGE_SIZE,
    N_CHANNELS,
    N_FFT,
    N_MELS,
    TOP_DB,
)
from speechmoe.errors import AudioError, ShapeError, ValidationError
from speechmoe.logger import get_logger

_logger = get_logger()

Task = Literal["reading", "interview"]


class FeatureImage(BaseModel):
    """3×S×S image: log-Mel, Δ and ΔΔ channels, each min-max normalized to [0, 1]."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    channels: np.ndarray
    source_task: Task

    @field_validator("channels", mode="before")
    def check_channels(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != N_CHANNELS or v.shape[1] != v.shape[2]:
            raise ValueError(f"feature image must be {N_CHANNELS}×S×S, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature image has non-finite values")
        return v

    @property
    def shape(self) -> tuple[int, ...]:
        return self.channels.shape


def log_mel(w: Waveform) -> np.ndarray:
    """
    N_MELS × T dB-scaled Mel power spectrogram.

    Centered Hann STFT (n_fft 2048, hop 512, reflection padding), Slaney Mel filterbank from
    0 Hz to Nyquist, 10·log10(max(S, 1e-10)) relative to the matrix maximum and clipped 80 dB
    below it. A spectrogram with no energy above 1e-10 is returned at the -80 dB floor.

    Raises:
        AudioError: the waveform is shorter than half a window, so reflection padding fails
    """
    if len(w) <= N_FFT // 2:
        raise AudioError(
            f"waveform of {len(w)} samples is shorter than one analysis window after padding"
        )
    power = librosa.feature.melspectrogram(
        y=w.samples,
        sr=w.sample_rate,
        n_fft=N_FFT,
        hop_length=HOP_LENGTH,
        window="hann",
        center=True,
        pad_mode="reflect",
        power=2.0,
        n_mels=N_MELS,
        fmin=0.0,
        fmax=w.sample_rate / 2.0,
        htk=False,
        norm="slaney",
    )
    if power.max() <= AMIN:
        return np.full(power.shape, -TOP_DB)
    return librosa.power_to_db(power, ref=np.max, amin=AMIN, top_db=TOP_DB)


def delta(features: np.ndarray, order: Literal[1, 2] = 1) -> np.ndarray:
    """Least-squares slope over a 9-frame window along time, edges replicated; order 2 repeats it."""
    if order not in (1, 2):
        raise ValidationError(f"delta order must be 1 or 2, got {order}")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] < 1:
        raise ShapeError(f"delta expects a B×T matrix with T >= 1, got shape {features.shape}")
    out = features
    for _ in range(order):
        out = librosa.feature.delta(out, width=DELTA_WIDTH, order=1, axis=-1, mode="nearest")
    return out


def resize(matrix: np.ndarray, shape: tuple[int, int] = (IMAGE_SIZE, IMAGE_SIZE)) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling: output corners hit input corners exactly."""
    matrix = np.asarray(matrix, dtype=np.float64)
    rows = np.linspace(0.0, matrix.shape[0] - 1, shape[0])
    cols = np.linspace(0.0, matrix.shape[1] - 1, shape[1])
    grid = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(matrix, grid, order=1, mode="nearest")


def minmax_normalize(channel: np.ndarray) -> np.ndarray:
    lo, hi = float(channel.min()), float(channel.max())
    if hi == lo:
        return np.zeros_like(channel)
    return (channel - lo) / (hi - lo)


def make_feature_image(w: Waveform, task: Task, size: int = IMAGE_SIZE) -> FeatureImage:
    mel = log_mel(w)
    stacked = [mel, delta(mel, 1), delta(mel, 2)]
    channels = np.stack([minmax_normalize(resize(c, (size, size))) for c in stacked])
    return FeatureImage(channels=channels, source_task=task)


def featurize_file(path: str | Path, task: Task, size: int = IMAGE_SIZE) -> FeatureImage:
    image = make_feature_image(load_audio(path), task, size)
    _logger.debug(f"Featurized {path} ({task}) -> {image.shape}")
    return image
