from math import gcd
from pathlib import Path

import numpy as np
import soundfile as sf
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.signal import resample_poly

from speechmoe.constants import SAMPLE_RATE
from speechmoe.errors import AudioError
from speechmoe.logger import get_logger
from speechmoe.utils.path import ensure_parent

_logger = get_logger()

SUPPORTED_FORMATS = ("WAV", "WAVEX")
SUPPORTED_SUBTYPES = ("PCM_16", "FLOAT")


class Waveform(BaseModel):
    """Mono float64 samples in [-1, 1] at `sample_rate` Hz."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray
    sample_rate: int = Field(default=SAMPLE_RATE, gt=0)

    @field_validator("samples", mode="before")
    def as_mono_float(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"waveform must be one-dimensional, got shape {v.shape}")
        return v

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


def resample(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling by the reduced ratio target_rate / rate."""
    if rate == target_rate:
        return samples
    g = gcd(rate, target_rate)
    return resample_poly(samples, target_rate // g, rate // g)


def load_audio(path: str | Path, target_rate: int = SAMPLE_RATE) -> Waveform:
    """
    Decode a 16-bit PCM or 32-bit float WAV into a mono Waveform at `target_rate`.

    Stereo channels are averaged, integer samples are scaled to [-1, 1].

    Raises:
        AudioError: missing or unreadable file, unsupported encoding
    """
    path = Path(path)
    if not path.is_file():
        raise AudioError(f"audio file not found: {path}")
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioError(f"cannot read audio file {path}: {e}")
    if info.format not in SUPPORTED_FORMATS or info.subtype not in SUPPORTED_SUBTYPES:
        raise AudioError(
            f"{path}: unsupported encoding {info.format}/{info.subtype} "
            f"(expected WAV with {' or '.join(SUPPORTED_SUBTYPES)})"
        )
    data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    samples = data.mean(axis=1)
    samples = resample(samples, int(rate), target_rate)
    _logger.debug(f"Loaded {path}: {info.channels} channel(s) at {rate} Hz -> {samples.size} samples")
    return Waveform(samples=samples, sample_rate=target_rate)


def write_wav(
    path: str | Path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE, subtype: str = "PCM_16"
) -> Path:
    """Write mono (T,) or multi-channel (T, C) samples in [-1, 1]."""
    if subtype not in SUPPORTED_SUBTYPES:
        raise AudioError(f"unsupported WAV subtype {subtype!r}")
    path = ensure_parent(path)
    data = np.asarray(samples, dtype=np.float64)
    if subtype == "PCM_16":
        # round-to-nearest int16
        data = np.round(np.clip(data, -1.0, 1.0) * 32767.0).astype("<i2")
    else:
        data = data.astype("<f4")
    sf.write(str(path), data, sample_rate, subtype=subtype, format="WAV")
    return path
