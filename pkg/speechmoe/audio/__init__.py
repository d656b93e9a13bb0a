from .io import Waveform, load_audio, resample, write_wav
from .features import (
    FeatureImage,
    delta,
    featurize_file,
    log_mel,
    make_feature_image,
    minmax_normalize,
    resize,
)

__all__ = [
    "Waveform",
    "load_audio",
    "resample",
    "write_wav",
    "FeatureImage",
    "log_mel",
    "delta",
    "resize",
    "minmax_normalize",
    "make_feature_image",
    "featurize_file",
]
