from .encoder_config import EncoderConfig
from .fusion_config import BlockFusionConfig
from .head_config import DenseHeadConfig, HeadConfig, MuMoEConfig, SparseMoEConfig
from .model_config import ModelConfig, load_config, dump_config
from .records import (
    FoldResult,
    ManifestEntry,
    MetricSummary,
    Metrics,
    RunReport,
    StepLog,
    SyntheticSpec,
)

__all__ = [
    "EncoderConfig",
    "BlockFusionConfig",
    "HeadConfig",
    "SparseMoEConfig",
    "MuMoEConfig",
    "DenseHeadConfig",
    "ModelConfig",
    "load_config",
    "dump_config",
    "ManifestEntry",
    "SyntheticSpec",
    "Metrics",
    "FoldResult",
    "MetricSummary",
    "RunReport",
    "StepLog",
]
