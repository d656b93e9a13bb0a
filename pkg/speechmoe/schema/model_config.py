try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal, Tuple

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from speechmoe.constants import EMBEDDING_DIM, HEAD_HIDDEN, IMAGE_SIZE
from speechmoe.errors import ValidationError
from speechmoe.globals import Globals
from speechmoe.logger import get_logger

from .encoder_config import EncoderConfig, EncoderTopology
from .fusion_config import BlockFusionConfig
from .head_config import AnyHeadConfig, DenseHeadConfig, MuMoEConfig, SparseMoEConfig

_logger = get_logger()

InputMode = Literal["both", "read_only", "interview_only"]
FusionMode = Literal["block", "concat", "none"]
HeadKind = Literal["sparse_moe", "cp_mumoe", "tr_mumoe", "dense_mumoe", "dense128"]

# NOTE: defaults are the experimental setup values; the config file overrides them key by key
SPARSE_DEFAULT_EXPERTS = 4
MUMOE_DEFAULT_EXPERTS = 3


class ModelConfig(BaseModel):
    """Full architecture, training hyperparameters and ablation switches."""

    model_config = ConfigDict(extra="forbid")

    # architecture
    inputs: InputMode = Field(default="both", description="Speech tasks fed to the model")
    fusion: FusionMode = Field(default="block", description="How the two branches are combined")
    fusion_normalize: bool = Field(default=True, description="Signed-sqrt + L2 inside BLOCK")
    encoder_topology: EncoderTopology = Field(default="tiny")
    encoder_shared: bool = Field(default=True, description="One encoder for both branches")
    embedding_dim: int = Field(default=EMBEDDING_DIM, ge=1)
    image_size: int = Field(default=IMAGE_SIZE, ge=8)
    head: HeadKind = Field(default="tr_mumoe")
    n_experts: int | None = Field(default=None, ge=1, description="4 for sparse_moe, 3 for μMoE")
    k: int = Field(default=3, ge=1, description="Experts kept by the sparse gate")
    expert_hidden: int = Field(default=256, ge=1)
    head_out: int = Field(default=HEAD_HIDDEN, ge=1)
    cp_rank: int = Field(default=4, ge=1)
    tr_ranks: Tuple[int, int, int] = Field(default=(4, 4, 4))

    # training
    alpha: float = Field(default=0.1, ge=0.0, description="Weight of the auxiliary MoE losses")
    lr: float = Field(default=1e-4, gt=0.0)
    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=8, ge=1)
    folds: int = Field(default=5, ge=2)
    runs: int = Field(default=4, ge=1)
    seed: int = Field(default_factory=lambda: Globals().default_seed)
    fit_final: bool = Field(default=True, description="Fit one model on all subjects after CV")

    # data
    manifest: str | None = Field(default=None, description="Dataset manifest CSV")
    features: str | None = Field(default=None, description="Precomputed feature container")

    @model_validator(mode="after")
    def check_coupling(self) -> "ModelConfig":
        single = self.inputs != "both"
        if single and self.fusion != "none":
            raise ValueError(f"inputs={self.inputs!r} uses one branch, so fusion must be 'none'")
        if not single and self.fusion == "none":
            raise ValueError("fusion='none' is only valid with a single input branch")
        if self.fusion == "block" and self.embedding_dim % 8 != 0:
            raise ValueError(
                f"block fusion splits the embedding into 8 chunks; embedding_dim "
                f"({self.embedding_dim}) must be divisible by 8"
            )
        if self.head == "sparse_moe" and self.k > self.resolved_experts:
            raise ValueError(
                f"k ({self.k}) must not exceed n_experts ({self.resolved_experts})"
            )
        return self

    @property
    def resolved_experts(self) -> int:
        if self.n_experts is not None:
            return self.n_experts
        return SPARSE_DEFAULT_EXPERTS if self.head == "sparse_moe" else MUMOE_DEFAULT_EXPERTS

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            topology=self.encoder_topology,
            embedding_dim=self.embedding_dim,
            shared_weights=self.encoder_shared,
            image_size=self.image_size,
        )

    def fusion_config(self) -> BlockFusionConfig:
        # chunk output sized so K chunks always tile the embedding
        return BlockFusionConfig(
            input_dims=(self.embedding_dim, self.embedding_dim),
            output_dim=self.embedding_dim,
            chunk_out_dim=self.embedding_dim // 8,
            normalize=self.fusion_normalize,
        )

    def head_config(self) -> AnyHeadConfig:
        common = dict(input_dim=self.embedding_dim, out_dim=self.head_out)
        match self.head:
            case "sparse_moe":
                return SparseMoEConfig(
                    **common,
                    n_experts=self.resolved_experts,
                    k=self.k,
                    expert_hidden=self.expert_hidden,
                )
            case "dense128":
                return DenseHeadConfig(**common)
            case _:
                variant = self.head.split("_")[0]
                return MuMoEConfig(
                    **common,
                    variant=variant,
                    n_experts=self.resolved_experts,
                    cp_rank=self.cp_rank,
                    tr_ranks=self.tr_ranks,
                )

    def uses_aux_loss(self) -> bool:
        return self.head == "sparse_moe"


def load_config(path: str | Path) -> ModelConfig:
    """
    Read a flat TOML config file into a validated ModelConfig.

    Relative `manifest`/`features` paths are resolved against the config file's directory.

    Raises:
        ValidationError: unreadable TOML, unknown keys, or out-of-range values
    """
    path = Path(path)
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"{path}: invalid TOML: {e}")

    nested = [key for key, value in raw.items() if isinstance(value, dict)]
    if nested:
        raise ValidationError(f"{path}: config is flat, found table(s) {nested}")
    for key in ("manifest", "features"):
        if isinstance(raw.get(key), str) and not Path(raw[key]).is_absolute():
            raw[key] = str((path.parent / raw[key]).resolve())
    try:
        cfg = ModelConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<config>'}: {err['msg']}"
            for err in e.errors()
        )
        raise ValidationError(f"{path}: {problems}")
    _logger.debug(f"Loaded config {path}: {cfg.model_dump()}")
    return cfg


def dump_config(cfg: ModelConfig) -> str:
    """Render a config back to flat TOML (None values omitted)."""
    lines = []
    for key, value in cfg.model_dump(exclude_none=True).items():
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        elif isinstance(value, (list, tuple)):
            rendered = "[" + ", ".join(str(v) for v in value) + "]"
        else:
            rendered = repr(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
