from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from speechmoe.constants import EMBEDDING_DIM, HEAD_HIDDEN, N_CLASSES


class HeadConfig(BaseModel):
    """Fields shared by every classification head."""

    model_config = ConfigDict(extra="forbid")

    input_dim: int = Field(default=EMBEDDING_DIM, ge=1, description="I: fused vector length")
    out_dim: int = Field(default=HEAD_HIDDEN, ge=1, description="O: size fed to the output layer")
    n_classes: int = Field(default=N_CLASSES, ge=2)


class SparseMoEConfig(HeadConfig):
    """Sparsely-gated MoE with noisy top-k gating over MLP experts."""

    kind: Literal["sparse_moe"] = "sparse_moe"
    n_experts: int = Field(default=4, ge=1)
    k: int = Field(default=3, ge=1, description="Experts kept per input")
    expert_hidden: int = Field(default=256, ge=1)

    @model_validator(mode="after")
    def check_k(self) -> "SparseMoEConfig":
        if self.k > self.n_experts:
            raise ValueError(f"k ({self.k}) must not exceed n_experts ({self.n_experts})")
        return self


class MuMoEConfig(HeadConfig):
    """Multilinear MoE; `variant` selects the dense, CP or tensor-ring weight tensor."""

    kind: Literal["mumoe"] = "mumoe"
    variant: Literal["dense", "cp", "tr"] = "tr"
    n_experts: int = Field(default=3, ge=1, description="N")
    cp_rank: int = Field(default=4, ge=1, description="R of the CP factorization")
    tr_ranks: Tuple[int, int, int] = Field(default=(4, 4, 4), description="R1, R2, R3 of the ring")

    @model_validator(mode="after")
    def check_ranks(self) -> "MuMoEConfig":
        if any(r < 1 for r in self.tr_ranks):
            raise ValueError(f"tr_ranks must be positive, got {self.tr_ranks}")
        return self


class DenseHeadConfig(HeadConfig):
    """MoE removed: one dense layer of `out_dim` units."""

    kind: Literal["dense128"] = "dense128"


AnyHeadConfig = SparseMoEConfig | MuMoEConfig | DenseHeadConfig
