from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from speechmoe.constants import EMBEDDING_DIM


class BlockFusionConfig(BaseModel):
    """Block-term bilinear fusion hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    input_dims: Tuple[int, int] = Field(default=(EMBEDDING_DIM, EMBEDDING_DIM))
    projected_dim: int = Field(default=256, ge=1, description="Projection size per input")
    num_chunks: int = Field(default=8, ge=1, description="Number of blocks K")
    chunk_out_dim: int = Field(default=96, ge=1, description="Output size of each block core")
    output_dim: int = Field(default=EMBEDDING_DIM, ge=1, description="Fused vector length d")
    normalize: bool = Field(default=True, description="Signed square root then L2 before proj_out")

    @model_validator(mode="after")
    def check_blocks(self) -> "BlockFusionConfig":
        if self.projected_dim % self.num_chunks != 0:
            raise ValueError(
                f"projected_dim ({self.projected_dim}) must be divisible by "
                f"num_chunks ({self.num_chunks})"
            )
        if self.num_chunks * self.chunk_out_dim != self.output_dim:
            raise ValueError(
                f"num_chunks * chunk_out_dim ({self.num_chunks} * {self.chunk_out_dim}) "
                f"must equal output_dim ({self.output_dim})"
            )
        return self

    @property
    def chunk_in_dim(self) -> int:
        return self.projected_dim // self.num_chunks
