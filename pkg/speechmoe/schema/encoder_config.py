from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from speechmoe.constants import EMBEDDING_DIM, IMAGE_SIZE

EncoderTopology = Literal["tiny", "alexnet_like"]


class EncoderConfig(BaseModel):
    """Configuration of the image encoder shared (or not) by the two speech branches."""

    model_config = ConfigDict(extra="forbid")

    topology: EncoderTopology = Field(default="tiny", description="Convolutional layer plan")
    embedding_dim: int = Field(default=EMBEDDING_DIM, ge=1, description="Output vector length")
    shared_weights: bool = Field(
        default=True, description="Reading and interview branches use one parameter set"
    )
    image_size: int = Field(
        default=IMAGE_SIZE, ge=8, description="Side of the square input image"
    )
