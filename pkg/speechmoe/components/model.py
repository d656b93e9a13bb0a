from typing_extensions import override

from speechmoe.components.base import Module
from speechmoe.components.encoder import Encoder, build_encoder, encode_pair
from speechmoe.components.fusion import BlockFusion, ConcatFusion
from speechmoe.components.heads import Head, HeadOutput, Mode, build_head
from speechmoe.errors import ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import ModelConfig
from speechmoe.tensor import RngStream, Tensor

_logger = get_logger()


class DepressionModel(Module):
    """
    Two-branch classifier: reading and interview feature images are embedded, fused and
    classified by the configured head.

    Single-task configs build only the branch they use and feed its embedding straight to the
    head. With `encoder_shared`, `enc_read` and `enc_int` are the same object.
    """

    def __init__(self, config: ModelConfig, rng: RngStream):
        super().__init__(config=config)
        enc_cfg = config.encoder_config()
        self.enc_read: Encoder | None = None
        self.enc_int: Encoder | None = None
        if config.inputs in ("both", "read_only"):
            self.enc_read = build_encoder(enc_cfg, rng.split("enc_read"))
        if config.inputs in ("both", "interview_only"):
            if config.encoder_shared and self.enc_read is not None:
                self.enc_int = self.enc_read
            else:
                self.enc_int = build_encoder(enc_cfg, rng.split("enc_int"))

        match config.fusion:
            case "block":
                self.fusion = BlockFusion(config.fusion_config(), rng.split("fusion"))
            case "concat":
                dims = (config.embedding_dim, config.embedding_dim)
                self.fusion = ConcatFusion(dims, config.embedding_dim, rng.split("fusion"))
            case "none":
                self.fusion = None
            case _:
                raise ValidationError(f"Unknown fusion mode: {config.fusion}")

        self.head: Head = build_head(config.head_config(), rng.split("head"))
        self.name_parameters()

    def embed(self, f_read: Tensor | None, f_int: Tensor | None) -> Tensor:
        """Fused (or single-branch) representation fed to the head."""
        match self.config.inputs:
            case "read_only":
                return self.enc_read(_require(f_read, "reading"))
            case "interview_only":
                return self.enc_int(_require(f_int, "interview"))
        x, y = encode_pair(
            self.enc_read, self.enc_int, _require(f_read, "reading"), _require(f_int, "interview")
        )
        return self.fusion(x, y)

    @override
    def forward(
        self,
        f_read: Tensor | None,
        f_int: Tensor | None,
        mode: Mode = "eval",
        rng: RngStream | None = None,
    ) -> HeadOutput:
        return self.head(self.embed(f_read, f_int), mode, rng)


def _require(images: Tensor | None, task: str) -> Tensor:
    if images is None:
        raise ValidationError(f"the model needs {task} feature images")
    return images


def build_model(cfg: ModelConfig, rng: RngStream) -> DepressionModel:
    """
    Assemble encoders, fusion and head for `cfg`, each initialized from its own child of `rng`.

    Raises:
        ValidationError: an unknown fusion mode or head kind
    """
    model = DepressionModel(cfg, rng)
    _logger.debug(
        f"Built model inputs={cfg.inputs} fusion={cfg.fusion} head={cfg.head}: "
        f"{model.num_parameters()} parameters"
    )
    return model
