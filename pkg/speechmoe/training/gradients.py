from typing import Callable, Literal

import numpy as np

from speechmoe.components import BlockFusion, Module, build_encoder, build_head, build_model
from speechmoe.constants import N_CHANNELS
from speechmoe.errors import ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import ModelConfig
from speechmoe.tensor import GradcheckReport, RngStream, Tensor, cross_entropy, gradcheck

_logger = get_logger()

Component = Literal["head", "fusion", "encoder", "model"]


def _projected_loss(module: Module, inputs: tuple[Tensor, ...], rng: RngStream) -> Callable[[], Tensor]:
    """Scalar loss <module(inputs), w> with a fixed random w."""
    out = module(*inputs)
    weights = Tensor(rng.standard_normal(out.shape))
    return lambda: (module(*inputs) * weights).sum()


def gradcheck_component(
    cfg: ModelConfig,
    component: Component = "head",
    batch: int = 4,
    tolerance: float = 1e-4,
    n_coords: int = 50,
    seed: int | None = None,
) -> GradcheckReport:
    """
    Finite-difference check of one building block of `cfg` on a random batch.

    Heads are checked through cross-entropy in eval mode, so the sparse gate runs without
    noise; the other components through a fixed random projection of their output.
    """
    rng = RngStream(cfg.seed if seed is None else seed).split("gradcheck")
    labels = np.arange(batch) % 2
    dim = cfg.embedding_dim
    side = cfg.image_size

    match component:
        case "head":
            module = build_head(cfg.head_config(), rng.split("init"))
            z = Tensor(rng.split("z").standard_normal((batch, dim)))

            def loss_fn():
                return cross_entropy(module(z, "eval").logits, labels)

        case "fusion":
            module = BlockFusion(cfg.fusion_config(), rng.split("init"))
            x = Tensor(rng.split("x").standard_normal((batch, dim)))
            y = Tensor(rng.split("y").standard_normal((batch, dim)))
            loss_fn = _projected_loss(module, (x, y), rng.split("w"))
        case "encoder":
            module = build_encoder(cfg.encoder_config(), rng.split("init"))
            images = Tensor(rng.split("images").uniform(0.0, 1.0, (batch, N_CHANNELS, side, side)))
            loss_fn = _projected_loss(module, (images,), rng.split("w"))
        case "model":
            module = build_model(cfg, rng.split("init"))
            shape = (batch, N_CHANNELS, side, side)
            read = Tensor(rng.split("read").uniform(0.0, 1.0, shape))
            inter = Tensor(rng.split("inter").uniform(0.0, 1.0, shape))

            def loss_fn():
                return cross_entropy(module(read, inter, "eval").logits, labels)

        case _:
            raise ValidationError(f"Unknown gradcheck component: {component}")

    # relu, max pooling and the signed square root need a finer step than the smooth heads
    step = 1e-5 if component == "head" else 1e-7
    report = gradcheck(
        loss_fn, module.parameters(), tolerance, n_coords, rng.split("coords"), step=step
    )
    _logger.info(
        f"gradcheck {component} ({cfg.head}): max rel. err {report.worst:.3e} "
        f"over {len(report.max_rel_error)} parameters"
    )
    return report
